#ifndef NEUROCODEC_PRETRAIN_HPP
#define NEUROCODEC_PRETRAIN_HPP

#include <functional>
#include <string>
#include <vector>

#include "neurocodec/checkpoint.hpp"
#include "neurocodec/optim.hpp"
#include "neurocodec/model.hpp"
#include "neurocodec/tokenizer.hpp"

namespace neurocodec {

// Deterministic boolean mask with popcount max(1, floor(r*N)).
struct MaskSpec {
  std::vector<uint8_t> bits;
  double ratio = 0.0;
  uint64_t seed = 0;

  int64_t n() const { return static_cast<int64_t>(bits.size()); }
  int64_t popcount() const;
};

MaskSpec generate_mask(int64_t n, double r, uint64_t seed);
MaskSpec invert_mask(const MaskSpec& m);

// Backbone + linear token classifier over K codes.
template <typename S>
struct PretrainModel {
  ModelConfig cfg;
  int64_t codebook_k = 0;
  ParamStore<S> params;  // backbone + mem.cls

  static PretrainModel init(const ModelConfig& cfg, int64_t codebook_k, uint64_t seed);
  std::string config_kv() const;
  void save(const std::string& path) const;
  static PretrainModel load(const std::string& path);
};

struct MemLossStats {
  double loss_sum = 0;   // sum over masked positions of -log p
  int64_t masked = 0;
  int64_t correct = 0;   // argmax == target over masked positions
};

// Corrupted forward (mask-token substitution after temporal encoding) and
// token cross-entropy over masked positions. `targets` come from the frozen
// tokenizer; no gradient flows into it. `weight` scales the returned scalar
// (batch averaging); stats report the unweighted sum.
template <typename S>
Var mem_loss(Tape<S>& tape, const VarMap& vars, const PretrainModel<S>& model,
             const PatchGrid& grid, const MaskSpec& mask, const std::vector<int>& targets,
             double weight, MemLossStats* stats);

struct PretrainBatchResult {
  double loss = 0;      // mean -log p over primary-mask positions
  double loss_sym = 0;  // same for the inverse mask (0 when disabled)
  double mem_accuracy = 0;
  double lr = 0;
};

struct PretrainOptions {
  int epochs = 10;
  int batch_size = 32;
  double mask_ratio = 0.5;
  bool symmetric = true;
  double peak_lr = 5e-4;
  double floor_lr = 1e-5;
  int warmup_epochs = 1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.05;
  double clip = 3.0;
  bool average_masked = true;  // false: raw sum per Eq.-style objective
  uint64_t seed = 0;
  int threads = 1;
  std::string csv_path;
  std::vector<std::string> csv_header;
  std::function<void(int, const PretrainBatchResult&)> on_epoch;  // epoch means
};

// One optimization step over a shape-homogeneous batch.
template <typename S>
PretrainBatchResult pretrain_step(PretrainModel<S>& model, TokenizerModel<S>& tokenizer,
                                  const std::vector<const PatchGrid*>& batch,
                                  AdamW<S>& opt, double lr, const PretrainOptions& opts,
                                  uint64_t step_seed);

struct PretrainEpochStats {
  double loss = 0;
  double loss_sym = 0;
  double mem_accuracy = 0;
  double lr = 0;
  double held_out_accuracy = -1;  // -1 when no held-out set was given
};

template <typename S>
std::vector<PretrainEpochStats> pretrain(PretrainModel<S>& model, TokenizerModel<S>& tokenizer,
                                         const std::vector<const PatchGrid*>& train,
                                         const std::vector<const PatchGrid*>& held_out,
                                         const PretrainOptions& opts);

// Held-out masked-token accuracy (no updates).
template <typename S>
double evaluate_mem_accuracy(PretrainModel<S>& model, TokenizerModel<S>& tokenizer,
                             const std::vector<const PatchGrid*>& samples,
                             const PretrainOptions& opts);

extern template struct PretrainModel<float>;
extern template struct PretrainModel<double>;

}  // namespace neurocodec

#endif

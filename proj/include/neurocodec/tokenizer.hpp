#ifndef NEUROCODEC_TOKENIZER_HPP
#define NEUROCODEC_TOKENIZER_HPP

#include <functional>
#include <string>
#include <vector>

#include "neurocodec/checkpoint.hpp"
#include "neurocodec/codebook.hpp"
#include "neurocodec/model.hpp"
#include "neurocodec/spectrum.hpp"

namespace neurocodec {

struct TokenizerConfig {
  ModelConfig enc;          // backbone; no mask token in the tokenizer
  int decoder_layers = 3;
  int64_t codebook_k = 8192;
  int64_t codebook_d = 64;
  double ema_gamma = 0.99;
  bool ema_codebook = true;  // false: pure-gradient codebook learning
  int64_t revive_age = 256;  // dead-code revival threshold, in steps

  static TokenizerConfig preset(const std::string& name);  // "base" | "tiny"
  std::string to_kv() const;
  static TokenizerConfig from_kv(const std::string& text);
  int64_t spectrum_b() const { return spectrum_bins(enc.patch_w); }
};

// Discrete tokenization of one sample.
template <typename S>
struct TokenizedSample {
  std::vector<int> indices;   // N, in [0, K)
  Tensor<S> quantized;        // N x D, the selected normalized codes
  Tensor<S> encoder_reps;     // N x D, pre-quantization projections
  std::vector<int> clamped_rows;
};

template <typename S>
struct TokenizerModel {
  TokenizerConfig cfg;
  ParamStore<S> params;   // backbone + tok.down + dec.* + head.*
  Codebook<S> codebook;
  int64_t encoder_forward_count = 0;  // one per sample pass (shared by MEM)
  bool quantizer_identity = false;    // debug: bypass the quantizer

  static TokenizerModel init(const TokenizerConfig& cfg, uint64_t seed);

  std::vector<TensorRecord> to_records() const;
  static TokenizerModel from_checkpoint(const Checkpoint& ckpt);
  void save(const std::string& path) const;
  static TokenizerModel load(const std::string& path);
};

// Graph handles from one tokenizer forward pass.
struct TokenizerForwardVars {
  Var amp;       // N x B
  Var phase;     // N x B
  Var reps_l2;   // N x D
  Var quant_l2;  // N x D (valid when the quantizer is active)
  std::vector<int> indices;
  std::vector<int> clamped_rows;
};

template <typename S>
TokenizerForwardVars tokenizer_forward(Tape<S>& tape, const VarMap& vars,
                                       TokenizerModel<S>& model, const PatchGrid& grid);

// No-grad tokenization (used for MEM targets).
template <typename S>
TokenizedSample<S> tokenize(TokenizerModel<S>& model, const PatchGrid& grid);

struct TokenizerLossParts {
  double total = 0;
  double amp_mse = 0;        // sum over patches/bins
  double phase_mse = 0;
  double codebook_pull = 0;  // ||sg(l2 p) - l2 v||^2
  double commitment = 0;     // ||l2 p - sg(l2 v)||^2
};

// Eq-style total: spectrum MSE terms + VQ pull + commitment, as a raw sum
// over the sample's patches. With an EMA codebook the pull term contributes
// its value but no gradient. `grad_weight` scales the gradient path only
// (the reported parts stay raw sums).
template <typename S>
Var tokenizer_loss(Tape<S>& tape, const TokenizerForwardVars& fw, const Tensor<S>& amp_target,
                   const Tensor<S>& phase_target, bool ema_codebook, double grad_weight,
                   TokenizerLossParts* parts);

// Registers network params (+ "vq.vectors" for the gradient-codebook mode).
template <typename S>
VarMap register_tokenizer_params(Tape<S>& tape, TokenizerModel<S>& model, bool trainable);

// ---------------------------------------------------------------------------
// training

struct TokenizerEpochStats {
  double lt = 0;         // epoch mean of per-sample raw L_T
  double amp_mse = 0;
  double phase_mse = 0;
  double commit = 0;
  double pull = 0;
  double perplexity = 0;
  double lr = 0;
};

struct TokenizerTrainOptions {
  int epochs = 20;
  int batch_size = 32;
  double peak_lr = 5e-4;
  double floor_lr = 1e-5;
  int warmup_epochs = 2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 1e-4;
  double clip = 0.0;  // 0 disables
  uint64_t seed = 0;
  int threads = 1;
  std::string csv_path;  // empty: no CSV
  std::vector<std::string> csv_header;
  std::function<void(int, const TokenizerEpochStats&)> on_epoch;
};

template <typename S>
std::vector<TokenizerEpochStats> train_tokenizer(TokenizerModel<S>& model,
                                                 const std::vector<const PatchGrid*>& samples,
                                                 const TokenizerTrainOptions& opts);

extern template struct TokenizerModel<float>;
extern template struct TokenizerModel<double>;

}  // namespace neurocodec

#endif

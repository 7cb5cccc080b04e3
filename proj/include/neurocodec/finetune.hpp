#ifndef NEUROCODEC_FINETUNE_HPP
#define NEUROCODEC_FINETUNE_HPP

#include <functional>
#include <string>
#include <vector>

#include "neurocodec/metrics.hpp"
#include "neurocodec/model.hpp"
#include "neurocodec/pretrain.hpp"

namespace neurocodec {

enum class TaskKind { binary, multiclass, regression };
enum class LossKind { bce, ce, mse };

struct TaskSpec {
  TaskKind kind = TaskKind::multiclass;
  int classes = 4;  // class count, or target count for regression
  LossKind loss = LossKind::ce;
  double label_smoothing = 0.1;  // multiclass only
  std::string monitor = "kappa";
  bool angle_norm = false;  // divide regression targets by 90

  int head_dim() const;
  void validate() const;  // loss and monitor must match the kind
  std::string to_kv() const;
  static TaskSpec from_kv(const std::string& text);
  static TaskSpec from_file(const std::string& path);
};

struct FreezeSpec {
  enum class Mode { all, last_k, linear_probe };
  Mode mode = Mode::all;
  int k = 0;

  // Trainable-parameter predicate for a given depth.
  std::function<bool(const std::string&)> predicate(int layers) const;
  static FreezeSpec parse(const std::string& text);  // all | last-k-blocks(k) | linear-probe
  std::string str() const;
};

// base_lr multiplier under layer-wise decay: head and final norm get 1,
// block i gets decay^(L-i+1), embeddings and the temporal encoder decay^(L+1).
double layer_lr_multiplier(const std::string& param_name, int layers, double decay);

template <typename S>
struct FinetuneModel {
  ModelConfig cfg;
  TaskSpec task;
  ParamStore<S> params;  // backbone + task.head

  static FinetuneModel from_pretrained(const PretrainModel<S>& pre, const TaskSpec& task,
                                       uint64_t seed);
  static FinetuneModel fresh(const ModelConfig& cfg, const TaskSpec& task, uint64_t seed);
  std::string config_kv() const;
  void save(const std::string& path) const;
  static FinetuneModel load(const std::string& path);
};

struct LabeledGrid {
  const PatchGrid* grid = nullptr;
  int label = -1;                // classification
  std::vector<double> targets;   // regression
};

struct FinetuneOptions {
  int epochs = 5;
  int batch_size = 32;
  double peak_lr = 5e-4;
  double floor_lr = 1e-6;
  int warmup_epochs = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.05;
  double clip = 3.0;
  double layer_decay = 0.65;
  FreezeSpec freeze;
  double drop_path = 0.1;
  bool zero_spatial_embedding = false;  // Appendix-L style ablation
  int max_steps = 0;                    // 0: run all epochs; else stop early
  uint64_t seed = 0;
  int threads = 1;
  std::string csv_path;
  std::vector<std::string> csv_header;
};

// One optimization step over a batch; returns the mean loss.
template <typename S>
double finetune_step(FinetuneModel<S>& model, const std::vector<LabeledGrid>& batch, AdamW<S>& opt,
                     double lr, const FinetuneOptions& opts, uint64_t step_seed);

struct EvalOutputs {
  std::vector<int> y_true, y_pred;
  std::vector<double> scores;                      // binary positive-class score
  std::vector<std::vector<double>> reg_true, reg_pred;  // per target
};

template <typename S>
EvalOutputs evaluate_model(const FinetuneModel<S>& model, const std::vector<LabeledGrid>& samples,
                           int threads);

// Monitor value (auroc / kappa / r2 / balanced_accuracy) on `samples`.
template <typename S>
double evaluate_monitor(const FinetuneModel<S>& model, const std::vector<LabeledGrid>& samples,
                        int threads);

struct FinetuneResult {
  std::vector<double> epoch_monitor;  // index 0 = initialization
  std::vector<double> epoch_loss;     // training loss per epoch
  int best_epoch = 0;                 // 0 = initialization; ties -> earlier
  double best_monitor = 0;
};

// Trains with per-epoch validation; the model is left at the best epoch's
// parameters (monitor-selected, ties to the earlier epoch).
template <typename S>
FinetuneResult finetune(FinetuneModel<S>& model, const std::vector<LabeledGrid>& train,
                        const std::vector<LabeledGrid>& valid, const FinetuneOptions& opts);

extern template struct FinetuneModel<float>;
extern template struct FinetuneModel<double>;

}  // namespace neurocodec

#endif

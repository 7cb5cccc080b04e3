#ifndef NEUROCODEC_OPTIM_HPP
#define NEUROCODEC_OPTIM_HPP

#include <functional>
#include <map>
#include <string>

#include "neurocodec/model.hpp"
#include "neurocodec/tensor.hpp"

namespace neurocodec {

template <typename S>
using GradMap = std::map<std::string, Tensor<S>>;

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled-weight-decay Adam with bias correction. Moments are keyed by
// parameter name so checkpoints can carry them.
template <typename S>
struct AdamW {
  GradMap<S> m, v;
  int64_t step = 0;

  // One update over every entry in `grads`. `lr_mult` scales the learning
  // rate per parameter (layer-wise decay); nullptr means 1 everywhere.
  void update(ParamStore<S>& params, const GradMap<S>& grads, const AdamWConfig& cfg,
              const std::function<double(const std::string&)>* lr_mult = nullptr);
};

// Linear warmup to `peak`, then cosine decay to `floor` at `total`.
double cosine_lr(int64_t step, int64_t total, int64_t warmup, double peak, double floor);

// Global L2-norm clipping; returns the pre-clip norm. Throws NumericsError on
// non-finite gradients.
template <typename S>
double clip_global_norm(GradMap<S>& grads, double max_norm);

extern template struct AdamW<float>;
extern template struct AdamW<double>;
extern template double clip_global_norm(GradMap<float>&, double);
extern template double clip_global_norm(GradMap<double>&, double);

}  // namespace neurocodec

#endif

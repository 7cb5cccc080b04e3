#include "neurocodec/optim.hpp"

#include <cmath>

#include "neurocodec/errors.hpp"

namespace neurocodec {

template <typename S>
void AdamW<S>::update(ParamStore<S>& params, const GradMap<S>& grads, const AdamWConfig& cfg,
                      const std::function<double(const std::string&)>* lr_mult) {
  ++step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (const auto& [name, g] : grads) {
    Tensor<S>& p = params.at(name);
    if (!p.same_shape(g)) throw NumericsError("gradient shape mismatch for " + name);
    auto mit = m.find(name);
    if (mit == m.end()) {
      m.emplace(name, Tensor<S>(g.shape));
      v.emplace(name, Tensor<S>(g.shape));
      mit = m.find(name);
    }
    Tensor<S>& mm = mit->second;
    Tensor<S>& vv = v.at(name);
    const double lr = cfg.lr * (lr_mult ? (*lr_mult)(name) : 1.0);
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      if (!std::isfinite(gi)) throw NumericsError("non-finite gradient in " + name);
      const double mi = cfg.beta1 * static_cast<double>(mm.data[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(vv.data[i]) + (1.0 - cfg.beta2) * gi * gi;
      mm.data[i] = static_cast<S>(mi);
      vv.data[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      double theta = static_cast<double>(p.data[i]);
      theta -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * theta);
      p.data[i] = static_cast<S>(theta);
    }
  }
}

double cosine_lr(int64_t step, int64_t total, int64_t warmup, double peak, double floor) {
  if (warmup > 0 && step <= warmup)
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return floor;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

template <typename S>
double clip_global_norm(GradMap<S>& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& [name, g] : grads) {
    for (const S v : g.data) {
      const double d = static_cast<double>(v);
      if (!std::isfinite(d)) throw NumericsError("non-finite gradient in " + name);
      ss += d * d;
    }
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (S& v : g.data) v = static_cast<S>(static_cast<double>(v) * scale);
  }
  return norm;
}

template struct AdamW<float>;
template struct AdamW<double>;
template double clip_global_norm(GradMap<float>&, double);
template double clip_global_norm(GradMap<double>&, double);

}  // namespace neurocodec

#include "neurocodec/gradcheck.hpp"

#include <cmath>

#include "neurocodec/errors.hpp"
#include "neurocodec/rng.hpp"

namespace neurocodec {

template <typename S>
GradCheckResult grad_check(const LossFn<S>& loss_fn, ParamStore<S> params, double eps,
                           int n_coords, uint64_t seed,
                           const std::function<bool(const std::string&)>& filter) {
  GradMap<S> grads;
  const double f0 = loss_fn(params, &grads);
  if (!std::isfinite(f0)) throw NumericsError("grad_check: non-finite loss");

  // Flat list of checkable coordinates.
  std::vector<std::pair<std::string, int64_t>> coords;
  for (const auto& [name, g] : grads) {
    if (!filter(name)) continue;
    for (int64_t i = 0; i < g.numel(); ++i) coords.emplace_back(name, i);
  }
  if (coords.empty()) throw NumericsError("grad_check: no coordinates to check");

  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<int> pick;
  if (static_cast<int>(coords.size()) <= n_coords) {
    pick.resize(coords.size());
    for (size_t i = 0; i < coords.size(); ++i) pick[i] = static_cast<int>(i);
  } else {
    pick = rng.sample_without_replacement(static_cast<int>(coords.size()), n_coords);
  }

  GradCheckResult res;
  res.checked = static_cast<int>(pick.size());
  for (const int ci : pick) {
    const auto& [name, idx] = coords[static_cast<size_t>(ci)];
    Tensor<S>& p = params.at(name);
    const S saved = p.at(idx);
    p.at(idx) = static_cast<S>(static_cast<double>(saved) + eps);
    const double fp = loss_fn(params, nullptr);
    p.at(idx) = static_cast<S>(static_cast<double>(saved) - eps);
    const double fm = loss_fn(params, nullptr);
    p.at(idx) = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericsError("grad_check: non-finite loss at perturbed point");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double analytic = static_cast<double>(grads.at(name).at(idx));
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(analytic - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_param = name;
      res.worst_index = idx;
    }
  }
  return res;
}

template GradCheckResult grad_check(const LossFn<double>&, ParamStore<double>, double, int,
                                    uint64_t, const std::function<bool(const std::string&)>&);
template GradCheckResult grad_check(const LossFn<float>&, ParamStore<float>, double, int, uint64_t,
                                    const std::function<bool(const std::string&)>&);

}  // namespace neurocodec

#ifndef NEUROCODEC_GRADCHECK_HPP
#define NEUROCODEC_GRADCHECK_HPP

#include <functional>
#include <string>

#include "neurocodec/model.hpp"
#include "neurocodec/optim.hpp"

namespace neurocodec {

// loss_fn(params, grads): evaluates the scalar loss; when `grads` is non-null
// it also fills analytic gradients (same keys as the trainable parameters).
template <typename S>
using LossFn = std::function<double(const ParamStore<S>&, GradMap<S>*)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int checked = 0;
};

// Central finite differences over a random subset of at least `n_coords`
// coordinates (all coordinates when fewer exist). Relative error uses
// max(|analytic|, |numeric|, 1e-8) as the denominator. Throws NumericsError
// on a non-finite loss.
template <typename S>
GradCheckResult grad_check(const LossFn<S>& loss_fn, ParamStore<S> params, double eps,
                           int n_coords, uint64_t seed,
                           const std::function<bool(const std::string&)>& filter =
                               [](const std::string&) { return true; });

extern template GradCheckResult grad_check(const LossFn<double>&, ParamStore<double>, double, int,
                                           uint64_t, const std::function<bool(const std::string&)>&);
extern template GradCheckResult grad_check(const LossFn<float>&, ParamStore<float>, double, int,
                                           uint64_t, const std::function<bool(const std::string&)>&);

}  // namespace neurocodec

#endif

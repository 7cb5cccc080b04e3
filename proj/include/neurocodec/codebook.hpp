#ifndef NEUROCODEC_CODEBOOK_HPP
#define NEUROCODEC_CODEBOOK_HPP

#include <cstdint>
#include <vector>

#include "neurocodec/rng.hpp"
#include "neurocodec/tensor.hpp"

namespace neurocodec {

// K l2-normalized D-dimensional neural embeddings plus EMA accumulators.
template <typename S>
struct Codebook {
  Tensor<S> vectors;              // K x D, rows unit-norm
  Tensor<S> ema_counts;           // K
  Tensor<S> ema_sums;             // K x D
  std::vector<int64_t> usage_age; // steps since last assignment
  double gamma = 0.99;

  int64_t K() const { return vectors.dim(0); }
  int64_t D() const { return vectors.dim(1); }

  // Random directions on the sphere.
  static Codebook init(int64_t K, int64_t D, double gamma, uint64_t seed);
};

struct QuantizeResult {
  std::vector<int> indices;
  std::vector<int> clamped_rows;  // reps whose l2 norm hit the clamp
};

// Nearest neighbor under ||l2(p) - l2(v)||; ties break to the lowest index.
// Zero-norm reps proceed with the denominator clamped at 1e-12 and are
// reported in clamped_rows.
template <typename S>
QuantizeResult quantize(const Tensor<S>& reps, const Codebook<S>& codebook);

template <typename S>
void l2_normalize_rows_inplace(Tensor<S>& t, double clamp = 1e-12,
                               std::vector<int>* clamped_rows = nullptr);

// EMA codebook maintenance. Accumulators decay on every call; vectors are
// recomputed only for codes assigned this step, so idle codes stay bitwise
// unchanged. usage_age resets for assigned codes and increments otherwise.
template <typename S>
void ema_update(Codebook<S>& codebook, const std::vector<int>& indices,
                const Tensor<S>& reps_l2);

// Resets codes with usage_age > max_age to a random rep from the batch.
// Returns the number of revived codes.
template <typename S>
int revive_dead_codes(Codebook<S>& codebook, const Tensor<S>& reps_l2, int64_t max_age, Rng& rng);

// exp(entropy) of the empirical code distribution.
double codebook_perplexity(const std::vector<int64_t>& histogram);

extern template struct Codebook<float>;
extern template struct Codebook<double>;
extern template QuantizeResult quantize(const Tensor<float>&, const Codebook<float>&);
extern template QuantizeResult quantize(const Tensor<double>&, const Codebook<double>&);
extern template void ema_update(Codebook<float>&, const std::vector<int>&, const Tensor<float>&);
extern template void ema_update(Codebook<double>&, const std::vector<int>&, const Tensor<double>&);
extern template int revive_dead_codes(Codebook<float>&, const Tensor<float>&, int64_t, Rng&);
extern template int revive_dead_codes(Codebook<double>&, const Tensor<double>&, int64_t, Rng&);
extern template void l2_normalize_rows_inplace(Tensor<float>&, double, std::vector<int>*);
extern template void l2_normalize_rows_inplace(Tensor<double>&, double, std::vector<int>*);

}  // namespace neurocodec

#endif

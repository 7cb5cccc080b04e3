#include "neurocodec/codebook.hpp"

#include <cmath>

#include "neurocodec/errors.hpp"

namespace neurocodec {

template <typename S>
void l2_normalize_rows_inplace(Tensor<S>& t, double clamp, std::vector<int>* clamped_rows) {
  const int64_t N = t.dim(0), D = t.dim(1);
  for (int64_t i = 0; i < N; ++i) {
    double ss = 0;
    for (int64_t j = 0; j < D; ++j) {
      const double v = static_cast<double>(t.at(i, j));
      ss += v * v;
    }
    double r = std::sqrt(ss);
    if (r < clamp) {
      r = clamp;
      if (clamped_rows) clamped_rows->push_back(static_cast<int>(i));
    }
    const S inv = static_cast<S>(1.0 / r);
    for (int64_t j = 0; j < D; ++j) t.at(i, j) *= inv;
  }
}

template <typename S>
Codebook<S> Codebook<S>::init(int64_t K, int64_t D, double gamma, uint64_t seed) {
  if (K < 2) throw ConfigError("codebook needs K >= 2");
  Codebook<S> cb;
  cb.vectors = Tensor<S>({K, D});
  Rng rng(derive_seed(seed, "codebook"));
  for (S& v : cb.vectors.data) v = static_cast<S>(rng.next_normal());
  l2_normalize_rows_inplace(cb.vectors);
  cb.ema_counts = Tensor<S>({K});
  cb.ema_sums = Tensor<S>({K, D});
  cb.usage_age.assign(static_cast<size_t>(K), 0);
  cb.gamma = gamma;
  return cb;
}

template <typename S>
QuantizeResult quantize(const Tensor<S>& reps, const Codebook<S>& codebook) {
  const int64_t N = reps.dim(0), D = reps.dim(1);
  if (D != codebook.D()) throw ConfigError("rep width does not match codebook D");
  const int64_t K = codebook.K();
  QuantizeResult out;
  out.indices.resize(static_cast<size_t>(N));
  Tensor<S> reps_l2 = reps;
  l2_normalize_rows_inplace(reps_l2, 1e-12, &out.clamped_rows);
  for (int64_t i = 0; i < N; ++i) {
    const S* p = reps_l2.ptr() + i * D;
    int best = 0;
    double best_d = 0;
    for (int64_t k = 0; k < K; ++k) {
      const S* v = codebook.vectors.ptr() + k * D;
      double dist = 0;
      for (int64_t j = 0; j < D; ++j) {
        const double d = static_cast<double>(p[j]) - static_cast<double>(v[j]);
        dist += d * d;
      }
      if (k == 0 || dist < best_d) {
        best_d = dist;
        best = static_cast<int>(k);
      }
    }
    out.indices[static_cast<size_t>(i)] = best;
  }
  return out;
}

template <typename S>
void ema_update(Codebook<S>& codebook, const std::vector<int>& indices, const Tensor<S>& reps_l2) {
  const int64_t K = codebook.K();
  const int64_t D = codebook.D();
  const double g = codebook.gamma;
  std::vector<int64_t> counts(static_cast<size_t>(K), 0);
  Tensor<S> sums({K, D});
  for (size_t i = 0; i < indices.size(); ++i) {
    const int k = indices[i];
    ++counts[static_cast<size_t>(k)];
    for (int64_t j = 0; j < D; ++j)
      sums.at(k, j) += reps_l2.at(static_cast<int64_t>(i), j);
  }
  for (int64_t k = 0; k < K; ++k) {
    codebook.ema_counts.at(k) = static_cast<S>(
        g * static_cast<double>(codebook.ema_counts.at(k)) +
        (1.0 - g) * static_cast<double>(counts[static_cast<size_t>(k)]));
    for (int64_t j = 0; j < D; ++j)
      codebook.ema_sums.at(k, j) = static_cast<S>(
          g * static_cast<double>(codebook.ema_sums.at(k, j)) +
          (1.0 - g) * static_cast<double>(sums.at(k, j)));
    if (counts[static_cast<size_t>(k)] > 0) {
      // Recompute the stored vector; unassigned codes keep their value.
      const double denom = std::max(static_cast<double>(codebook.ema_counts.at(k)), 1e-12);
      double ss = 0;
      for (int64_t j = 0; j < D; ++j) {
        const double v = static_cast<double>(codebook.ema_sums.at(k, j)) / denom;
        ss += v * v;
      }
      const double r = std::max(std::sqrt(ss), 1e-12);
      for (int64_t j = 0; j < D; ++j)
        codebook.vectors.at(k, j) =
            static_cast<S>(static_cast<double>(codebook.ema_sums.at(k, j)) / denom / r);
      codebook.usage_age[static_cast<size_t>(k)] = 0;
    } else {
      ++codebook.usage_age[static_cast<size_t>(k)];
    }
  }
}

template <typename S>
int revive_dead_codes(Codebook<S>& codebook, const Tensor<S>& reps_l2, int64_t max_age, Rng& rng) {
  const int64_t K = codebook.K();
  const int64_t D = codebook.D();
  const int64_t n_reps = reps_l2.dim(0);
  if (n_reps == 0) return 0;
  int revived = 0;
  for (int64_t k = 0; k < K; ++k) {
    if (codebook.usage_age[static_cast<size_t>(k)] <= max_age) continue;
    const int64_t r = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n_reps)));
    double ss = 0;
    for (int64_t j = 0; j < D; ++j) {
      const double v = static_cast<double>(reps_l2.at(r, j));
      ss += v * v;
    }
    const double norm = std::max(std::sqrt(ss), 1e-12);
    for (int64_t j = 0; j < D; ++j) {
      const S v = static_cast<S>(static_cast<double>(reps_l2.at(r, j)) / norm);
      codebook.vectors.at(k, j) = v;
      codebook.ema_sums.at(k, j) = v;
    }
    codebook.ema_counts.at(k) = S(1);
    codebook.usage_age[static_cast<size_t>(k)] = 0;
    ++revived;
  }
  return revived;
}

double codebook_perplexity(const std::vector<int64_t>& histogram) {
  int64_t total = 0;
  for (const int64_t h : histogram) total += h;
  if (total < 1) throw DataError("perplexity: empty histogram");
  double entropy = 0.0;
  for (const int64_t h : histogram) {
    if (h == 0) continue;
    const double q = static_cast<double>(h) / static_cast<double>(total);
    entropy -= q * std::log(q);
  }
  return std::exp(entropy);
}

template struct Codebook<float>;
template struct Codebook<double>;
template QuantizeResult quantize(const Tensor<float>&, const Codebook<float>&);
template QuantizeResult quantize(const Tensor<double>&, const Codebook<double>&);
template void ema_update(Codebook<float>&, const std::vector<int>&, const Tensor<float>&);
template void ema_update(Codebook<double>&, const std::vector<int>&, const Tensor<double>&);
template int revive_dead_codes(Codebook<float>&, const Tensor<float>&, int64_t, Rng&);
template int revive_dead_codes(Codebook<double>&, const Tensor<double>&, int64_t, Rng&);
template void l2_normalize_rows_inplace(Tensor<float>&, double, std::vector<int>*);
template void l2_normalize_rows_inplace(Tensor<double>&, double, std::vector<int>*);

}  // namespace neurocodec

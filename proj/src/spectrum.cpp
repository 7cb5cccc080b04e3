#include "neurocodec/spectrum.hpp"

#include <cmath>

#include "neurocodec/errors.hpp"
#include "neurocodec/fft.hpp"

namespace neurocodec {

std::vector<std::complex<double>> dft(const std::vector<double>& patch) {
  return fft::forward_real(patch);
}

AmpPhase amp_phase(const std::vector<std::complex<double>>& bins) {
  const size_t w = bins.size();
  const size_t half = w / 2 + 1;
  AmpPhase out;
  out.amplitude.resize(half);
  out.phase.resize(half);
  for (size_t m = 0; m < half; ++m) {
    const double re = bins[m].real();
    const double im = bins[m].imag();
    out.amplitude[m] = std::sqrt(re * re + im * im);
    out.phase[m] = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
  }
  return out;
}

namespace {

// In-place z-score over all entries with the population std; the denominator
// is clamped at 1e-8 for zero-variance inputs.
bool zscore(Tensor<double>& t) {
  const int64_t n = t.numel();
  double mean = 0.0;
  for (int64_t i = 0; i < n; ++i) mean += t.at(i);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = t.at(i) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  double sd = std::sqrt(var);
  const bool degenerate = sd < 1e-8;
  if (degenerate) sd = 1e-8;
  const double inv = 1.0 / sd;
  for (int64_t i = 0; i < n; ++i) t.at(i) = (t.at(i) - mean) * inv;
  return degenerate;
}

}  // namespace

SpectrumTarget build_target(const PatchGrid& grid) {
  const int64_t N = grid.n();
  if (N == 0) throw DataError("build_target: empty patch grid");
  const int64_t B = spectrum_bins(grid.w);
  SpectrumTarget target;
  target.amplitude = Tensor<double>({N, B});
  target.phase = Tensor<double>({N, B});
  std::vector<double> patch(static_cast<size_t>(grid.w));
  for (int64_t i = 0; i < N; ++i) {
    for (int64_t j = 0; j < grid.w; ++j) patch[static_cast<size_t>(j)] = grid.patches.at(i, j);
    const AmpPhase ap = amp_phase(dft(patch));
    for (int64_t m = 0; m < B; ++m) {
      target.amplitude.at(i, m) = ap.amplitude[static_cast<size_t>(m)];
      target.phase.at(i, m) = ap.phase[static_cast<size_t>(m)];
    }
  }
  const bool deg_a = zscore(target.amplitude);
  const bool deg_p = zscore(target.phase);
  target.degenerate = deg_a || deg_p;
  return target;
}

}  // namespace neurocodec

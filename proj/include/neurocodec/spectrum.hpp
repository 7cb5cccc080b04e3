#ifndef NEUROCODEC_SPECTRUM_HPP
#define NEUROCODEC_SPECTRUM_HPP

#include <complex>
#include <vector>

#include "neurocodec/eeg.hpp"
#include "neurocodec/tensor.hpp"

namespace neurocodec {

// Full-length DFT of one patch: bin m = sum_n x[n] exp(-2*pi*i*m*n/w),
// m in [0, w). Fast transform internally; matches the naive sum to 1e-9.
std::vector<std::complex<double>> dft(const std::vector<double>& patch);

// Amplitude and quadrant-correct phase for bins 0..floor(w/2) (the DFT of a
// real signal is conjugate-symmetric, so half the bins carry everything).
// Phase of an all-zero bin is defined as 0.
struct AmpPhase {
  std::vector<double> amplitude;  // length floor(w/2)+1
  std::vector<double> phase;
};
AmpPhase amp_phase(const std::vector<std::complex<double>>& bins);

// Per-patch z-scored regression targets. One (mean, std) pair per sample over
// all patches x bins, separately for amplitude and phase.
struct SpectrumTarget {
  Tensor<double> amplitude;  // N x B, B = floor(w/2)+1
  Tensor<double> phase;      // N x B
  bool degenerate = false;   // set when a z-score denominator was clamped
};

SpectrumTarget build_target(const PatchGrid& grid);

inline int64_t spectrum_bins(int64_t w) { return w / 2 + 1; }

}  // namespace neurocodec

#endif

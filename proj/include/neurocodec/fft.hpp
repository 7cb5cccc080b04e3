#ifndef NEUROCODEC_FFT_HPP
#define NEUROCODEC_FFT_HPP

#include <complex>
#include <vector>

namespace neurocodec::fft {

using cplx = std::complex<double>;

// Forward transform of arbitrary length: X[m] = sum_n x[n] exp(-2*pi*i*m*n/N).
// Radix-2 for powers of two, Bluestein otherwise.
std::vector<cplx> forward(const std::vector<cplx>& x);

// Inverse with 1/N scaling.
std::vector<cplx> inverse(const std::vector<cplx>& X);

std::vector<cplx> forward_real(const std::vector<double>& x);

// Real part of the inverse; the imaginary residue is discarded, so the input
// spectrum must be (numerically) conjugate-symmetric.
std::vector<double> inverse_real(const std::vector<cplx>& X);

}  // namespace neurocodec::fft

#endif

#include "neurocodec/fft.hpp"

#include <cmath>
#include <cstdint>

namespace neurocodec::fft {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative Cooley-Tukey, n a power of two.
void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Chirp factor exp(-i*pi*k^2/n) with the k^2 reduced mod 2n to keep the
// argument small; required for accuracy at large k.
cplx chirp(size_t k, size_t n, bool inverse) {
  const uint64_t m = (static_cast<uint64_t>(k) * k) % (2 * static_cast<uint64_t>(n));
  const double ang = kTwoPi * 0.5 * static_cast<double>(m) / static_cast<double>(n);
  return inverse ? cplx(std::cos(ang), std::sin(ang)) : cplx(std::cos(ang), -std::sin(ang));
}

// Bluestein's algorithm: DFT of arbitrary n as a convolution of length >= 2n-1.
std::vector<cplx> fft_bluestein(const std::vector<cplx>& x, bool inverse) {
  const size_t n = x.size();
  const size_t m = next_pow2(2 * n - 1);
  std::vector<cplx> a(m, cplx(0, 0)), b(m, cplx(0, 0));
  for (size_t k = 0; k < n; ++k) a[k] = x[k] * chirp(k, n, inverse);
  for (size_t k = 0; k < n; ++k) {
    const cplx c = std::conj(chirp(k, n, inverse));
    b[k] = c;
    if (k != 0) b[m - k] = c;
  }
  fft_pow2(a, false);
  fft_pow2(b, false);
  for (size_t i = 0; i < m; ++i) a[i] *= b[i];
  fft_pow2(a, true);
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<cplx> y(n);
  for (size_t k = 0; k < n; ++k) y[k] = a[k] * inv_m * chirp(k, n, inverse);
  return y;
}

std::vector<cplx> transform(std::vector<cplx> x, bool inverse) {
  const size_t n = x.size();
  if (n <= 1) return x;
  if (is_pow2(n)) {
    fft_pow2(x, inverse);
    return x;
  }
  return fft_bluestein(x, inverse);
}

}  // namespace

std::vector<cplx> forward(const std::vector<cplx>& x) { return transform(x, false); }

std::vector<cplx> inverse(const std::vector<cplx>& X) {
  std::vector<cplx> y = transform(X, true);
  const double inv_n = 1.0 / static_cast<double>(X.empty() ? 1 : X.size());
  for (cplx& v : y) v *= inv_n;
  return y;
}

std::vector<cplx> forward_real(const std::vector<double>& x) {
  std::vector<cplx> c(x.size());
  for (size_t i = 0; i < x.size(); ++i) c[i] = cplx(x[i], 0.0);
  return forward(c);
}

std::vector<double> inverse_real(const std::vector<cplx>& X) {
  const std::vector<cplx> y = inverse(X);
  std::vector<double> out(y.size());
  for (size_t i = 0; i < y.size(); ++i) out[i] = y[i].real();
  return out;
}

}  // namespace neurocodec::fft

#include <doctest.h>

#include <cmath>
#include <complex>

#include "neurocodec/rng.hpp"
#include "neurocodec/spectrum.hpp"

using namespace neurocodec;

namespace {

// Independent O(w^2) oracle for the DFT.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const size_t w = x.size();
  std::vector<std::complex<double>> out(w);
  for (size_t m = 0; m < w; ++m) {
    std::complex<double> acc(0, 0);
    for (size_t n = 0; n < w; ++n) {
      const double ang = -2.0 * M_PI * static_cast<double>(m) * static_cast<double>(n) /
                         static_cast<double>(w);
      acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[m] = acc;
  }
  return out;
}

double max_abs_diff(const std::vector<std::complex<double>>& a,
                    const std::vector<std::complex<double>>& b) {
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

std::vector<double> random_vec(size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.next_normal();
  return x;
}

PatchGrid grid_from_patches(const std::vector<std::vector<float>>& patches) {
  PatchGrid g;
  g.w = static_cast<int64_t>(patches[0].size());
  g.patches = Tensor<float>({static_cast<int64_t>(patches.size()), g.w});
  for (size_t i = 0; i < patches.size(); ++i) {
    for (size_t j = 0; j < patches[i].size(); ++j)
      g.patches.at(static_cast<int64_t>(i), static_cast<int64_t>(j)) = patches[i][j];
    g.tag_channel.push_back(0);
    g.tag_time.push_back(static_cast<int>(i) + 1);
  }
  return g;
}

}  // namespace

TEST_CASE("dft: DC-only signal") {
  const std::vector<double> x(8, 3.25);
  const auto bins = dft(x);
  CHECK(bins[0].real() == doctest::Approx(8 * 3.25).epsilon(1e-12));
  CHECK(bins[0].imag() == doctest::Approx(0.0));
  for (size_t m = 1; m < 8; ++m) CHECK(std::abs(bins[m]) < 1e-12);
}

TEST_CASE("dft: single cosine tone lands on bins 1 and w-1") {
  std::vector<double> x(16);
  for (size_t n = 0; n < 16; ++n) x[n] = std::cos(2.0 * M_PI * static_cast<double>(n) / 16.0);
  const auto bins = dft(x);
  CHECK(bins[1].real() == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(std::abs(bins[1].imag()) < 1e-12);
  CHECK(bins[15].real() == doctest::Approx(8.0).epsilon(1e-12));
  for (size_t m = 0; m < 16; ++m) {
    if (m == 1 || m == 15) continue;
    CHECK(std::abs(bins[m]) < 1e-10);
  }
}

TEST_CASE("dft: random w=37 matches the naive sum") {
  Rng rng(11);
  const auto x = random_vec(37, rng);
  CHECK(max_abs_diff(dft(x), naive_dft(x)) < 1e-9);
}

TEST_CASE("dft: fast path equals naive oracle for w in 1..128") {
  Rng rng(5);
  for (size_t w = 1; w <= 128; ++w) {
    const auto x = random_vec(w, rng);
    CHECK(max_abs_diff(dft(x), naive_dft(x)) < 1e-9);
  }
}

TEST_CASE("dft: linearity") {
  Rng rng(7);
  for (const size_t w : {24, 37, 64}) {
    const auto x = random_vec(w, rng);
    const auto y = random_vec(w, rng);
    const double a = rng.next_normal(), b = rng.next_normal();
    std::vector<double> z(w);
    for (size_t i = 0; i < w; ++i) z[i] = a * x[i] + b * y[i];
    const auto fx = dft(x), fy = dft(y), fz = dft(z);
    double worst = 0;
    for (size_t m = 0; m < w; ++m)
      worst = std::max(worst, std::abs(fz[m] - (a * fx[m] + b * fy[m])));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("dft: Parseval") {
  Rng rng(13);
  for (const size_t w : {16, 50, 101}) {
    const auto x = random_vec(w, rng);
    double time_energy = 0;
    for (const double v : x) time_energy += v * v;
    const auto bins = dft(x);
    double freq_energy = 0;
    for (const auto& b : bins) freq_energy += std::norm(b);
    CHECK(std::fabs(time_energy - freq_energy / static_cast<double>(w)) < 1e-9);
  }
}

TEST_CASE("dft: conjugate symmetry for real input") {
  Rng rng(17);
  for (const size_t w : {12, 33}) {
    const auto x = random_vec(w, rng);
    const auto bins = dft(x);
    for (size_t m = 1; m < w; ++m)
      CHECK(std::abs(bins[m] - std::conj(bins[w - m])) < 1e-9);
  }
}

TEST_CASE("amp_phase: hand cases") {
  std::vector<std::complex<double>> bins = {{3, 4}, {1, 0}, {0, -2}, {5, 5}};
  const AmpPhase ap = amp_phase(bins);
  REQUIRE(ap.amplitude.size() == 3);  // floor(4/2)+1
  CHECK(ap.amplitude[0] == doctest::Approx(5.0));
  CHECK(ap.phase[0] == doctest::Approx(std::atan2(4.0, 3.0)));
  CHECK(ap.amplitude[1] == doctest::Approx(1.0));
  CHECK(ap.phase[1] == doctest::Approx(0.0));
  CHECK(ap.amplitude[2] == doctest::Approx(2.0));
  CHECK(ap.phase[2] == doctest::Approx(-M_PI / 2));
}

TEST_CASE("amp_phase: zero bin has phase 0") {
  std::vector<std::complex<double>> bins = {{0, 0}, {1, 1}};
  const AmpPhase ap = amp_phase(bins);
  CHECK(ap.phase[0] == 0.0);
}

TEST_CASE("build_target: all-zero sample is degenerate with zero targets") {
  const PatchGrid g = grid_from_patches({std::vector<float>(16, 0.f), std::vector<float>(16, 0.f)});
  const SpectrumTarget t = build_target(g);
  CHECK(t.degenerate);
  for (int64_t i = 0; i < t.amplitude.numel(); ++i) CHECK(t.amplitude.at(i) == 0.0);
}

TEST_CASE("build_target: z-score has mean 0 and std 1") {
  Rng rng(23);
  std::vector<std::vector<float>> patches;
  for (int i = 0; i < 6; ++i) {
    std::vector<float> p(32);
    for (float& v : p) v = static_cast<float>(rng.next_normal());
    patches.push_back(p);
  }
  const SpectrumTarget t = build_target(grid_from_patches(patches));
  for (const Tensor<double>* field : {&t.amplitude, &t.phase}) {
    double mean = 0;
    for (int64_t i = 0; i < field->numel(); ++i) mean += field->at(i);
    mean /= static_cast<double>(field->numel());
    double var = 0;
    for (int64_t i = 0; i < field->numel(); ++i) {
      const double d = field->at(i) - mean;
      var += d * d;
    }
    var /= static_cast<double>(field->numel());
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);
  }
  CHECK_FALSE(t.degenerate);
}

TEST_CASE("build_target: tones at different bins stay distinguishable") {
  std::vector<float> tone1(32), tone3(32);
  for (size_t n = 0; n < 32; ++n) {
    tone1[n] = static_cast<float>(std::sin(2.0 * M_PI * 1.0 * static_cast<double>(n) / 32.0));
    tone3[n] = static_cast<float>(std::sin(2.0 * M_PI * 3.0 * static_cast<double>(n) / 32.0));
  }
  const SpectrumTarget t = build_target(grid_from_patches({tone1, tone3}));
  auto argmax_bin = [&](int64_t row) {
    int64_t best = 0;
    for (int64_t m = 1; m < t.amplitude.dim(1); ++m)
      if (t.amplitude.at(row, m) > t.amplitude.at(row, best)) best = m;
    return best;
  };
  CHECK(argmax_bin(0) == 1);
  CHECK(argmax_bin(1) == 3);
}

#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "nvrf/signal_model.hpp"
#include "nvrf/spectral.hpp"

using namespace nvrf;
using doctest::Approx;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

TimeTrace tone(double freq, double step, std::size_t n, double amp = 0.3, double phase = 0.0) {
  auto tau = uniform_grid(0.0, step, n);
  std::vector<double> pop;
  for (double t : tau) pop.push_back(0.5 + amp * std::cos(two_pi * freq * t + phase));
  return make_trace(std::move(tau), std::move(pop));
}

RfFieldParams rf(double nu_z, double phi0 = 0.0) { return RfFieldParams{nu_z, 0.0, 2.0, phi0, 0.0, {}}; }

const Peak* nearest(const PeakList& pl, double f, double within) {
  const Peak* best = nullptr;
  for (const auto& p : pl.peaks)
    if (std::abs(p.freq - f) < within && (!best || std::abs(p.freq - f) < std::abs(best->freq - f)))
      best = &p;
  return best;
}

}  // namespace

TEST_CASE("constant trace gives an all-zero spectrum") {
  auto tau = uniform_grid(0.0, 0.01, 200);
  const auto t = make_trace(tau, std::vector<double>(200, 0.37));
  const auto s = spectrum(t);
  for (double m : s.magnitude) CHECK(m < 1e-14);
  CHECK(find_peaks(s, 0.5).peaks.empty());

  SpectrumOptions keep;
  keep.remove_mean = false;
  const auto d = spectrum(t, keep);
  CHECK(d.magnitude[0] > 1.0);  // the DC bin is retained on request
}

TEST_CASE("pure cosine at 2 MHz") {
  // 50 MHz sampling for 10 us
  const auto t = tone(2.0, 0.02, 500);
  const auto s = spectrum(t);
  CHECK(s.pad_factor == default_pad_factor);
  CHECK(s.resolution() == Approx(1.0 / (4000 * 0.02)));
  CHECK(s.freq.back() == Approx(25.0));
  const auto pl = find_peaks(s, 0.5);
  REQUIRE(pl.peaks.size() == 1);
  CHECK(std::abs(pl.peaks[0].freq - 2.0) < s.resolution());
  CHECK(std::abs(pl.peaks[0].freq - 2.0) < 0.2 * s.resolution());
  CHECK(pl.resolution == s.resolution());
  CHECK(pl.peaks[0].magnitude >= pl.threshold);
}

TEST_CASE("parseval for the unpadded rectangular spectrum") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n : {257u, 300u, 1024u}) {
    auto tau = uniform_grid(0.0, 0.01, n);
    std::vector<double> pop(n);
    for (auto& p : pop) p = u(rng);
    const auto t = make_trace(tau, pop);
    SpectrumOptions o;
    o.pad_factor = 1;
    const auto s = spectrum(t, o);
    const double mean = std::accumulate(pop.begin(), pop.end(), 0.0) / double(n);
    double time_energy = 0.0, freq_energy = 0.0;
    for (double p : pop) time_energy += (p - mean) * (p - mean);
    for (double m : s.magnitude) freq_energy += m * m;
    CHECK(freq_energy == Approx(time_energy).epsilon(1e-9));
  }
}

TEST_CASE("single-tone frequency estimates are unbiased") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> fu(1.0, 10.0), pu(0.0, two_pi);
  double sum = 0.0, worst = 0.0;
  double bin = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double f = fu(rng);
    const auto t = tone(f, 0.02, 500, 0.3, pu(rng));
    SpectrumOptions o;
    o.window = WindowKind::hann;
    const auto s = spectrum(t, o);
    bin = s.resolution();
    const auto pl = find_peaks(s, 0.5);
    const Peak* p = nearest(pl, f, 0.5);
    REQUIRE(p != nullptr);
    const double err = (p->freq - f) / bin;
    sum += err;
    worst = std::max(worst, std::abs(err));
  }
  CHECK(std::abs(sum / 100.0) < 0.05);
  CHECK(worst < 0.2);
}

TEST_CASE("default window follows the period count") {
  CHECK(default_window(tone(2.0, 0.01, 300), 2.0) == WindowKind::rectangular);
  CHECK(default_window(tone(2.0, 0.01, 301), 2.0) == WindowKind::hann);
  // whole periods, but a secular shift keeps the samples from repeating
  const auto f = rf(2.66);
  const auto shifted = model_trace(SequenceKind::dd, phase_params_from_field(f, 1, angular(0.05)),
                                   f, inf, uniform_grid(0.0, 0.01, 300));
  CHECK(default_window(shifted, 2.0) == WindowKind::hann);
}

TEST_CASE("ramsey comb at alpha = 1.33 tracks the Jacobi-Anger coefficients") {
  const auto f = rf(2.66);
  const auto t = model_trace(SequenceKind::ramsey, phase_params_from_field(f, 1), f, inf,
                             uniform_grid(0.0, 0.01, 300));
  SpectrumOptions o;
  o.pad_factor = 1;
  const auto s = spectrum(t, o);
  const auto pl = find_peaks(s, 1e-3);
  const auto h = harmonic_decomposition(1.33, 0.0, 1e-14);
  const Peak* first = nearest(pl, 2.0, 0.05);
  REQUIRE(first != nullptr);
  for (int n = 1; n <= 4; ++n) {
    const Peak* p = nearest(pl, 2.0 * n, 0.05);
    INFO("n = " << n);
    REQUIRE(p != nullptr);
    CHECK(std::abs(p->freq - 2.0 * n) < 1e-9);
    const double expected = std::abs(h.cos_coeff[n] / h.cos_coeff[1]);
    CHECK(p->magnitude / first->magnitude == Approx(expected).epsilon(0.03));
  }
}

TEST_CASE("detectable harmonic count follows the coefficient magnitudes") {
  for (double alpha : {0.2, 0.4, 1.33, 2.5}) {
    for (double phi0 : {0.0, 0.8}) {
      const auto f = RfFieldParams{alpha * 2.0, 0.0, 2.0, phi0, 0.0, {}};
      const auto t = model_trace(SequenceKind::ramsey, phase_params_from_field(f, 1), f, inf,
                                 uniform_grid(0.0, 0.01, 300));
      SpectrumOptions o;
      o.pad_factor = 1;
      const auto pl = find_peaks(spectrum(t, o), 0.05);
      const auto h = harmonic_decomposition(alpha, phi0, 1e-14);
      double top = 0.0;
      for (int n = 1; n <= h.n_max(); ++n) top = std::max(top, std::abs(h.cos_coeff[n]));
      int expected = 0;
      for (int n = 1; n <= h.n_max(); ++n)
        if (std::abs(h.cos_coeff[n]) >= 0.05 * top) ++expected;
      INFO("alpha=" << alpha << " phi0=" << phi0);
      CHECK(int(pl.peaks.size()) == expected);
      if (alpha < 0.5) {
        for (const auto& p : pl.peaks) CHECK(p.freq < 2.0 * 3 - 0.5);
      }
      if (alpha == 1.33) {
        for (int n = 1; n <= 3; ++n) CHECK(nearest(pl, 2.0 * n, 0.05) != nullptr);
      }
    }
  }
}

TEST_CASE("dd sidebands sit at |2n +- 0.05| MHz") {
  const auto f = rf(2.66, 0.4);
  const auto t = model_trace(SequenceKind::dd, phase_params_from_field(f, 1, angular(0.05), 0.3),
                             f, inf, uniform_grid(0.0, 0.01, 5000));
  SpectrumOptions o;
  o.window = default_window(t, 2.0);
  const auto pl = find_peaks(spectrum(t, o), 0.02);
  const auto h = assign_harmonics(pl, 2.0, true);
  for (int n = 0; n <= 2; ++n) {
    for (double sgn : {-1.0, 1.0}) {
      if (n == 0 && sgn < 0) continue;
      const double want = std::abs(2.0 * n + sgn * 0.05);
      const Peak* p = nearest(pl, want, 0.02);
      INFO("n=" << n << " sign=" << sgn);
      REQUIRE(p != nullptr);
      CHECK(std::abs(p->freq - want) < 0.01);
    }
  }
  CHECK(h.consensus_shift == Approx(0.05).epsilon(0.05));
}

TEST_CASE("harmonic assignment") {
  PeakList pl;
  pl.resolution = 0.01;
  pl.peaks = {{1.95, 1.0, 0.0}, {2.05, 1.0, 0.0}, {4.0, 0.5, 0.0}};
  const auto h = assign_harmonics(pl, 2.0);
  REQUIRE(h.peaks.size() == 3);
  CHECK(h.peaks[0].n == 1);
  CHECK(h.peaks[0].branch == Branch::lower);
  CHECK(h.peaks[0].shift == Approx(0.05));
  CHECK(h.peaks[1].n == 1);
  CHECK(h.peaks[1].branch == Branch::upper);
  CHECK(h.peaks[1].shift == Approx(0.05));
  CHECK(h.peaks[2].n == 2);
  CHECK(h.peaks[2].branch == Branch::center);
  CHECK(h.peaks[2].shift == Approx(0.0));
  CHECK(h.consensus_shift == Approx(0.05));
  CHECK(to_string(Branch::lower) == "-");
  CHECK(to_string(Branch::upper) == "+");

  PeakList mid;
  mid.peaks = {{1.0, 1.0, 0.0}};
  try {
    assign_harmonics(mid, 2.0);
    FAIL("expected ambiguous_assignment");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ambiguous_assignment);
  }
  const auto skipped = assign_harmonics(mid, 2.0, true);
  CHECK(skipped.peaks.empty());
  CHECK(skipped.skipped == 1);
  CHECK_THROWS_AS(assign_harmonics(mid, 0.0), Error);
}

TEST_CASE("noise-only spectrum has no peak at a 0.99 threshold") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.5, 0.01);
  auto tau = uniform_grid(0.0, 0.01, 2000);
  std::vector<double> pop(tau.size());
  for (auto& p : pop) p = g(rng);
  const auto pl = find_peaks(spectrum(make_trace(tau, pop)), 0.99);
  CHECK(pl.peaks.empty());
}

TEST_CASE("peak list invariants") {
  const auto f = rf(4.0, 0.2);
  const auto t = model_trace(SequenceKind::ramsey, phase_params_from_field(f, 1, 0.7), f, 22.0,
                             uniform_grid(0.0, 0.013, 777));
  const auto s = spectrum(t, {WindowKind::hann, 4, true});
  const auto pl = find_peaks(s, 0.01);
  REQUIRE_FALSE(pl.peaks.empty());
  for (std::size_t i = 0; i < pl.peaks.size(); ++i) {
    CHECK(pl.peaks[i].magnitude >= pl.threshold);
    CHECK(pl.peaks[i].freq >= 0.0);
    CHECK(pl.peaks[i].freq <= s.freq.back());
    if (i > 0) CHECK(pl.peaks[i].freq > pl.peaks[i - 1].freq);
  }
  CHECK_THROWS_AS(find_peaks(s, 0.0), Error);
  CHECK_THROWS_AS(find_peaks(s, 1.0), Error);
}

TEST_CASE("spectrum rejects bad input") {
  const auto t = tone(2.0, 0.01, 100);
  CHECK_THROWS_AS(spectrum(t, {WindowKind::rectangular, 0, true}), Error);
  // bypass make_trace to feed a non-uniform grid
  TimeTrace bad = t;
  bad.tau[50] += 0.004;
  try {
    spectrum(bad);
    FAIL("expected non_uniform_sampling");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::non_uniform_sampling);
  }
}

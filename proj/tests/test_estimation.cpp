#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "nvrf/estimation.hpp"
#include "nvrf/noise.hpp"
#include "nvrf/signal_model.hpp"

using namespace nvrf;
using doctest::Approx;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double inf = std::numeric_limits<double>::infinity();

TimeTrace synth(SequenceKind kind, double alpha, double shift_mhz, double delta, double phi0,
                double t2 = inf, std::size_t n = 301, double step = 0.01) {
  const RfFieldParams f{alpha * 2.0, 0.0, 2.0, phi0, 0.0, {}};
  const PhaseModelParams p{alpha, angular(shift_mhz), delta};
  return model_trace(kind, p, f, t2, uniform_grid(0.0, step, n));
}

double phase_gap(double a, double b) { return std::abs(wrap_phase_symmetric(a - b)); }

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected nvrf::Error");
  return ErrorKind::invalid_argument;
}

FitResult column(double nu_z, double shift, double p) {
  FitResult r;
  r.nu_rf = 2.0;
  r.params.alpha = nu_z / 2.0;
  r.params.shift_total = shift;
  r.sigma.shift_total = 1e-4;
  r.sigma.alpha = 1e-3;
  r.power_mw = p;
  return r;
}

}  // namespace

TEST_CASE("model value and gradient") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    FitParameters p;
    p.alpha = 5.0 * u(rng);
    p.shift_total = u(rng) - 0.5;
    p.delta = two_pi * u(rng);
    p.phi0 = two_pi * u(rng);
    p.scale = 0.5 + u(rng);
    p.offset = 0.2 * (u(rng) - 0.5);
    const double tau = 3.0 * u(rng);
    for (auto kind : {SequenceKind::ramsey, SequenceKind::dd}) {
      const auto g = model_gradient(p, kind, 2.0, 22.0, tau);
      const auto fd = model_gradient_fd(p, kind, 2.0, 22.0, tau);
      for (int k = 0; k < n_params; ++k)
        CHECK(g(k) == Approx(fd(k)).epsilon(1e-6).scale(1.0));
    }
  }
  // With unit contrast the fit model is the population model
  FitParameters p{1.33, 0.05, 0.2, 0.4, 1.0, 0.0};
  const RfFieldParams f{2.66, 0.0, 2.0, 0.4, 0.0, {}};
  const PhaseModelParams pm{1.33, angular(0.05), 0.2};
  for (double tau : {0.0, 0.3, 1.7}) {
    CHECK(model_value(p, SequenceKind::ramsey, 2.0, 22.0, tau) ==
          Approx(population_ramsey(pm, f, tau, 22.0)));
    CHECK(model_value(p, SequenceKind::dd, 2.0, 22.0, tau) == Approx(population_dd(pm, f, tau)));
  }
  CHECK(FitParameters::from_vector(p.as_vector()).shift_total == p.shift_total);
  CHECK(param_name(p_shift) == "shift_total");
  CHECK(init_source_from_string(to_string(InitSource::user)) == InitSource::user);
}

TEST_CASE("ramsey round trip at the measured amplitudes") {
  SpinSystem sys;
  sys.t2_star = 22.0;
  const auto t = synth(SequenceKind::ramsey, 1.33, 0.05, 0.0, 0.0, 22.0);
  const auto r = fit_trace(t, SequenceKind::ramsey, sys, 2.0);
  CHECK(r.params.alpha == Approx(1.33).epsilon(1e-6));
  CHECK(r.params.shift_total == Approx(0.05).epsilon(1e-6));
  CHECK(r.nu_z() == Approx(2.66).epsilon(1e-6));
  CHECK(r.params.scale == Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(r.params.offset) < 1e-7);
  CHECK(r.residual_rms < 1e-8);
  CHECK(r.init_source == InitSource::spectral);
  CHECK(r.model == SequenceKind::ramsey);
  CHECK(r.t2_star == 22.0);
}

TEST_CASE("noisy ramsey recovers alpha within 3 sigma") {
  SpinSystem sys;
  sys.t2_star = 22.0;
  const auto ideal = synth(SequenceKind::ramsey, 1.33, 0.05, 0.0, 0.0, 22.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto noisy = sample_trace(ideal, ReadoutModel{}, seed);
    const auto r = fit_trace(noisy, SequenceKind::ramsey, sys, 2.0);
    CHECK(std::abs(r.params.alpha - 1.33) < 3.0 * r.sigma.alpha);
    CHECK(r.sigma.alpha > 0.0);
    CHECK(r.chi2_reduced < 2.0);
  }
}

TEST_CASE("too few points") {
  const auto t = make_trace({0.0, 0.01}, {0.0, 0.1});
  CHECK(kind_of([&] { fit_trace(t, SequenceKind::ramsey, SpinSystem{}, 2.0); }) ==
        ErrorKind::degenerate_trace);
  CHECK(kind_of([&] { fit_trace(t, SequenceKind::ramsey, SpinSystem{}, 0.0); }) ==
        ErrorKind::non_positive_carrier);
}

TEST_CASE("random round trips up to the shift mirror") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 24; ++i) {
    const double alpha = 0.2 + 4.8 * u(rng);
    const double shift = u(rng) - 0.5;
    const double phi0 = two_pi * u(rng);
    const double delta = pi * (2.0 * u(rng) - 1.0);
    const auto kind = i % 2 ? SequenceKind::dd : SequenceKind::ramsey;
    const auto t = synth(kind, alpha, shift, delta, phi0);
    const auto r = fit_trace(t, kind, SpinSystem{}, 2.0);
    // canonical: shift >= 0; a negative truth maps to (phi0 + pi, -shift, -delta)
    const bool mirror = shift < 0;
    const double want_phi0 = mirror ? phi0 + pi : phi0;
    const double want_delta = mirror ? -delta : delta;
    INFO("case " << i << " alpha=" << alpha << " shift=" << shift << " phi0=" << phi0
                 << " delta=" << delta);
    CHECK(r.params.alpha == Approx(alpha).epsilon(1e-5));
    CHECK(r.params.shift_total == Approx(std::abs(shift)).epsilon(1e-5));
    CHECK(phase_gap(r.params.phi0, want_phi0) < 1e-5);
    CHECK(phase_gap(r.params.delta, want_delta) < 1e-5);
    CHECK(r.params.scale == Approx(1.0).epsilon(1e-5));
    CHECK(r.sign_ambiguous);
  }
}

TEST_CASE("known rf phase resolves the shift sign") {
  const auto t = synth(SequenceKind::dd, 1.62, -0.12, 0.4, 0.7);
  FitOptions opt;
  opt.fixed_phi0 = 0.7;
  const auto r = fit_trace(t, SequenceKind::dd, SpinSystem{}, 2.0, opt);
  CHECK_FALSE(r.sign_ambiguous);
  CHECK(r.params.shift_total == Approx(-0.12).epsilon(1e-6));
  CHECK(r.params.alpha == Approx(1.62).epsilon(1e-6));
  CHECK(r.params.phi0 == 0.7);
  CHECK(r.sigma.phi0 == 0.0);
}

TEST_CASE("bad user init is either recovered from or rejected") {
  SpinSystem sys;
  sys.t2_star = 22.0;
  const auto noisy = sample_trace(synth(SequenceKind::ramsey, 1.33, 0.05, 0.0, 0.0, 22.0),
                                  ReadoutModel{}, 4);
  FitOptions opt;
  opt.init = FitParameters{4.5, -0.45, 2.0, 3.0, 0.2, 0.6};
  try {
    const auto r = fit_trace(noisy, SequenceKind::ramsey, sys, 2.0, opt);
    CHECK(std::abs(r.params.alpha - 1.33) < 3.0 * r.sigma.alpha);
    CHECK(r.chi2_reduced < opt.chi2_gate);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_convergence);
  }
}

TEST_CASE("garbage data fails the residual gate") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto tau = uniform_grid(0.0, 0.01, 301);
  std::vector<double> pop(tau.size()), sig(tau.size(), 0.01);
  for (auto& p : pop) p = u(rng);
  const auto t = make_trace(tau, pop, sig);
  CHECK(kind_of([&] { fit_trace(t, SequenceKind::ramsey, SpinSystem{}, 2.0); }) ==
        ErrorKind::no_convergence);
  const auto plain = make_trace(tau, pop);
  FitOptions strict;
  strict.rel_rms_gate = 0.1;
  CHECK(kind_of([&] { fit_trace(plain, SequenceKind::dd, SpinSystem{}, 2.0, strict); }) ==
        ErrorKind::no_convergence);
}

TEST_CASE("covariance is symmetric positive semidefinite") {
  SpinSystem sys;
  sys.t2_star = 22.0;
  const auto noisy = sample_trace(synth(SequenceKind::ramsey, 2.1, 0.2, 0.3, 1.0, 22.0),
                                  ReadoutModel{}, 12);
  const auto r = fit_trace(noisy, SequenceKind::ramsey, sys, 2.0);
  CHECK((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff() <
        1e-12 * r.covariance.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, n_params, n_params>> es(r.covariance);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12 * es.eigenvalues().maxCoeff());
  for (int k = 0; k < n_params; ++k)
    CHECK(r.sigma.as_vector()(k) == Approx(std::sqrt(r.covariance(k, k))));
  CHECK(std::isfinite(r.residual_rms));
}

TEST_CASE("spectral guess") {
  const auto t = synth(SequenceKind::ramsey, 1.33, 0.05, 0.0, 0.0, inf, 2000);
  const auto g = spectral_guess(t, SequenceKind::ramsey, 2.0);
  // A starting point only: the J2/J1 inversion ignores the phi0 weighting.
  CHECK(g.alpha == Approx(1.33).epsilon(0.25));
  CHECK(g.shift == Approx(0.05).epsilon(0.3));
}

TEST_CASE("two-power separation") {
  SUBCASE("measured shift totals") {
    const auto law = separate_dc_bss({8.8, 13.9, 0.050, 0.141});
    // independent route: Cramer's rule written out
    const double r1 = std::sqrt(8.8), r2 = std::sqrt(13.9);
    const double det = r1 * 13.9 - r2 * 8.8;
    const double a = (0.050 * 13.9 - 0.141 * 8.8) / det;
    const double b = (r1 * 0.141 - r2 * 0.050) / det;
    CHECK(law.a == Approx(a).epsilon(1e-13));
    CHECK(law.b == Approx(b).epsilon(1e-13));
    CHECK(law.nu_dc(8.8) == Approx(-0.19217).epsilon(1e-4));
    CHECK(law.nu_dc(13.9) == Approx(-0.24152).epsilon(1e-4));
    CHECK(law.nu_dc(8.8) == Approx(-0.20).epsilon(0.05));
    CHECK(law.nu_dc(13.9) == Approx(-0.25).epsilon(0.05));
    CHECK(law.nu_bs(8.8) == Approx(0.25).epsilon(0.05));
    CHECK(law.nu_bs(13.9) == Approx(0.39).epsilon(0.05));
    CHECK(law.nu_dc(8.8) + law.nu_bs(8.8) == Approx(0.050).epsilon(1e-12));
  }
  SUBCASE("pure DC and pure Bloch-Siegert") {
    const auto dc = separate_dc_bss({4.0, 9.0, -0.2 * 2.0, -0.2 * 3.0});
    CHECK(std::abs(dc.nu_bs(4.0)) < 1e-15);
    CHECK(dc.a == Approx(-0.2));
    const auto bs = separate_dc_bss({4.0, 9.0, 0.03 * 4.0, 0.03 * 9.0});
    CHECK(std::abs(bs.nu_dc(9.0)) < 1e-15);
    CHECK(bs.b == Approx(0.03));
  }
  SUBCASE("forward then separate is the identity") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      const PowerLaw w{u(rng), u(rng)};
      const double p1 = 1.0 + 10.0 * std::abs(u(rng)), p2 = p1 + 0.5 + 10.0 * std::abs(u(rng));
      const auto got = separate_dc_bss({p1, p2, w.nu_dc(p1) + w.nu_bs(p1), w.nu_dc(p2) + w.nu_bs(p2)});
      CHECK(got.a == Approx(w.a).scale(1.0).epsilon(1e-12));
      CHECK(got.b == Approx(w.b).scale(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("errors") {
    CHECK(kind_of([] { separate_dc_bss({8.8, 8.8, 0.05, 0.05}); }) == ErrorKind::singular_system);
    CHECK(kind_of([] { separate_dc_bss({0.0, 8.8, 0.05, 0.05}); }) == ErrorKind::invalid_argument);
  }
}

TEST_CASE("bloch-siegert inversion and angle") {
  CHECK(invert_bss(0.2503, 2475.151) == Approx(35.20029).epsilon(1e-6));
  CHECK(invert_bss(0.391, 2475.151) == Approx(43.99509).epsilon(1e-6));
  CHECK(invert_bss(0.0, 2475.151) == 0.0);
  CHECK(invert_bss(bloch_siegert_rate(35.2, 2475.151), 2475.151) == Approx(35.2).epsilon(1e-14));
  CHECK(kind_of([] { invert_bss(-0.1, 2475.151); }) == ErrorKind::negative_shift);
  CHECK(kind_of([] { invert_bss(0.1, 0.0); }) == ErrorKind::zero_transition);

  CHECK(estimate_angle(2.66, 35.2) == Approx(85.678).epsilon(1e-5));
  CHECK(estimate_angle(2.66, 0.0) == 0.0);
  CHECK(estimate_angle(0.0, 35.2) == Approx(90.0));
  CHECK(kind_of([] { estimate_angle(0.0, 0.0); }) == ErrorKind::zero_field);
  for (double k : {1e-3, 0.5, 7.0, 1e4})
    CHECK(estimate_angle(k * 2.66, k * 35.2) == Approx(estimate_angle(2.66, 35.2)).epsilon(1e-13));

  const auto r = amplitude_ratio_check(2.66, 3.24, 8.8, 13.9);
  CHECK(r.measured == Approx(1.22).epsilon(0.005));
  CHECK(r.expected == Approx(1.26).epsilon(0.005));
  const auto eq = amplitude_ratio_check(2.0, 2.0, 5.0, 5.0);
  CHECK(eq.measured == 1.0);
  CHECK(eq.expected == 1.0);
  const auto ex = amplitude_ratio_check(1.0, 2.0, 1.0, 4.0);
  CHECK(ex.measured == 2.0);
  CHECK(ex.expected == 2.0);
}

TEST_CASE("solve_fields") {
  const auto sol = solve_fields(column(2.66, 0.050, 8.8), column(3.24, 0.141, 13.9), 2475.151);
  CHECK(sol.columns[0].nu_dc == Approx(-0.20).epsilon(0.05));
  CHECK(sol.columns[1].nu_dc == Approx(-0.25).epsilon(0.05));
  CHECK(sol.columns[0].nu_x == Approx(35.2).epsilon(0.05));
  CHECK(sol.columns[1].nu_x == Approx(44.0).epsilon(0.05));
  for (const auto& c : sol.columns) {
    CHECK(c.theta_deg > 85.0);
    CHECK(c.theta_deg < 87.0);
    CHECK(c.nu_bs >= 0.0);
    CHECK(c.nu_x_sigma > 0.0);
    CHECK(c.nu_x == Approx(invert_bss(c.nu_bs, 2475.151)));
  }
  CHECK(sol.ratio.measured == Approx(3.24 / 2.66));
  CHECK(sol.nu_transition == 2475.151);

  SUBCASE("pure DC gives zero Bloch-Siegert rows") {
    const auto dc = solve_fields(column(2.66, -0.2 * std::sqrt(8.8), 8.8),
                                 column(3.24, -0.2 * std::sqrt(13.9), 13.9), 2475.151);
    for (const auto& c : dc.columns) {
      CHECK(c.nu_bs == 0.0);
      CHECK(c.nu_x == 0.0);
      CHECK(c.theta_deg == 0.0);
    }
  }
  SUBCASE("clearly negative Bloch-Siegert rate is an error") {
    CHECK(kind_of([] {
            solve_fields(column(2.66, 0.1, 8.8), column(3.24, 0.0, 13.9), 2475.151);
          }) == ErrorKind::negative_shift);
  }
  SUBCASE("missing power and equal powers") {
    FitResult a = column(2.66, 0.05, 8.8);
    FitResult b = column(3.24, 0.141, 13.9);
    b.power_mw.reset();
    CHECK(kind_of([&] { solve_fields(a, b, 2475.151); }) == ErrorKind::invalid_argument);
    CHECK(kind_of([&] { solve_fields(a, a, 2475.151); }) == ErrorKind::singular_system);
  }
}

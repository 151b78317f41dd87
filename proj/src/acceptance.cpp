#include "nvrf/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include "nvrf/estimation.hpp"
#include "nvrf/io.hpp"
#include "nvrf/noise.hpp"
#include "nvrf/propagator.hpp"
#include "nvrf/signal_model.hpp"
#include "nvrf/spectral.hpp"

namespace nvrf {

namespace {

constexpr double nu_t_exp = 2475.151;
constexpr double nu_rf = 2.0;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool passed;
  std::string detail;
};

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

Outcome commuting_limit() {
  const auto t0 = std::chrono::steady_clock::now();
  const SpinSystem sys{nu_t_exp, 1};
  const auto h0 = StaticHamiltonian::isolated_transition(nu_t_exp);
  const RfFieldParams f{2.66, 0.0, nu_rf, 0.0, 0.0, {}};
  PropagationConfig cfg;
  cfg.dt = max_step(h0, f);
  Propagator prop(sys, h0, f, cfg);
  const auto grid = uniform_grid(0.0, 0.01, 301);
  const auto numeric = prop.sweep(grid, [](double t) { return build_ramsey(t); });
  const PhaseModelParams p = phase_params_from_field(f, 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    worst = std::max(worst, std::abs(numeric[i] - population_ramsey(p, f, grid[i], INFINITY)));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-6 && secs < 10.0,
          fmt("max|dP| = %.3g over 301 taus (limit 1e-6), %.2f s (limit 10 s)", worst, secs)};
}

Outcome bessel_comb() {
  const RfFieldParams f{2.66, 0.0, nu_rf, 0.0, 0.0, {}};
  const auto t = model_trace(SequenceKind::ramsey, phase_params_from_field(f, 1), f, INFINITY,
                             uniform_grid(0.0, 0.01, 300));
  // Whole periods without padding put every harmonic on a bin with no leakage.
  SpectrumOptions so;
  so.window = WindowKind::rectangular;
  so.pad_factor = 1;
  const Spectrum s = spectrum(t, so);
  const PeakList pl = find_peaks(s, 0.01);
  const auto hd = harmonic_decomposition(1.33, 0.0, 1e-12);
  double amp[4] = {0, 0, 0, 0};
  double pos_err = 0.0;
  bool found = true;
  for (int n = 1; n <= 3; ++n) {
    const Peak* best = nullptr;
    for (const Peak& p : pl.peaks)
      if (std::abs(p.freq - n * nu_rf) < 0.1 && (!best || p.magnitude > best->magnitude)) best = &p;
    if (!best) {
      found = false;
      continue;
    }
    amp[n] = best->magnitude;
    pos_err = std::max(pos_err, std::abs(best->freq - n * nu_rf));
  }
  if (!found) return {false, "missing a harmonic peak at n*2 MHz"};
  const double r2 = amp[2] / amp[1], r3 = amp[3] / amp[1];
  const double e2 = std::abs(hd.cos_coeff[2] / hd.cos_coeff[1]);
  const double e3 = std::abs(hd.cos_coeff[3] / hd.cos_coeff[1]);
  const bool ok = pos_err < 1e-9 && rel(r2, e2) < 0.03 && rel(r3, e3) < 0.03;
  return {ok, fmt("rectangular, pad 1; peak offset %.2g MHz; A2/A1 %.5f vs %.5f, A3/A1 %.5f vs %.5f (tol 3%%)",
                  pos_err, r2, e2, r3, e3)};
}

Outcome bloch_siegert_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  {
    const SpinSystem sys{200.0, 1};
    const auto h0 = StaticHamiltonian::isolated_transition(200.0);
    const RfFieldParams f{0.0, 10.0, nu_rf, 0.0, 0.0, {}};
    PropagationConfig cfg;
    cfg.dt = max_step(h0, f);
    const auto grid = uniform_grid(0.0, 0.05, 321);
    const auto m = measure_numeric_shift(sys, h0, f, grid,
                                         [](double t) { return build_dd(t, 0.5); }, cfg);
    const double want = bloch_siegert_rate(10.0, 200.0);
    ok = ok && rel(m.rate_mhz, want) < 0.05;
    detail += fmt("scaled: %.5f vs %.5f MHz (%+.2f%%, tol 5%%)", m.rate_mhz, want,
                  100 * (m.rate_mhz - want) / want);
  }
  const double mid = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    const SpinSystem sys{nu_t_exp, 1};
    const auto h0 = StaticHamiltonian::isolated_transition(nu_t_exp);
    const RfFieldParams f{0.0, 35.2, nu_rf, 0.0, 0.0, {}};
    PropagationConfig cfg;
    cfg.dt = max_step(h0, f);
    const auto grid = uniform_grid(0.0, 0.25, 17);
    const auto m = measure_numeric_shift(sys, h0, f, grid,
                                         [](double t) { return build_dd(t, 0.5); }, cfg);
    ok = ok && rel(m.rate_mhz, 0.2503) < 0.10;
    detail += fmt("; experimental scale: %.5f vs 0.2503 MHz (%+.2f%%, tol 10%%)", m.rate_mhz,
                  100 * (m.rate_mhz - 0.2503) / 0.2503);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && mid < 120.0;
  detail += fmt("; %.2f s scaled (limit 120 s), %.2f s total", mid, secs);
  return {ok, detail};
}

FitResult fit_synthetic(SequenceKind kind, double nu_z, double shift, double t2, double power) {
  const RfFieldParams f{nu_z, 0.0, nu_rf, 0.0, 0.0, power};
  TraceMeta meta;
  meta.power_mw = power;
  meta.sequence = kind;
  const auto t = model_trace(kind, phase_params_from_field(f, 1, angular(shift)), f, t2,
                             uniform_grid(0.0, 0.01, 301), meta);
  SpinSystem sys{nu_t_exp, 1, t2};
  return fit_trace(t, kind, sys, nu_rf);
}

Outcome table_closure() {
  const FitResult a = fit_synthetic(SequenceKind::dd, 2.66, 0.050, INFINITY, 8.8);
  const FitResult b = fit_synthetic(SequenceKind::dd, 3.24, 0.141, INFINITY, 13.9);
  const FieldSolution s = solve_fields(a, b, nu_t_exp);
  const auto& c0 = s.columns[0];
  const auto& c1 = s.columns[1];
  const bool ok = rel(c0.nu_dc, -0.20) < 0.05 && rel(c1.nu_dc, -0.25) < 0.05 &&
                  rel(c0.nu_x, 35.2) < 0.05 && rel(c1.nu_x, 44.0) < 0.05 &&
                  c0.theta_deg >= 85.0 && c0.theta_deg <= 87.0 && c1.theta_deg >= 85.0 &&
                  c1.theta_deg <= 87.0;
  return {ok, fmt("nu_dc (%.4f, %.4f) MHz vs (-0.20, -0.25); nu_x (%.3f, %.3f) MHz vs (35.2, "
                  "44.0); theta (%.2f, %.2f) deg",
                  c0.nu_dc, c1.nu_dc, c0.nu_x, c1.nu_x, c0.theta_deg, c1.theta_deg)};
}

Outcome ratio_consistency() {
  const FitResult a = fit_synthetic(SequenceKind::ramsey, 2.66, 0.050, 22.0, 8.8);
  const FitResult b = fit_synthetic(SequenceKind::ramsey, 3.24, 0.141, 22.0, 13.9);
  const RatioCheck r = amplitude_ratio_check(a.nu_z(), b.nu_z(), 8.8, 13.9);
  const bool ok = std::abs(r.measured - 1.22) <= 0.02 && std::abs(r.expected - 1.26) < 0.005;
  return {ok, fmt("measured %.4f (want 1.22 +- 0.02), expected %.4f (1.26)", r.measured,
                  r.expected)};
}

Outcome sideband_placement() {
  const double shift = 0.050;
  const RfFieldParams f{2.66, 0.0, nu_rf, 0.0, 0.0, {}};
  const auto t = model_trace(SequenceKind::dd, phase_params_from_field(f, 1, angular(shift)), f,
                             INFINITY, uniform_grid(0.0, 0.01, 10000));
  SpectrumOptions so;
  so.window = default_window(t, nu_rf);
  so.pad_factor = 8;
  const PeakList pl = find_peaks(spectrum(t, so), 0.02);
  double worst = 0.0;
  bool found = true;
  for (int n = 0; n <= 2; ++n) {
    for (double sgn : {-1.0, 1.0}) {
      if (n == 0 && sgn < 0) continue;
      const double want = std::abs(n * nu_rf + sgn * shift);
      double best = INFINITY;
      for (const Peak& p : pl.peaks) best = std::min(best, std::abs(p.freq - want));
      if (!std::isfinite(best) || best > 0.02) found = false;
      worst = std::max(worst, best);
    }
  }
  return {found && worst < 0.01,
          fmt("worst |f - |2n +- 0.05|| = %.2e MHz over n = 0..2 (limit 0.01), resolution %.4f "
              "MHz, %s window",
              worst, pl.resolution, std::string(to_string(so.window)).c_str())};
}

Outcome calibration(const AcceptanceOptions& opt) {
  const RfFieldParams f{2.66, 0.0, nu_rf, 0.0, 0.0, {}};
  const auto ideal = model_trace(SequenceKind::ramsey,
                                 phase_params_from_field(f, 1, angular(0.05)), f, 22.0,
                                 uniform_grid(0.0, 0.01, 301));
  const SpinSystem sys{nu_t_exp, 1, 22.0};
  ReadoutModel rm;
  rm.shots = 100000;
  int in1 = 0, in3 = 0, failed = 0;
  for (int k = 0; k < opt.realizations; ++k) {
    try {
      const TimeTrace t = sample_trace(ideal, rm, opt.seed + std::uint64_t(k));
      const FitResult r = fit_trace(t, SequenceKind::ramsey, sys, nu_rf);
      const double z = std::abs(r.params.alpha - 1.33) / r.sigma.alpha;
      in1 += z <= 1.0;
      in3 += z <= 3.0;
    } catch (const Error&) {
      ++failed;
    }
  }
  const double n = opt.realizations;
  const double c1 = in1 / n, c3 = in3 / n;
  const bool ok = opt.realizations >= 200 && c3 >= 0.99 && c1 >= 0.60 && c1 <= 0.75;
  return {ok, fmt("%d traces: within 3 sigma %.3f (>= 0.99), 1 sigma coverage %.3f ([0.60, 0.75]), "
                  "%d fits failed",
                  opt.realizations, c3, c1, failed)};
}

Outcome property_suites() {
  std::vector<std::string> failures;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  // Phase periodicity in the RF period.
  {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const RfFieldParams f{0.1 + 5 * u(rng), 0.0, 0.5 + 3 * u(rng), two_pi * u(rng), 0.0, {}};
      const double tau = 3 * u(rng);
      worst = std::max(worst, std::abs(phase_longitudinal(f, 1, tau + 1.0 / f.nu_rf) -
                                       phase_longitudinal(f, 1, tau)));
    }
    check(worst < 1e-9, fmt("phase periodicity %.2g", worst));
  }
  // Harmonic series reconstruction.
  {
    double worst = 0.0;
    for (double alpha : {0.2, 1.33, 5.0, 12.0}) {
      for (double phi0 : {0.0, 0.7, 2.5}) {
        const auto hd = harmonic_decomposition(alpha, phi0, 1e-12);
        for (int i = 0; i < 100; ++i) {
          const double x = two_pi * u(rng);
          worst = std::max(worst, std::abs(hd.evaluate(x) -
                                           std::cos(alpha * (std::cos(x) - std::cos(phi0)))));
        }
      }
    }
    check(worst < 1e-9, fmt("harmonic reconstruction %.2g", worst));
  }
  // Propagator unitarity.
  {
    const auto h0 = StaticHamiltonian::isolated_transition(nu_t_exp);
    const RfFieldParams f{2.66, 35.2, nu_rf, 0.3, -0.2, {}};
    RfWindowPropagator w(h0, f, max_step(h0, f));
    double worst = 0.0;
    for (double d : {0.13, 1.0, 3.07}) {
      const Mat3 m = w(d);
      worst = std::max(worst, (m.adjoint() * m - Mat3::Identity()).cwiseAbs().maxCoeff());
    }
    check(worst < 1e-9, fmt("unitarity %.2g", worst));
  }
  // Step halving.
  {
    const SpinSystem sys{200.0, 1};
    const auto h0 = StaticHamiltonian::isolated_transition(200.0);
    const RfFieldParams f{2.66, 10.0, nu_rf, 0.3, 0.0, {}};
    const double dt0 = max_step(h0, f);
    double p[3];
    for (int k = 0; k < 3; ++k) {
      PropagationConfig cfg;
      cfg.dt = dt0 / double(1 << k);
      p[k] = evolve(sys, h0, f, build_dd(1.37, 0.5), cfg).population0;
    }
    const double d1 = std::abs(p[0] - p[1]), d2 = std::abs(p[1] - p[2]);
    check(d2 < 1e-6 && (d2 < 1e-12 || d1 / d2 > 3.0),
          fmt("step halving d1 %.2g d2 %.2g", d1, d2));
  }
  // Serialization round trips.
  {
    TraceMeta meta;
    meta.power_mw = 8.8;
    meta.sequence = SequenceKind::dd;
    meta.seed = 42;
    const RfFieldParams f{2.66, 0.0, nu_rf, 0.4, 0.0, {}};
    const TimeTrace ideal =
        model_trace(SequenceKind::dd, phase_params_from_field(f, 1, angular(0.0503), 0.2), f,
                    INFINITY, uniform_grid(0.0, 0.01, 301), meta);
    const TimeTrace noisy = sample_trace(ideal, ReadoutModel{}, 42);
    std::stringstream ss;
    write_trace_csv(ss, noisy);
    const TimeTrace back = read_trace_csv(ss);
    check(back.tau == noisy.tau && back.population == noisy.population &&
              back.sigma == noisy.sigma && back.meta == noisy.meta,
          "trace CSV round trip");

    const FitResult r = fit_trace(ideal, SequenceKind::dd, SpinSystem{}, nu_rf);
    const FitResult rb = fit_result_from_json(fit_result_to_json(r));
    check(rb.params.as_vector() == r.params.as_vector() &&
              rb.sigma.as_vector() == r.sigma.as_vector() && rb.covariance == r.covariance &&
              rb.residual_rms == r.residual_rms && rb.power_mw == r.power_mw,
          "fit JSON round trip");

    const PulseSequence seq = build_dd(1.234567891234, 0.5);
    check(sequence_from_json(sequence_to_json(seq)) == seq, "sequence JSON round trip");

    const Spectrum sp = spectrum(ideal);
    std::stringstream sc;
    write_spectrum_csv(sc, sp);
    const Spectrum spb = read_spectrum_csv(sc);
    check(spb.freq == sp.freq && spb.magnitude == sp.magnitude, "spectrum CSV round trip");
  }
  if (failures.empty())
    return {true, "periodicity, harmonic reconstruction, unitarity, step halving, round trips"};
  std::string d = "failed:";
  for (const auto& f : failures) d += " [" + f + "]";
  return {false, d};
}

}  // namespace

std::vector<CriterionResult> run_acceptance(std::ostream& out, const AcceptanceOptions& opt) {
  struct Item {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Item> items{
      {1, "commuting-limit exactness", commuting_limit},
      {2, "bessel comb", bessel_comb},
      {3, "bloch-siegert oracle", bloch_siegert_oracle},
      {4, "two-power field closure", table_closure},
      {5, "amplitude ratio consistency", ratio_consistency},
      {6, "sideband placement", sideband_placement},
      {7, "estimator calibration", [&] { return calibration(opt); }},
      {8, "property suites", property_suites},
  };
  std::vector<CriterionResult> results;
  const auto start = std::chrono::steady_clock::now();
  for (const Item& it : items) {
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    r.id = it.id;
    r.name = it.name;
    try {
      const Outcome o = it.run();
      r.passed = o.passed;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ": " << r.detail
        << " (" << fmt("%.2f", r.seconds) << " s)" << std::endl;
    results.push_back(std::move(r));
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (total > 300.0 && !results.empty()) {
    results.back().passed = false;
    out << "FAIL [8] property suites: selftest took " << fmt("%.1f", total)
        << " s (limit 300 s)" << std::endl;
  }
  int passed = 0;
  for (const auto& r : results) passed += r.passed;
  out << passed << "/" << results.size() << " criteria passed in " << fmt("%.1f", total) << " s"
      << std::endl;
  return results;
}

}  // namespace nvrf

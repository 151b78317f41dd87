// nvrf: simulate, analyze, fit and report RF-driven NV free-evolution traces.
//
// Exit codes: 0 ok, 2 validation, 3 I/O, 4 data shape, 5 convergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nvrf/acceptance.hpp"
#include "nvrf/estimation.hpp"
#include "nvrf/io.hpp"
#include "nvrf/noise.hpp"
#include "nvrf/propagator.hpp"
#include "nvrf/signal_model.hpp"
#include "nvrf/spectral.hpp"

using namespace nvrf;

namespace {

enum Exit : int { ok = 0, validation = 2, io_failure = 3, data_shape = 4, convergence = 5 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::io: return io_failure;
    case ErrorKind::non_uniform_sampling:
    case ErrorKind::ambiguous_assignment: return data_shape;
    case ErrorKind::no_convergence:
    case ErrorKind::non_unitary_drift: return convergence;
    default: return validation;
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// "-" means standard input / output.
std::string read_input(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  return read_text_file(path);
}

void write_output(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    std::cout.flush();
    if (!std::cout) throw Error(ErrorKind::io, "write to standard output failed");
    return;
  }
  write_text_file(path, content);
}

TimeTrace load_trace(const std::string& path) {
  std::istringstream in(read_input(path));
  return read_trace_csv(in);
}

double meta_number(const TimeTrace& t, const std::string& key, double fallback) {
  auto it = t.meta.extra.find(key);
  if (it == t.meta.extra.end()) return fallback;
  if (it->second == "inf") return std::numeric_limits<double>::infinity();
  return parse_number(it->second);
}

void require_distinct(std::initializer_list<const std::string*> paths) {
  std::vector<std::string> seen;
  for (const std::string* p : paths) {
    if (p->empty() || *p == "-") continue;
    const std::string canon = std::filesystem::weakly_canonical(*p).string();
    if (std::find(seen.begin(), seen.end(), canon) != seen.end())
      throw Error(ErrorKind::invalid_argument, "input/output paths must be distinct: " + *p);
    seen.push_back(canon);
  }
}

// --- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string sequence = "ramsey";
  RfFieldParams field{2.66, 0.0, 2.0, 0.0, 0.0, std::nullopt};
  double power_mw = -1.0;
  SpinSystem sys{};
  double delta = 0.0;
  double tau_start = 0.0;
  double tau_step = 0.01;
  std::size_t tau_count = 301;
  double tau_pad = default_dd_pad;
  bool oracle = false;
  double dt = 0.0;  // 0: largest admissible step
  std::string frame = "lab";
  std::string dc = "always-on";
  double isolation = 50.0;
  bool noise = false;
  ReadoutModel readout{};
  std::uint64_t seed = 1;
  std::string output = "-";
};

int cmd_simulate(const SimulateArgs& a) {
  const SequenceKind kind = sequence_kind_from_string(a.sequence);
  RfFieldParams f = a.field;
  if (a.power_mw >= 0) f.power_mw = a.power_mw;
  f = checked_field(f);
  validate_spin_system(a.sys);
  if (a.noise) validate_readout(a.readout);
  if (!(a.tau_step > 0) || a.tau_count < 2 || a.tau_start < 0)
    throw Error(ErrorKind::invalid_argument, "tau grid needs step > 0, count >= 2, start >= 0");
  if (a.tau_pad < 0) throw Error(ErrorKind::negative_duration, "tau-pad must be >= 0");
  if (a.dc != "always-on" && a.dc != "window-only")
    throw Error(ErrorKind::invalid_argument, "dc must be always-on or window-only");
  const DcCoupling dc = a.dc == "always-on" ? DcCoupling::always_on : DcCoupling::rf_window_only;
  const double pad = kind == SequenceKind::dd ? a.tau_pad : 0.0;

  auto grid = uniform_grid(a.tau_start, a.tau_step, a.tau_count);
  TraceMeta meta;
  meta.sequence = kind;
  meta.power_mw = f.power_mw;
  meta.extra["generator"] = a.oracle ? "oracle" : "analytic";
  meta.extra["nu_z_mhz"] = format_number(f.nu_z);
  meta.extra["nu_x_mhz"] = format_number(f.nu_x);
  meta.extra["nu_rf_mhz"] = format_number(f.nu_rf);
  meta.extra["phi0_rad"] = format_number(f.phi0);
  meta.extra["nu_dc_mhz"] = format_number(f.nu_dc);
  meta.extra["nu_transition_mhz"] = format_number(a.sys.nu_transition);
  meta.extra["coherence_order"] = std::to_string(a.sys.coherence_order);
  meta.extra["t2_star_us"] = format_number(a.sys.t2_star);
  if (kind == SequenceKind::dd) meta.extra["tau_pad_us"] = format_number(pad);

  TimeTrace trace;
  if (a.oracle) {
    const auto h0 = StaticHamiltonian::isolated_transition(a.sys.nu_transition, a.isolation);
    PropagationConfig cfg;
    cfg.dt = a.dt > 0 ? a.dt : max_step(h0, f);
    cfg.frame = frame_from_string(a.frame);
    cfg.dc = dc;
    Propagator prop(a.sys, h0, f, cfg);
    auto pop = prop.sweep(grid, [&](double t) { return build_sequence(kind, t, pad); });
    if (kind == SequenceKind::ramsey)
      for (std::size_t i = 0; i < grid.size(); ++i) pop[i] = dephase(pop[i], grid[i], a.sys.t2_star);
    trace = make_trace(std::move(grid), std::move(pop), {}, meta);
  } else {
    const double shift = f.nu_dc + bloch_siegert_rate(f.nu_x, a.sys.nu_transition);
    double delta = a.delta;
    if (kind == SequenceKind::dd && dc == DcCoupling::always_on) delta += dd_pad_phase(f.nu_dc, pad);
    const PhaseModelParams p = phase_params_from_field(f, a.sys.coherence_order, angular(shift), delta);
    trace = model_trace(kind, p, f, a.sys.t2_star, std::move(grid), meta);
  }
  if (a.noise) trace = sample_trace(trace, a.readout, a.seed);

  std::ostringstream os;
  write_trace_csv(os, trace);
  write_output(a.output, os.str());
  return ok;
}

// --- spectrum ----------------------------------------------------------------

struct SpectrumArgs {
  std::string input;
  std::string output = "-";
  std::string peaks;
  std::string window = "auto";
  int pad = 0;  // 0: 1 for a periodic rectangular record, else default_pad_factor
  double threshold = 0.05;
  double nu_rf = 0.0;  // 0: from trace metadata, else 2 MHz
  bool strict = false;
};

int cmd_spectrum(const SpectrumArgs& a) {
  require_distinct({&a.input, &a.output, &a.peaks});
  if (a.pad < 0) throw Error(ErrorKind::invalid_argument, "pad must be >= 1 (0: automatic)");
  if (!(a.threshold > 0 && a.threshold < 1))
    throw Error(ErrorKind::invalid_argument, "threshold must be in (0, 1)");
  const TimeTrace t = load_trace(a.input);
  const double nu_rf = a.nu_rf > 0 ? a.nu_rf : meta_number(t, "nu_rf_mhz", 2.0);
  SpectrumOptions so;
  so.window = a.window == "auto" ? default_window(t, nu_rf) : window_from_string(a.window);
  // A periodic record already puts every harmonic on a bin; padding it only
  // adds sinc sidelobes that the peak finder would report.
  if (a.pad > 0)
    so.pad_factor = a.pad;
  else if (a.window == "auto" && so.window == WindowKind::rectangular)
    so.pad_factor = 1;
  const Spectrum s = spectrum(t, so);
  const PeakList pl = find_peaks(s, a.threshold);
  const HarmonicAssignment h = assign_harmonics(pl, nu_rf, !a.strict);

  std::ostringstream spec_os;
  write_spectrum_csv(spec_os, s);
  write_output(a.output, spec_os.str());
  std::ostringstream peak_os;
  write_peaks_csv(peak_os, h);
  if (!a.peaks.empty()) {
    write_output(a.peaks, peak_os.str());
  } else {
    std::cerr << peak_os.str();
  }
  std::cerr << h.peaks.size() << " peaks (" << to_string(so.window) << " window, pad "
            << so.pad_factor << ", resolution " << format_number(pl.resolution)
            << " MHz), consensus |shift| " << format_number(h.consensus_shift) << " MHz";
  if (h.skipped) std::cerr << ", " << h.skipped << " unassignable peaks skipped";
  std::cerr << '\n';
  return ok;
}

// --- fit -----------------------------------------------------------------------

struct FitArgs {
  std::string input;
  std::string output;
  std::string model;    // empty: trace metadata, else ramsey
  double nu_rf = 0.0;   // 0: metadata, else 2
  int q = 0;            // 0: metadata, else 1
  double t2_star = 0.0; // 0: metadata, else infinite
  double nu_transition = 2475.151;
  std::optional<double> phi0;
  std::vector<double> init;
  int max_iter = 500;
};

int cmd_fit(const FitArgs& a) {
  require_distinct({&a.input, &a.output});
  if (!a.init.empty() && a.init.size() != std::size_t(n_params))
    throw Error(ErrorKind::invalid_argument,
                "--init takes alpha,shift_total,delta,phi0,scale,offset");
  const TimeTrace t = load_trace(a.input);
  SequenceKind model = SequenceKind::ramsey;
  if (!a.model.empty())
    model = sequence_kind_from_string(a.model);
  else if (t.meta.sequence)
    model = *t.meta.sequence;
  SpinSystem sys;
  sys.nu_transition = a.nu_transition;
  sys.coherence_order = a.q != 0 ? a.q : int(meta_number(t, "coherence_order", 1));
  sys.t2_star = a.t2_star > 0 ? a.t2_star
                              : meta_number(t, "t2_star_us", std::numeric_limits<double>::infinity());
  const double nu_rf = a.nu_rf > 0 ? a.nu_rf : meta_number(t, "nu_rf_mhz", 2.0);

  FitOptions opt;
  opt.max_iter = a.max_iter;
  opt.fixed_phi0 = a.phi0;
  if (!a.init.empty()) {
    Eigen::Matrix<double, n_params, 1> v;
    for (int i = 0; i < n_params; ++i) v[i] = a.init[std::size_t(i)];
    opt.init = FitParameters::from_vector(v);
  }
  const FitResult r = fit_trace(t, model, sys, nu_rf, opt);

  if (!a.output.empty()) write_output(a.output, fit_result_to_json(r));
  std::ostream& os = a.output == "-" ? std::cerr : std::cout;
  const auto v = r.params.as_vector();
  const auto s = r.sigma.as_vector();
  const char* units[n_params] = {"", " MHz", " rad", " rad", "", ""};
  os << to_string(model) << " fit of " << t.size() << " points, init " << to_string(r.init_source)
     << ", " << r.n_iter << " iterations\n";
  for (int i = 0; i < n_params; ++i) {
    if (i == p_phi0 && a.phi0) {
      os << fmt("  %-12s = %.9g%s (fixed)\n", std::string(param_name(i)).c_str(), v[i], units[i]);
      continue;
    }
    os << fmt("  %-12s = %.9g +- %.3g%s\n", std::string(param_name(i)).c_str(), v[i], s[i],
              units[i]);
  }
  os << fmt("  %-12s = %.9g +- %.3g MHz\n", "nu_z", r.nu_z(), r.nu_z_sigma());
  os << fmt("  residual_rms = %.3g, reduced chi2 = %.3g\n", r.residual_rms, r.chi2_reduced);
  if (r.sign_ambiguous)
    os << "  shift sign is not identifiable with phi0 free; positive branch reported\n";
  return ok;
}

// --- report --------------------------------------------------------------------

struct ReportArgs {
  std::string fit1, fit2;
  std::string output;
  double nu_transition = 2475.151;
};

int cmd_report(const ReportArgs& a) {
  require_distinct({&a.fit1, &a.fit2, &a.output});
  const FitResult f1 = fit_result_from_json(read_input(a.fit1));
  const FitResult f2 = fit_result_from_json(read_input(a.fit2));
  if (!f1.power_mw || !f2.power_mw)
    throw Error(ErrorKind::invalid_argument, "both fit results need power_mw metadata");
  const FieldSolution sol = solve_fields(f1, f2, a.nu_transition);
  if (!a.output.empty()) write_output(a.output, field_solution_to_json(sol));

  std::ostream& os = a.output == "-" ? std::cerr : std::cout;
  const auto& c = sol.columns;
  auto row = [&](const char* name, double v0, double s0, double v1, double s1) {
    os << fmt("%-12s %10.4f +- %-8.2g %10.4f +- %-8.2g\n", name, v0, s0, v1, s1);
  };
  os << fmt("%-12s %22s %22s\n", "", fmt("%.4g mW", c[0].power_mw).c_str(),
            fmt("%.4g mW", c[1].power_mw).c_str());
  row("nu_z / MHz", c[0].nu_z, c[0].nu_z_sigma, c[1].nu_z, c[1].nu_z_sigma);
  row("nu_x / MHz", c[0].nu_x, c[0].nu_x_sigma, c[1].nu_x, c[1].nu_x_sigma);
  row("nu_dc / MHz", c[0].nu_dc, c[0].nu_dc_sigma, c[1].nu_dc, c[1].nu_dc_sigma);
  row("nu_bs / MHz", c[0].nu_bs, c[0].nu_bs_sigma, c[1].nu_bs, c[1].nu_bs_sigma);
  row("shift / MHz", c[0].shift, c[0].shift_sigma, c[1].shift, c[1].shift_sigma);
  os << fmt("%-12s %10.2f %22.2f\n", "theta / deg", c[0].theta_deg, c[1].theta_deg);
  os << fmt("nu_z ratio %.4f, sqrt power ratio %.4f\n", sol.ratio.measured, sol.ratio.expected);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RF field sensing with NV free-evolution traces"};
  app.set_config("--config", "", "TOML/INI run configuration; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "random seed for noise sampling and the calibration suite");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "write a synthetic population trace (CSV)");
  s->add_option("--sequence", sim.sequence, "ramsey or dd")->capture_default_str();
  s->add_option("--nu-z", sim.field.nu_z, "longitudinal RF amplitude, MHz")->capture_default_str();
  s->add_option("--nu-x", sim.field.nu_x, "transverse RF amplitude, MHz")->capture_default_str();
  s->add_option("--nu-rf", sim.field.nu_rf, "RF carrier, MHz")->capture_default_str();
  s->add_option("--phi0", sim.field.phi0, "RF phase at window start, rad")->capture_default_str();
  s->add_option("--nu-dc", sim.field.nu_dc, "DC field projection, MHz")->capture_default_str();
  s->add_option("--power-mw", sim.power_mw, "RF power tag, mW");
  s->add_option("--nu-transition", sim.sys.nu_transition, "working transition, MHz")
      ->capture_default_str();
  s->add_option("--q", sim.sys.coherence_order, "coherence order")->capture_default_str();
  s->add_option("--t2-star", sim.sys.t2_star, "dephasing time, us (ramsey only)");
  s->add_option("--delta", sim.delta, "extra phase offset, rad")->capture_default_str();
  s->add_option("--tau-start", sim.tau_start, "first RF window length, us")->capture_default_str();
  s->add_option("--tau-step", sim.tau_step, "window length step, us")->capture_default_str();
  s->add_option("--tau-count", sim.tau_count, "number of points")->capture_default_str();
  s->add_option("--tau-pad", sim.tau_pad, "dd padding interval, us")->capture_default_str();
  s->add_flag("--oracle", sim.oracle, "propagate the spin-1 Schrodinger equation instead");
  s->add_option("--dt", sim.dt, "oracle step, us (default: largest admissible)");
  s->add_option("--frame", sim.frame, "oracle frame: lab or rotating")->capture_default_str();
  s->add_option("--dc", sim.dc, "DC coupling: always-on or window-only")->capture_default_str();
  s->add_option("--isolation", sim.isolation, "m=+1 level height in units of the transition")
      ->capture_default_str();
  s->add_flag("--noise", sim.noise, "Poisson photon-count sampling");
  s->add_option("--shots", sim.readout.shots, "shots per point")->capture_default_str();
  s->add_option("--rate0", sim.readout.rate0, "photons per shot in |0>")->capture_default_str();
  s->add_option("--rate1", sim.readout.rate1, "photons per shot in |-1>")->capture_default_str();
  s->add_option("-o,--output", sim.output, "output CSV, - for stdout")->capture_default_str();

  SpectrumArgs spa;
  auto* sp = app.add_subcommand("spectrum", "magnitude spectrum and harmonic peak table");
  sp->add_option("-i,--input", spa.input, "trace CSV, - for stdin")->required();
  sp->add_option("-o,--output", spa.output, "spectrum CSV, - for stdout")->capture_default_str();
  sp->add_option("--peaks", spa.peaks, "peak table CSV (default: standard error)");
  sp->add_option("--window", spa.window, "auto, rect or hann")->capture_default_str();
  sp->add_option("--pad", spa.pad,
                 "zero-padding factor (default: 1 for a periodic record, else 8)");
  sp->add_option("--threshold", spa.threshold, "peak threshold, fraction of max")
      ->capture_default_str();
  sp->add_option("--nu-rf", spa.nu_rf, "RF carrier, MHz (default: trace metadata or 2)");
  sp->add_flag("--strict", spa.strict, "fail on peaks that match no harmonic");

  FitArgs fa;
  auto* fi = app.add_subcommand("fit", "least-squares fit of a trace (JSON)");
  fi->add_option("-i,--input", fa.input, "trace CSV, - for stdin")->required();
  fi->add_option("-o,--output", fa.output, "FitResult JSON, - for stdout");
  fi->add_option("--model", fa.model, "ramsey or dd (default: trace metadata)");
  fi->add_option("--nu-rf", fa.nu_rf, "RF carrier, MHz (default: trace metadata or 2)");
  fi->add_option("--q", fa.q, "coherence order (default: trace metadata or 1)");
  fi->add_option("--t2-star", fa.t2_star, "dephasing time, us (default: trace metadata or none)");
  fi->add_option("--nu-transition", fa.nu_transition, "working transition, MHz")
      ->capture_default_str();
  fi->add_option("--phi0", fa.phi0, "known RF phase, rad; fixes the shift sign");
  fi->add_option("--init", fa.init, "alpha,shift_total,delta,phi0,scale,offset")->delimiter(',');
  fi->add_option("--max-iter", fa.max_iter, "iteration cap per start")->capture_default_str();

  ReportArgs ra;
  auto* re = app.add_subcommand("report", "two-power field solution (JSON + table)");
  re->add_option("fit1", ra.fit1, "FitResult JSON at the first power")->required();
  re->add_option("fit2", ra.fit2, "FitResult JSON at the second power")->required();
  re->add_option("-o,--output", ra.output, "FieldSolution JSON, - for stdout");
  re->add_option("--nu-transition", ra.nu_transition, "working transition, MHz")
      ->capture_default_str();

  AcceptanceOptions acc;
  auto* st = app.add_subcommand("selftest", "run the acceptance suite");
  st->add_option("--realizations", acc.realizations, "noise traces for calibration")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    std::cerr << e.what() << '\n';
    return io_failure;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : validation;
  }

  try {
    if (*s) {
      if (app.count("--seed")) sim.seed = seed;
      return cmd_simulate(sim);
    }
    if (*sp) return cmd_spectrum(spa);
    if (*fi) return cmd_fit(fa);
    if (*re) return cmd_report(ra);
    if (*st) {
      if (app.count("--seed")) acc.seed = seed;
      const auto results = run_acceptance(std::cout, acc);
      for (const auto& r : results)
        if (!r.passed) return 1;
      return ok;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return validation;
  }
  return ok;
}

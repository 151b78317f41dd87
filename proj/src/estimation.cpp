#include "nvrf/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nvrf/bessel.hpp"
#include "nvrf/least_squares.hpp"
#include "nvrf/spectral.hpp"

namespace nvrf {

using Vec6 = Eigen::Matrix<double, n_params, 1>;
using Mat6 = Eigen::Matrix<double, n_params, n_params>;

namespace {

constexpr std::string_view kParamNames[n_params] = {"alpha", "shift_total", "delta",
                                                    "phi0",  "scale",       "offset"};

double envelope(SequenceKind kind, double t2_star, double tau) {
  if (kind == SequenceKind::dd) return 1.0;
  return std::isinf(t2_star) ? -1.0 : -std::exp(-tau / t2_star);
}

// Maps a parameter set onto the representative every fit reports:
// alpha >= 0, scale >= 0, and, when phi0 is free, shift_total >= 0.
FitParameters canonical(FitParameters p, bool phi0_free) {
  if (phi0_free) {
    if (p.alpha < 0) {
      p.alpha = -p.alpha;
      p.phi0 += std::numbers::pi;
    }
    if (p.shift_total < 0) {
      p.phi0 += std::numbers::pi;
      p.shift_total = -p.shift_total;
      p.delta = -p.delta;
    }
  } else if (p.alpha < 0) {
    p.alpha = -p.alpha;
    p.shift_total = -p.shift_total;
    p.delta = -p.delta;
  }
  if (p.scale < 0) {
    p.offset += p.scale;
    p.scale = -p.scale;
    p.delta += std::numbers::pi;
  }
  p.phi0 = wrap_phase(p.phi0);
  p.delta = wrap_phase_symmetric(p.delta);
  return p;
}

struct Problem {
  const TimeTrace& trace;
  SequenceKind kind;
  double nu_rf;
  double t2;
  std::optional<double> fixed_phi0;
  std::vector<double> weight;  // 1/sigma, or all ones

  int n_free() const { return fixed_phi0 ? n_params - 1 : n_params; }

  FitParameters unpack(const Eigen::VectorXd& th) const {
    FitParameters p;
    int k = 0;
    p.alpha = th[k++];
    p.shift_total = th[k++];
    p.delta = th[k++];
    p.phi0 = fixed_phi0 ? *fixed_phi0 : th[k++];
    p.scale = th[k++];
    p.offset = th[k++];
    return p;
  }

  Eigen::VectorXd pack(const FitParameters& p) const {
    Eigen::VectorXd th(n_free());
    int k = 0;
    th[k++] = p.alpha;
    th[k++] = p.shift_total;
    th[k++] = p.delta;
    if (!fixed_phi0) th[k++] = p.phi0;
    th[k++] = p.scale;
    th[k++] = p.offset;
    return th;
  }

  void residuals(const Eigen::VectorXd& th, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const FitParameters p = unpack(th);
    const std::size_t n = trace.size();
    r.resize(Eigen::Index(n));
    if (jac) jac->resize(Eigen::Index(n), n_free());
    for (std::size_t i = 0; i < n; ++i) {
      const double tau = trace.tau[i];
      r[Eigen::Index(i)] = weight[i] * (model_value(p, kind, nu_rf, t2, tau) - trace.population[i]);
      if (jac) {
        const Vec6 g = model_gradient(p, kind, nu_rf, t2, tau);
        int k = 0;
        for (int j = 0; j < n_params; ++j) {
          if (j == p_phi0 && fixed_phi0) continue;
          (*jac)(Eigen::Index(i), k++) = weight[i] * g[j];
        }
      }
    }
  }
};

// Reduced cost of (alpha, phi0, shift) with delta, scale and offset solved in
// closed form:  y ~ c0 + c1 g cos(psi) + c2 g sin(psi),
// psi = alpha cos(w tau + phi0) + 2 pi shift tau.
struct Screened {
  double cost;
  FitParameters params;
};

struct ScreenRows {
  std::vector<double> tau, g, w2, y, cw, sw;
};

ScreenRows screen_rows(const Problem& pr, std::size_t max_rows) {
  ScreenRows sr;
  const double w_rf = angular(pr.nu_rf);
  const std::size_t stride = std::max<std::size_t>(1, pr.trace.size() / max_rows);
  for (std::size_t i = 0; i < pr.trace.size(); i += stride) {
    const double tau = pr.trace.tau[i];
    sr.tau.push_back(tau);
    sr.g.push_back(envelope(pr.kind, pr.t2, tau));
    sr.w2.push_back(pr.weight[i] * pr.weight[i]);
    sr.y.push_back(pr.trace.population[i]);
    sr.cw.push_back(std::cos(w_rf * tau));
    sr.sw.push_back(std::sin(w_rf * tau));
  }
  return sr;
}

Screened screen(const ScreenRows& sr, double alpha, double phi0, double shift) {
  const double w_s = angular(shift);
  const double ca = alpha * std::cos(phi0), sa = alpha * std::sin(phi0);
  double a00 = 0, a01 = 0, a02 = 0, a11 = 0, a12 = 0, a22 = 0, b0 = 0, b1 = 0, b2 = 0, yy = 0;
  for (std::size_t i = 0; i < sr.tau.size(); ++i) {
    const double psi = ca * sr.cw[i] - sa * sr.sw[i] + w_s * sr.tau[i];
    const double f1 = sr.g[i] * std::cos(psi), f2 = sr.g[i] * std::sin(psi);
    const double w = sr.w2[i], wy = w * sr.y[i];
    a00 += w;
    a01 += w * f1;
    a02 += w * f2;
    a11 += w * f1 * f1;
    a12 += w * f1 * f2;
    a22 += w * f2 * f2;
    b0 += wy;
    b1 += wy * f1;
    b2 += wy * f2;
    yy += wy * sr.y[i];
  }
  Eigen::Matrix3d a;
  a << a00, a01, a02, a01, a11, a12, a02, a12, a22;
  a.diagonal().array() += 1e-12 * a.trace();
  const Eigen::Vector3d b(b0, b1, b2);
  const Eigen::Vector3d c = a.ldlt().solve(b);
  Screened s;
  s.cost = std::max(0.0, yy - c.dot(b));
  FitParameters& p = s.params;
  p.alpha = alpha;
  p.phi0 = phi0;
  p.shift_total = shift;
  p.scale = 2.0 * std::hypot(c[1], c[2]);
  p.offset = c[0] - 0.5 * p.scale;
  p.delta = std::atan2(-c[2], c[1]) + ca;
  return s;
}

double j2_over_j1_inverse(double ratio) {
  // J2/J1 rises monotonically from 0 to +inf on (0, j_{1,1}).
  double lo = 1e-6, hi = 3.8316;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = bessel_j(2, mid) / bessel_j(1, mid);
    (r < ratio ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Mat6 pseudo_inverse_psd(const Mat6& m) {
  Eigen::SelfAdjointEigenSolver<Mat6> es(0.5 * (m + m.transpose()));
  const auto& ev = es.eigenvalues();
  const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Vec6 inv;
  for (int i = 0; i < n_params; ++i) inv[i] = ev[i] > cutoff ? 1.0 / ev[i] : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::string_view param_name(int index) {
  if (index < 0 || index >= n_params) throw Error(ErrorKind::invalid_argument, "parameter index");
  return kParamNames[index];
}

Vec6 FitParameters::as_vector() const {
  Vec6 v;
  v << alpha, shift_total, delta, phi0, scale, offset;
  return v;
}

FitParameters FitParameters::from_vector(const Vec6& v) {
  return {v[p_alpha], v[p_shift], v[p_delta], v[p_phi0], v[p_scale], v[p_offset]};
}

double model_value(const FitParameters& p, SequenceKind kind, double nu_rf, double t2_star,
                   double tau) {
  const double w = angular(nu_rf);
  const double phi = p.alpha * (std::cos(w * tau + p.phi0) - std::cos(p.phi0)) +
                     angular(p.shift_total) * tau + p.delta;
  return p.offset + 0.5 * p.scale * (1.0 + envelope(kind, t2_star, tau) * std::cos(phi));
}

Vec6 model_gradient(const FitParameters& p, SequenceKind kind, double nu_rf, double t2_star,
                    double tau) {
  const double w = angular(nu_rf);
  const double x = w * tau + p.phi0;
  const double phi = p.alpha * (std::cos(x) - std::cos(p.phi0)) + angular(p.shift_total) * tau +
                     p.delta;
  const double g = envelope(kind, t2_star, tau);
  const double d_phi = -0.5 * p.scale * g * std::sin(phi);
  Vec6 out;
  out[p_alpha] = d_phi * (std::cos(x) - std::cos(p.phi0));
  out[p_shift] = d_phi * two_pi * tau;
  out[p_delta] = d_phi;
  out[p_phi0] = d_phi * p.alpha * (std::sin(p.phi0) - std::sin(x));
  out[p_scale] = 0.5 * (1.0 + g * std::cos(phi));
  out[p_offset] = 1.0;
  return out;
}

Vec6 model_gradient_fd(const FitParameters& p, SequenceKind kind, double nu_rf, double t2_star,
                       double tau, double h) {
  const Vec6 base = p.as_vector();
  Vec6 out;
  for (int j = 0; j < n_params; ++j) {
    const double step = h * std::max(1.0, std::abs(base[j]));
    Vec6 up = base, dn = base;
    up[j] += step;
    dn[j] -= step;
    out[j] = (model_value(FitParameters::from_vector(up), kind, nu_rf, t2_star, tau) -
              model_value(FitParameters::from_vector(dn), kind, nu_rf, t2_star, tau)) /
             (2.0 * step);
  }
  return out;
}

std::string_view to_string(InitSource s) { return s == InitSource::spectral ? "spectral" : "user"; }

InitSource init_source_from_string(std::string_view s) {
  if (s == "spectral") return InitSource::spectral;
  if (s == "user") return InitSource::user;
  throw Error(ErrorKind::parse, "unknown init_source '" + std::string(s) + "'");
}

SpectralGuess spectral_guess(const TimeTrace& t, SequenceKind /*model*/, double nu_rf) {
  SpectralGuess g;
  g.alpha = 1.0;
  SpectrumOptions so;
  so.window = default_window(t, nu_rf);
  if (so.window == WindowKind::rectangular) so.pad_factor = 1;
  const Spectrum s = spectrum(t, so);
  const PeakList pl = find_peaks(s, 0.02);
  if (!pl.peaks.empty()) {
    const HarmonicAssignment ha = assign_harmonics(pl, nu_rf, true);
    double a1 = 0.0, a2 = 0.0;
    for (const LabeledPeak& lp : ha.peaks) {
      if (lp.n == 1) a1 += lp.peak.magnitude;
      if (lp.n == 2) a2 += lp.peak.magnitude;
    }
    if (a1 > 0) g.alpha = j2_over_j1_inverse(std::clamp(a2 / a1, 1e-4, 50.0));
    g.shift = ha.consensus_shift;
  }
  // First-harmonic phase at the sampling origin: y ~ cos(w tau + phi0), mod pi.
  const double w = angular(nu_rf);
  const double mean =
      std::accumulate(t.population.begin(), t.population.end(), 0.0) / double(t.size());
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    re += (t.population[i] - mean) * std::cos(w * t.tau[i]);
    im -= (t.population[i] - mean) * std::sin(w * t.tau[i]);
  }
  g.phi0 = std::fmod(wrap_phase(std::atan2(im, re)), std::numbers::pi);
  return g;
}

FitResult fit_trace(const TimeTrace& t, SequenceKind model, const SpinSystem& sys, double nu_rf,
                    const FitOptions& opt) {
  validate_spin_system(sys);
  if (!(nu_rf > 0)) throw Error(ErrorKind::non_positive_carrier, "nu_rf must be > 0");
  const int free = opt.fixed_phi0 ? n_params - 1 : n_params;
  if (int(t.size()) < free)
    throw Error(ErrorKind::degenerate_trace, std::to_string(t.size()) + " points for " +
                                                 std::to_string(free) + " free parameters");
  const double t2 = model == SequenceKind::ramsey ? sys.t2_star
                                                  : std::numeric_limits<double>::infinity();

  Problem pr{t, model, nu_rf, t2, opt.fixed_phi0, std::vector<double>(t.size(), 1.0)};
  bool weighted = false;
  if (t.has_sigma()) {
    double floor = std::numeric_limits<double>::infinity();
    for (double s : t.sigma)
      if (s > 0) floor = std::min(floor, s);
    if (std::isfinite(floor)) {
      weighted = true;
      for (std::size_t i = 0; i < t.size(); ++i) pr.weight[i] = 1.0 / std::max(t.sigma[i], floor);
    }
  }

  // Candidate screening on at most ~600 evenly strided samples.
  const ScreenRows rows = screen_rows(pr, 600);

  const SpectralGuess sg = spectral_guess(t, model, nu_rf);
  const double record = t.tau.back() - t.tau.front();

  std::vector<double> alphas{sg.alpha};
  for (double a = 0.1; a < 6.5; a *= 1.18) alphas.push_back(a);

  std::vector<double> shifts{0.0, sg.shift, -sg.shift};
  {
    const double s_max = std::max(0.6, 1.5 * sg.shift);
    const double step = std::max(1.0 / (4.0 * record), s_max / 20.0);
    for (double s = step; s <= s_max + 1e-12; s += step) {
      shifts.push_back(s);
      shifts.push_back(-s);
    }
  }

  std::vector<Screened> cands;
  for (double a : alphas) {
    std::vector<double> phis;
    if (opt.fixed_phi0) {
      phis.push_back(*opt.fixed_phi0);
    } else {
      const int n_phi = std::max(opt.phi0_starts, int(std::ceil(a * two_pi / 0.5)));
      for (int k = 0; k < n_phi; ++k) phis.push_back(sg.phi0 + two_pi * k / n_phi);
    }
    for (double ph : phis)
      for (double s : shifts) cands.push_back(screen(rows, a, ph, s));
  }
  const std::size_t keep = std::min<std::size_t>(cands.size(), std::size_t(opt.refine_starts));
  std::partial_sort(cands.begin(), cands.begin() + std::ptrdiff_t(keep), cands.end(),
                    [](const Screened& x, const Screened& y) { return x.cost < y.cost; });
  cands.resize(keep);

  struct Start {
    FitParameters p;
    InitSource src;
  };
  std::vector<Start> starts;
  if (opt.init) {
    FitParameters u = *opt.init;
    if (opt.fixed_phi0) u.phi0 = *opt.fixed_phi0;
    starts.push_back({u, InitSource::user});
  }
  for (const Screened& c : cands) starts.push_back({c.params, InitSource::spectral});

  LmOptions lmo;
  lmo.max_iter = opt.max_iter;
  const ResidualFn fn = [&pr](const Eigen::VectorXd& th, Eigen::VectorXd& r, Eigen::MatrixXd* j) {
    pr.residuals(th, r, j);
  };

  std::optional<LmResult> best;
  InitSource best_src = InitSource::spectral;
  for (const Start& s : starts) {
    LmResult r = levenberg_marquardt(fn, pr.pack(s.p), lmo);
    if (!r.converged() || !std::isfinite(r.cost)) continue;
    if (!best || r.cost < best->cost * (1.0 - 1e-12)) {
      best = std::move(r);
      best_src = s.src;
    }
  }
  if (!best) throw Error(ErrorKind::no_convergence, "no start converged within the iteration cap");

  FitResult out;
  out.params = canonical(pr.unpack(best->theta), !opt.fixed_phi0);
  if (opt.fixed_phi0) out.params.phi0 = *opt.fixed_phi0;
  out.n_iter = best->iterations;
  out.init_source = best_src;
  // Free phi0 leaves the exact mirror (phi0 + pi, -shift, -delta): both signs
  // fit identically, so the positive branch is reported and flagged.
  out.sign_ambiguous = !opt.fixed_phi0 && out.params.shift_total != 0.0;
  out.model = model;
  out.nu_rf = nu_rf;
  out.coherence_order = sys.coherence_order;
  out.t2_star = t2;
  out.power_mw = t.meta.power_mw;

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  pr.residuals(pr.pack(out.params), r, &jac);
  const double ssr_w = r.squaredNorm();
  const int dof = std::max(1, int(t.size()) - free);
  out.chi2_reduced = ssr_w / dof;
  double ssr = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = model_value(out.params, model, nu_rf, t2, t.tau[i]) - t.population[i];
    ssr += d * d;
  }
  out.residual_rms = std::sqrt(ssr / double(t.size()));

  Mat6 jtj = Mat6::Zero();
  {
    const Eigen::MatrixXd small = jac.transpose() * jac;
    std::vector<int> map;
    for (int j = 0; j < n_params; ++j)
      if (!(j == p_phi0 && opt.fixed_phi0)) map.push_back(j);
    for (int a = 0; a < free; ++a)
      for (int b = 0; b < free; ++b) jtj(map[a], map[b]) = small(a, b);
  }
  out.covariance = pseudo_inverse_psd(jtj);
  if (!weighted) out.covariance *= ssr_w / dof;
  if (opt.fixed_phi0) {
    out.covariance.row(p_phi0).setZero();
    out.covariance.col(p_phi0).setZero();
  }
  Vec6 sd = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.sigma = FitParameters::from_vector(sd);

  // Residual gate: never hand back a fit that does not describe the data.
  if (weighted) {
    if (out.chi2_reduced > opt.chi2_gate)
      throw Error(ErrorKind::no_convergence,
                  "best fit fails residual gate: reduced chi2 " + std::to_string(out.chi2_reduced));
  } else {
    const double mean =
        std::accumulate(t.population.begin(), t.population.end(), 0.0) / double(t.size());
    double var = 0.0;
    for (double y : t.population) var += (y - mean) * (y - mean);
    const double sd_y = std::sqrt(var / double(t.size()));
    if (out.residual_rms > std::max(opt.rel_rms_gate * sd_y, 1e-9))
      throw Error(ErrorKind::no_convergence,
                  "best fit fails residual gate: rms " + std::to_string(out.residual_rms));
  }
  return out;
}

PowerLaw separate_dc_bss(const PowerPair& pp) {
  if (!(pp.p1 > 0) || !(pp.p2 > 0))
    throw Error(ErrorKind::invalid_argument, "powers must be > 0");
  const double r1 = std::sqrt(pp.p1), r2 = std::sqrt(pp.p2);
  const double det = r1 * pp.p2 - r2 * pp.p1;
  if (std::abs(det) <= 1e-12 * r1 * r2 * std::max(r1, r2))
    throw Error(ErrorKind::singular_system, "powers must differ");
  return {(pp.shift1 * pp.p2 - pp.shift2 * pp.p1) / det, (r1 * pp.shift2 - r2 * pp.shift1) / det};
}

double invert_bss(double nu_bs, double nu_transition) {
  if (!(nu_transition > 0)) throw Error(ErrorKind::zero_transition, "nu_transition must be > 0");
  if (nu_bs < 0) throw Error(ErrorKind::negative_shift, "nu_bs must be >= 0");
  return std::sqrt(2.0 * nu_bs * nu_transition);
}

double estimate_angle(double nu_z, double nu_x) {
  if (nu_z == 0.0 && nu_x == 0.0) throw Error(ErrorKind::zero_field, "nu_z and nu_x both zero");
  return std::atan2(std::abs(nu_x), std::abs(nu_z)) * 180.0 / std::numbers::pi;
}

RatioCheck amplitude_ratio_check(double nu_z_1, double nu_z_2, double p1, double p2) {
  return {nu_z_2 / nu_z_1, std::sqrt(p2 / p1)};
}

FieldSolution solve_fields(const FitResult& fit1, const FitResult& fit2, double nu_transition) {
  if (!fit1.power_mw || !fit2.power_mw)
    throw Error(ErrorKind::invalid_argument, "both fits need power_mw metadata");
  const PowerPair pp{*fit1.power_mw, *fit2.power_mw, fit1.params.shift_total,
                     fit2.params.shift_total};
  FieldSolution sol;
  sol.law = separate_dc_bss(pp);
  sol.nu_transition = nu_transition;

  // (a, b) = M^-1 (s1, s2) with M = [[sqrt p1, p1], [sqrt p2, p2]].
  const double r1 = std::sqrt(pp.p1), r2 = std::sqrt(pp.p2);
  const double det = r1 * pp.p2 - r2 * pp.p1;
  const double s1 = fit1.sigma.shift_total, s2 = fit2.sigma.shift_total;
  const double sa = std::hypot(pp.p2 * s1, pp.p1 * s2) / std::abs(det);
  const double sb = std::hypot(r2 * s1, r1 * s2) / std::abs(det);

  const FitResult* fits[2] = {&fit1, &fit2};
  for (int i = 0; i < 2; ++i) {
    PowerColumn& c = sol.columns[std::size_t(i)];
    const double p = i == 0 ? pp.p1 : pp.p2;
    c.power_mw = p;
    c.nu_z = std::abs(fits[i]->nu_z());
    c.nu_z_sigma = fits[i]->nu_z_sigma();
    c.shift = fits[i]->params.shift_total;
    c.shift_sigma = fits[i]->sigma.shift_total;
    c.nu_dc = sol.law.nu_dc(p);
    c.nu_dc_sigma = sa * std::sqrt(p);
    c.nu_bs = sol.law.nu_bs(p);
    c.nu_bs_sigma = sb * p;
    // Exactly proportional-to-sqrt(p) shifts leave rounding residue in b.
    if (std::abs(c.nu_bs) <= 1e-12 * std::max(std::abs(c.shift), std::abs(c.nu_dc))) c.nu_bs = 0.0;
    if (c.nu_bs < 0) {
      if (-c.nu_bs <= std::max(3.0 * c.nu_bs_sigma, 1e-9))
        c.nu_bs = 0.0;
      else
        throw Error(ErrorKind::negative_shift,
                    "Bloch-Siegert rate " + std::to_string(c.nu_bs) + " MHz is negative");
    }
    c.nu_x = invert_bss(c.nu_bs, nu_transition);
    c.nu_x_sigma = c.nu_x > 0 ? nu_transition * c.nu_bs_sigma / c.nu_x
                              : std::sqrt(2.0 * c.nu_bs_sigma * nu_transition);
    c.theta_deg = estimate_angle(c.nu_z, c.nu_x);
  }
  sol.ratio = amplitude_ratio_check(sol.columns[0].nu_z, sol.columns[1].nu_z, pp.p1, pp.p2);
  return sol;
}

}  // namespace nvrf

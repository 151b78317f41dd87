#include "nvrf/signal_model.hpp"

#include <algorithm>
#include <cmath>

#include "nvrf/bessel.hpp"

namespace nvrf {

double longitudinal_alpha(const RfFieldParams& f, int coherence_order) {
  if (f.nu_rf == 0.0) throw Error(ErrorKind::zero_carrier, "nu_rf is zero");
  return double(coherence_order) * f.nu_z / f.nu_rf;
}

namespace {

double phase_z(double alpha, double nu_rf, double phi0, double tau_p) {
  return alpha * (std::cos(angular(nu_rf) * tau_p + phi0) - std::cos(phi0));
}

}  // namespace

double phase_longitudinal(const RfFieldParams& f, int coherence_order, double tau_p) {
  const double alpha = longitudinal_alpha(f, coherence_order);
  return phase_z(alpha, f.nu_rf, f.phi0, tau_p);
}

double bloch_siegert_rate(double nu_x, double nu_transition) {
  if (nu_transition == 0.0) throw Error(ErrorKind::zero_transition, "nu_transition is zero");
  if (!(nu_transition > 0)) throw Error(ErrorKind::invalid_argument, "nu_transition must be > 0");
  return nu_x * nu_x / (2.0 * nu_transition);
}

double phase_total(const PhaseModelParams& p, const RfFieldParams& f, double tau_p) {
  if (f.nu_rf == 0.0) throw Error(ErrorKind::zero_carrier, "nu_rf is zero");
  return phase_z(p.alpha, f.nu_rf, f.phi0, tau_p) + p.shift_total * tau_p + p.delta;
}

PhaseModelParams phase_params_from_field(const RfFieldParams& f, int coherence_order,
                                         double shift_total, double delta) {
  return {longitudinal_alpha(f, coherence_order), shift_total, wrap_phase_symmetric(delta)};
}

double population_ramsey(const PhaseModelParams& p, const RfFieldParams& f, double tau_p,
                         double t2_star) {
  const double decay = std::isinf(t2_star) ? 1.0 : std::exp(-tau_p / t2_star);
  return 0.5 * (1.0 - decay * std::cos(phase_total(p, f, tau_p)));
}

double population_dd(const PhaseModelParams& p, const RfFieldParams& f, double tau_p) {
  return 0.5 * (1.0 + std::cos(phase_total(p, f, tau_p)));
}

double population(SequenceKind kind, const PhaseModelParams& p, const RfFieldParams& f,
                  double tau_p, double t2_star) {
  return kind == SequenceKind::ramsey ? population_ramsey(p, f, tau_p, t2_star)
                                      : population_dd(p, f, tau_p);
}

double HarmonicDecomposition::evaluate(double x) const {
  double s = 0.0;
  for (std::size_t n = 0; n < cos_coeff.size(); ++n) s += cos_coeff[n] * std::cos(double(n) * x);
  return s;
}

HarmonicDecomposition harmonic_decomposition(double alpha, double phi0, double tol) {
  if (!(tol > 0)) throw Error(ErrorKind::invalid_argument, "tolerance must be > 0");
  const double a = std::abs(alpha);

  // Every coefficient is 2 w J_n(alpha) with |w| <= 1, so the discarded tail
  // of the series is bounded by 2 * sum_{n > n_max} |J_n|.
  int n_max = std::max(10, int(std::ceil(a + 8.0 * std::cbrt(a) + 10.0)));
  while (n_max < 400 && 2.0 * bessel_tail_bound(n_max, a) >= tol) ++n_max;
  while (n_max > 0 && 2.0 * bessel_tail_bound(n_max - 1, a) < tol) --n_max;

  const auto j = bessel_j_sequence(n_max, alpha);
  const double b = alpha * std::cos(phi0);
  const double wc = std::cos(b);
  const double ws = std::sin(b);

  HarmonicDecomposition h;
  h.alpha = alpha;
  h.phi0 = phi0;
  h.cos_coeff.resize(std::size_t(n_max) + 1);
  h.cos_coeff[0] = wc * j[0];
  for (int n = 1; n <= n_max; ++n) {
    // (-1)^k with k = floor(n/2): S_c carries even n = 2k, S_s odd n = 2k+1
    const double sign = ((n / 2) % 2 == 0) ? 1.0 : -1.0;
    const double w = (n % 2 == 0) ? wc : ws;
    h.cos_coeff[std::size_t(n)] = 2.0 * sign * w * j[std::size_t(n)];
  }
  h.truncation_error = 2.0 * bessel_tail_bound(n_max, a);
  return h;
}

double dd_pad_phase(double nu_dc, double tau_pad) { return -2.0 * angular(nu_dc) * tau_pad; }

TimeTrace model_trace(SequenceKind kind, const PhaseModelParams& p, const RfFieldParams& f,
                      double t2_star, std::vector<double> tau, TraceMeta meta) {
  std::vector<double> pop;
  pop.reserve(tau.size());
  for (double t : tau) pop.push_back(population(kind, p, f, t, t2_star));
  return make_trace(std::move(tau), std::move(pop), {}, std::move(meta));
}

TimeTrace analytic_trace(SequenceKind kind, const RfFieldParams& f, const SpinSystem& sys,
                         std::vector<double> tau, double delta) {
  validate_spin_system(sys);
  const RfFieldParams g = checked_field(f);
  const double shift = f.nu_dc + bloch_siegert_rate(g.nu_x, sys.nu_transition);
  const PhaseModelParams p = phase_params_from_field(g, sys.coherence_order, angular(shift), delta);
  TraceMeta meta;
  meta.sequence = kind;
  meta.power_mw = g.power_mw;
  return model_trace(kind, p, g, sys.t2_star, std::move(tau), std::move(meta));
}

}  // namespace nvrf

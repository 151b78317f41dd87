#pragma once

// Closed-form phase and population models for free-evolution RF sensing.
//
// phi_z(tau)  = alpha [cos(w_rf tau + phi0) - cos(phi0)],  alpha = q w_z / w_rf
// phi_f(tau)  = phi_z(tau) + shift_total * tau + delta
// P_ramsey    = (1 - exp(-tau/T2*) cos phi_f) / 2
// P_dd        = (1 + cos phi_f) / 2
//
// shift_total lumps the DC projection and the Bloch-Siegert rate; the two are
// only separated across RF power levels (see estimation.hpp).

#include <vector>

#include "nvrf/core.hpp"

namespace nvrf {

struct PhaseModelParams {
  double alpha = 0.0;        // dimensionless
  double shift_total = 0.0;  // rad/us
  double delta = 0.0;        // rad, kept in (-pi, pi]
};

/// alpha = q * nu_z / nu_rf. Throws zero_carrier when nu_rf == 0.
double longitudinal_alpha(const RfFieldParams& f, int coherence_order);

/// Phase from the longitudinal RF component after an RF window of length tau_p.
double phase_longitudinal(const RfFieldParams& f, int coherence_order, double tau_p);

/// Bloch-Siegert rate nu_x^2 / (2 nu_transition), all in MHz.
double bloch_siegert_rate(double nu_x, double nu_transition);

/// Total fitted phase. The alpha inside `p` is used; f supplies nu_rf and phi0.
double phase_total(const PhaseModelParams& p, const RfFieldParams& f, double tau_p);

/// Convenience: phase model with alpha derived from the field and shift/delta given.
PhaseModelParams phase_params_from_field(const RfFieldParams& f, int coherence_order,
                                         double shift_total = 0.0, double delta = 0.0);

double population_ramsey(const PhaseModelParams& p, const RfFieldParams& f, double tau_p,
                         double t2_star);
double population_dd(const PhaseModelParams& p, const RfFieldParams& f, double tau_p);

double population(SequenceKind kind, const PhaseModelParams& p, const RfFieldParams& f,
                  double tau_p, double t2_star);

/// Cosine series of cos(phi_z) in x = w_rf tau + phi0:
///   cos phi_z = sum_n cos_coeff[n] cos(n x)
struct HarmonicDecomposition {
  double alpha = 0.0;
  double phi0 = 0.0;
  std::vector<double> cos_coeff;  // index n = 0 .. n_max
  double truncation_error = 0.0;  // bound on max |discarded tail|

  int n_max() const { return int(cos_coeff.size()) - 1; }
  /// Truncated series evaluated at x.
  double evaluate(double x) const;
};

HarmonicDecomposition harmonic_decomposition(double alpha, double phi0, double tol);

/// Extra constant phase of a dd sequence when the DC projection also acts
/// during the two padding intervals: -2 w_dc tau_pad.
double dd_pad_phase(double nu_dc, double tau_pad);

/// Samples the population model on `tau`.
TimeTrace model_trace(SequenceKind kind, const PhaseModelParams& p, const RfFieldParams& f,
                      double t2_star, std::vector<double> tau, TraceMeta meta = {});

/// Same, with the secular rate built from the field: nu_dc + nu_x^2 / (2 nu_transition).
/// Metadata records the sequence and the field's power tag.
TimeTrace analytic_trace(SequenceKind kind, const RfFieldParams& f, const SpinSystem& sys,
                         std::vector<double> tau, double delta = 0.0);

}  // namespace nvrf

#pragma once

// Inverse problem: fit free-evolution traces, then turn fitted secular rates
// at two RF powers into DC and Bloch-Siegert parts, the transverse amplitude
// and the field angle.

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>

#include "nvrf/core.hpp"

namespace nvrf {

/// Fit parameter vector layout.
enum Param : int { p_alpha = 0, p_shift, p_delta, p_phi0, p_scale, p_offset, n_params };

std::string_view param_name(int index);

struct FitParameters {
  double alpha = 0.0;
  double shift_total = 0.0;  // MHz (omega_DC + omega_BS) / 2pi
  double delta = 0.0;        // rad
  double phi0 = 0.0;         // rad
  double scale = 1.0;        // readout contrast
  double offset = 0.0;       // readout baseline

  Eigen::Matrix<double, n_params, 1> as_vector() const;
  static FitParameters from_vector(const Eigen::Matrix<double, n_params, 1>& v);
};

/// Model:  offset + scale * (1 + g(tau) cos phi_f(tau)) / 2
/// with g = -exp(-tau/T2*) for ramsey and +1 for dd.
double model_value(const FitParameters& p, SequenceKind kind, double nu_rf, double t2_star,
                   double tau);
Eigen::Matrix<double, n_params, 1> model_gradient(const FitParameters& p, SequenceKind kind,
                                                  double nu_rf, double t2_star, double tau);
/// Central finite-difference counterpart of model_gradient.
Eigen::Matrix<double, n_params, 1> model_gradient_fd(const FitParameters& p, SequenceKind kind,
                                                     double nu_rf, double t2_star, double tau,
                                                     double h = 1e-6);

enum class InitSource { spectral, user };

std::string_view to_string(InitSource s);
InitSource init_source_from_string(std::string_view s);

struct FitOptions {
  std::optional<FitParameters> init;  // user initial guess, tried alongside multistart
  std::optional<double> fixed_phi0;   // known RF phase; removes the shift-sign mirror
  int max_iter = 500;
  int phi0_starts = 8;
  int refine_starts = 12;      // best screened candidates handed to LM
  double chi2_gate = 4.0;      // max reduced chi^2 when sigma is present
  double rel_rms_gate = 0.5;   // max residual_rms / std(population) without sigma
};

struct FitResult {
  FitParameters params;
  FitParameters sigma;
  Eigen::Matrix<double, n_params, n_params> covariance =
      Eigen::Matrix<double, n_params, n_params>::Zero();
  double residual_rms = 0.0;  // unweighted, population units
  double chi2_reduced = 0.0;  // weighted when sigma is present
  int n_iter = 0;
  InitSource init_source = InitSource::spectral;
  bool sign_ambiguous = false;

  SequenceKind model = SequenceKind::ramsey;
  double nu_rf = 0.0;
  int coherence_order = 1;
  double t2_star = std::numeric_limits<double>::infinity();
  std::optional<double> power_mw;

  /// nu_z = alpha nu_rf / q
  double nu_z() const { return params.alpha * nu_rf / coherence_order; }
  double nu_z_sigma() const { return std::abs(sigma.alpha * nu_rf / coherence_order); }
};

/// Weighted least-squares fit of the ramsey or dd model. Throws
/// degenerate_trace when there are fewer points than free parameters and
/// no_convergence when no start converges or the best fit fails the residual
/// gate.
FitResult fit_trace(const TimeTrace& t, SequenceKind model, const SpinSystem& sys, double nu_rf,
                    const FitOptions& opt = {});

struct SpectralGuess {
  double alpha = 0.0;
  double shift = 0.0;  // unsigned, MHz
  double phi0 = 0.0;
};

/// Initial guesses from the magnitude spectrum: alpha from the second to first
/// harmonic ratio (J2/J1), |shift| from sideband splitting, phi0 from the
/// first sample.
SpectralGuess spectral_guess(const TimeTrace& t, SequenceKind model, double nu_rf);

// --- two-power separation --------------------------------------------------

struct PowerPair {
  double p1 = 0.0;      // mW
  double p2 = 0.0;      // mW
  double shift1 = 0.0;  // MHz, signed total at p1
  double shift2 = 0.0;  // MHz, signed total at p2
};

struct PowerLaw {
  double a = 0.0;  // MHz / sqrt(mW): nu_dc(p) = a sqrt(p)
  double b = 0.0;  // MHz / mW:       nu_bs(p) = b p

  double nu_dc(double p) const { return a * std::sqrt(p); }
  double nu_bs(double p) const { return b * p; }
};

/// Solves shift_i = a sqrt(p_i) + b p_i exactly.
PowerLaw separate_dc_bss(const PowerPair& pp);

/// Transverse amplitude sqrt(2 nu_bs nu_transition), MHz.
double invert_bss(double nu_bs, double nu_transition);

/// atan2(|nu_x|, |nu_z|) in degrees.
double estimate_angle(double nu_z, double nu_x);

struct RatioCheck {
  double measured = 0.0;  // nu_z_2 / nu_z_1
  double expected = 0.0;  // sqrt(p2 / p1)
};

RatioCheck amplitude_ratio_check(double nu_z_1, double nu_z_2, double p1, double p2);

struct PowerColumn {
  double power_mw = 0.0;
  double nu_z = 0.0, nu_z_sigma = 0.0;
  double shift = 0.0, shift_sigma = 0.0;
  double nu_dc = 0.0, nu_dc_sigma = 0.0;
  double nu_bs = 0.0, nu_bs_sigma = 0.0;
  double nu_x = 0.0, nu_x_sigma = 0.0;
  double theta_deg = 0.0;
};

struct FieldSolution {
  std::array<PowerColumn, 2> columns;
  PowerLaw law;
  RatioCheck ratio;
  double nu_transition = 0.0;
};

/// Full reduction of two fits taken at different RF powers.
/// Both fits must carry power_mw. A Bloch-Siegert rate that comes out
/// negative but within max(3 sigma, 1e-9 MHz) of zero is clamped to zero;
/// anything more negative throws negative_shift.
FieldSolution solve_fields(const FitResult& fit1, const FitResult& fit2, double nu_transition);

}  // namespace nvrf

#pragma once

// Time-ordered Schrodinger propagation of the spin-1 electron through a pulse
// sequence under
//
//   H(t) = H_static + [w_z sin(w_rf t + phi0) - w_dc] S_z + w_x sin(w_rf t + phi0) S_x
//
// with t measured from the start of the RF window. Basis order is
// m = +1, 0, -1. MW pulses are ideal rotations on the {|0>, |-1>} pair, defined
// in the frame rotating with H_static.

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "nvrf/core.hpp"
#include "nvrf/sequence.hpp"

namespace nvrf {

using Mat3 = Eigen::Matrix3cd;
using Vec3 = Eigen::Vector3cd;

inline constexpr int idx_plus = 0;
inline constexpr int idx_zero = 1;
inline constexpr int idx_minus = 2;

struct StaticHamiltonian {
  double e_plus = 0.0;   // MHz
  double e_zero = 0.0;   // MHz
  double e_minus = 0.0;  // MHz

  /// |-1> sits nu_transition above |0>; |+1> sits `isolation * nu_transition`
  /// above |0>, far enough that its second-order pull on |0> stays small.
  static StaticHamiltonian isolated_transition(double nu_transition, double isolation = 50.0);

  double working_splitting() const noexcept { return e_minus - e_zero; }
  double spread() const noexcept;
};

enum class Frame { lab, rotating };
enum class DcCoupling { always_on, rf_window_only };

std::string_view to_string(Frame f);
Frame frame_from_string(std::string_view s);

struct PropagationConfig {
  double dt = 1e-4;  // us
  Frame frame = Frame::lab;
  double tolerance = 1e-6;
  DcCoupling dc = DcCoupling::always_on;
};

/// Fastest frequency (MHz) present in H(t): static spread plus coupling
/// amplitudes, or the carrier if larger.
double max_frequency(const StaticHamiltonian& h0, const RfFieldParams& f);

/// Largest dt satisfying dt <= 1 / (20 nu_max).
double max_step(const StaticHamiltonian& h0, const RfFieldParams& f);

struct Evolution {
  Vec3 state;  // in the frame rotating with H_static
  double population0 = 0.0;
};

/// Propagator for one RF window in the lab frame. Steps through at most one
/// RF period with an exact exponential per step, then reuses the period
/// propagator: U(n T + r) = U(r) U(T)^n.
class RfWindowPropagator {
 public:
  RfWindowPropagator(const StaticHamiltonian& h0, const RfFieldParams& f, double dt);

  Mat3 operator()(double duration);
  double step() const noexcept { return step_; }

 private:
  Mat3 prefix(long k);
  Mat3 period_power(long n);
  Mat3 step_from(double t_local, double h) const;

  Eigen::Vector3d static_diag_;  // rad/us
  double w_z_, w_x_, w_rf_, w_dc_, phi0_;
  double period_;
  long steps_per_period_;
  double step_;
  std::map<long, Mat3> prefix_;
  std::map<long, Mat3> powers_;
};

class Propagator {
 public:
  /// Validates inputs; throws step_too_coarse if cfg.dt > max_step(h0, f).
  Propagator(const SpinSystem& sys, const StaticHamiltonian& h0, const RfFieldParams& f,
             const PropagationConfig& cfg);

  /// Starts in |0> and returns the final state and |0> population. Throws
  /// non_unitary_drift if the norm departs from 1 by more than 1e-9.
  Evolution evolve(const PulseSequence& seq);

  /// P|0>(tau) for seq_builder(tau) over the grid.
  std::vector<double> sweep(std::span<const double> taus,
                            const std::function<PulseSequence(double)>& seq_builder);

  const PropagationConfig& config() const noexcept { return cfg_; }

 private:
  Mat3 pulse_lab(const PulseEvent& e) const;
  Mat3 pulse_rot(const PulseEvent& e) const;
  Mat3 free_lab(double duration) const;
  Mat3 free_rot(double duration) const;
  Mat3 window_rot(double t_start, double duration) const;

  SpinSystem sys_;
  StaticHamiltonian h0_;
  RfFieldParams field_;
  PropagationConfig cfg_;
  Eigen::Vector3d static_diag_;  // rad/us
  Eigen::Vector3d dc_diag_;      // rad/us
  RfWindowPropagator window_;
};

Evolution evolve(const SpinSystem& sys, const StaticHamiltonian& h0, const RfFieldParams& f,
                 const PulseSequence& seq, const PropagationConfig& cfg);

/// Applies the free-evolution dephasing envelope: 1/2 + (P - 1/2) exp(-tau/T2*).
double dephase(double population, double tau, double t2_star);

struct ShiftMeasurement {
  double rate_mhz = 0.0;  // secular phase drift
  double residual_rms = 0.0;
  std::vector<double> phase;  // unwrapped coherence phase per tau, sign-normalized
};

/// Propagates each tau with the final pi/2 pulse at phase 0 and at pi/2,
/// recovers the coherence phase, and fits phase = c + 2 pi rate tau + first
/// and second RF harmonics by linear least squares.
ShiftMeasurement measure_numeric_shift(const SpinSystem& sys, const StaticHamiltonian& h0,
                                       const RfFieldParams& f, std::span<const double> tau_grid,
                                       const std::function<PulseSequence(double)>& seq_builder,
                                       const PropagationConfig& cfg);

}  // namespace nvrf

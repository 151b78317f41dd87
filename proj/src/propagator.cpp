#include "nvrf/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace nvrf {

namespace {

using cd = std::complex<double>;
constexpr cd imag_unit{0.0, 1.0};
const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
const Eigen::Vector3d m_values{1.0, 0.0, -1.0};

Mat3 diag_exp(const Eigen::Vector3d& rates, double h) {
  Mat3 u = Mat3::Zero();
  for (int j = 0; j < 3; ++j) u(j, j) = std::exp(-imag_unit * (rates(j) * h));
  return u;
}

// exp(-i H h) for Hermitian H.
// One Newton-Schulz sweep towards the nearest unitary. Removes the systematic
// O(eps) defects of eigensolves and long products, which would otherwise add
// up linearly over the ~1e6 steps of a period at GHz splittings.
Mat3 polish(const Mat3& u) { return 0.5 * u * (3.0 * Mat3::Identity() - u.adjoint() * u); }

Mat3 hermitian_exp(const Mat3& h_mat, double h) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(h_mat);
  const auto& v = es.eigenvectors();
  Eigen::Vector3cd phases;
  for (int j = 0; j < 3; ++j) phases(j) = std::exp(-imag_unit * (es.eigenvalues()(j) * h));
  return polish(v * phases.asDiagonal() * v.adjoint());
}

// Ideal rotation by `angle` about cos(phase) x + sin(phase) y on the
// {|0>, |-1>} pair, identity on |+1>.
Mat3 pair_rotation(double angle, double phase) {
  Mat3 r = Mat3::Identity();
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  r(idx_zero, idx_zero) = c;
  r(idx_minus, idx_minus) = c;
  r(idx_zero, idx_minus) = -imag_unit * s * std::exp(-imag_unit * phase);
  r(idx_minus, idx_zero) = -imag_unit * s * std::exp(imag_unit * phase);
  return r;
}

Eigen::Vector3d static_rates(const StaticHamiltonian& h0) {
  return Eigen::Vector3d{angular(h0.e_plus), angular(h0.e_zero), angular(h0.e_minus)};
}

}  // namespace

StaticHamiltonian StaticHamiltonian::isolated_transition(double nu_transition, double isolation) {
  return {isolation * nu_transition, 0.0, nu_transition};
}

double StaticHamiltonian::spread() const noexcept {
  return std::max({e_plus, e_zero, e_minus}) - std::min({e_plus, e_zero, e_minus});
}

std::string_view to_string(Frame f) { return f == Frame::lab ? "lab" : "rotating"; }

Frame frame_from_string(std::string_view s) {
  if (s == "lab") return Frame::lab;
  if (s == "rotating") return Frame::rotating;
  throw Error(ErrorKind::invalid_argument, "unknown frame '" + std::string(s) + "'");
}

double max_frequency(const StaticHamiltonian& h0, const RfFieldParams& f) {
  const double coupling = h0.spread() + std::abs(f.nu_z) + std::abs(f.nu_x) + std::abs(f.nu_dc);
  return std::max(std::abs(f.nu_rf), coupling);
}

double max_step(const StaticHamiltonian& h0, const RfFieldParams& f) {
  return 1.0 / (20.0 * max_frequency(h0, f));
}

double dephase(double population, double tau, double t2_star) {
  if (std::isinf(t2_star)) return population;
  return 0.5 + (population - 0.5) * std::exp(-tau / t2_star);
}

// --- RfWindowPropagator ----------------------------------------------------

RfWindowPropagator::RfWindowPropagator(const StaticHamiltonian& h0, const RfFieldParams& f,
                                       double dt)
    : static_diag_(static_rates(h0)),
      w_z_(angular(f.nu_z)),
      w_x_(angular(f.nu_x)),
      w_rf_(angular(f.nu_rf)),
      w_dc_(angular(f.nu_dc)),
      phi0_(f.phi0),
      period_(1.0 / f.nu_rf) {
  if (!(dt > 0)) throw Error(ErrorKind::invalid_argument, "dt must be > 0");
  steps_per_period_ = std::max(1L, long(std::ceil(period_ / dt - 1e-9)));
  step_ = period_ / double(steps_per_period_);
  prefix_.emplace(0, Mat3::Identity());
}

Mat3 RfWindowPropagator::step_from(double t_local, double h) const {
  const double s = std::sin(w_rf_ * (t_local + 0.5 * h) + phi0_);
  Eigen::Vector3d diag = static_diag_ + (w_z_ * s - w_dc_) * m_values;
  const double coupling = w_x_ * s * inv_sqrt2;
  if (coupling == 0.0) return diag_exp(diag, h);
  Mat3 hm = Mat3::Zero();
  for (int j = 0; j < 3; ++j) hm(j, j) = diag(j);
  hm(idx_plus, idx_zero) = hm(idx_zero, idx_plus) = coupling;
  hm(idx_zero, idx_minus) = hm(idx_minus, idx_zero) = coupling;
  return hermitian_exp(hm, h);
}

Mat3 RfWindowPropagator::prefix(long k) {
  auto it = prefix_.upper_bound(k);
  --it;  // key 0 is always present
  if (it->first == k) return it->second;
  long j = it->first;
  Mat3 u = it->second;
  constexpr long block = 1024;
  while (j < k) {
    const long end = std::min(k, j + block);
    Mat3 b = step_from(double(j) * step_, step_);
    for (++j; j < end; ++j) b = step_from(double(j) * step_, step_) * b;
    u = polish(polish(b) * u);
  }
  prefix_.emplace(k, u);
  return u;
}

Mat3 RfWindowPropagator::period_power(long n) {
  Mat3 result = Mat3::Identity();
  if (n == 0) return result;
  if (powers_.empty()) powers_.emplace(0, prefix(steps_per_period_));
  long bit = 0;
  while (n > 0) {
    if (!powers_.count(bit)) {
      const Mat3& prev = powers_.at(bit - 1);
      powers_.emplace(bit, polish(prev * prev));
    }
    if (n & 1L) result = powers_.at(bit) * result;
    n >>= 1;
    ++bit;
  }
  return result;
}

Mat3 RfWindowPropagator::operator()(double duration) {
  if (!(duration >= 0)) throw Error(ErrorKind::negative_duration, "rf window duration < 0");
  long n = long(std::floor(duration / period_ + 1e-12));
  double r = duration - double(n) * period_;
  if (r < 0) r = 0;
  long k = long(std::floor(r / step_ + 1e-9));
  k = std::min(k, steps_per_period_);
  double rem = r - double(k) * step_;
  if (rem < 1e-12 * step_) rem = 0.0;
  Mat3 u = prefix(k) * period_power(n);
  if (rem > 0) u = step_from(double(k) * step_, rem) * u;
  return u;
}

// --- Propagator ------------------------------------------------------------

Propagator::Propagator(const SpinSystem& sys, const StaticHamiltonian& h0, const RfFieldParams& f,
                       const PropagationConfig& cfg)
    : sys_(sys),
      h0_(h0),
      field_(checked_field(f)),
      cfg_(cfg),
      static_diag_(static_rates(h0)),
      dc_diag_(-angular(f.nu_dc) * m_values),
      window_(h0, field_, cfg.dt) {
  validate_spin_system(sys);
  if (std::abs(sys.coherence_order) != 1)
    throw Error(ErrorKind::invalid_argument,
                "the propagator drives the |0>,|-1> pair; coherence_order must be +-1");
  if (!std::isfinite(h0.e_plus) || !std::isfinite(h0.e_zero) || !std::isfinite(h0.e_minus) ||
      !(h0.working_splitting() > 0))
    throw Error(ErrorKind::invalid_argument, "static Hamiltonian needs a positive working splitting");
  if (std::abs(h0.working_splitting() - sys.nu_transition) > 1e-9 * sys.nu_transition)
    throw Error(ErrorKind::invalid_argument,
                "static Hamiltonian splitting does not match nu_transition");
  if (!(cfg.dt > 0)) throw Error(ErrorKind::invalid_argument, "dt must be > 0");
  const double limit = max_step(h0, field_);
  if (cfg.dt > limit * (1.0 + 1e-12))
    throw Error(ErrorKind::step_too_coarse, "dt = " + std::to_string(cfg.dt) +
                                                " us exceeds 1/(20 nu_max) = " +
                                                std::to_string(limit) + " us");
}

Mat3 Propagator::pulse_rot(const PulseEvent& e) const {
  return pair_rotation(e.mw_angle, e.mw_phase);
}

Mat3 Propagator::pulse_lab(const PulseEvent& e) const {
  Mat3 r = pulse_rot(e);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k)
      if (j != k && r(j, k) != cd(0.0))
        r(j, k) *= std::exp(-imag_unit * ((static_diag_(j) - static_diag_(k)) * e.start));
  return r;
}

Mat3 Propagator::free_rot(double duration) const {
  const Eigen::Vector3d rates =
      cfg_.dc == DcCoupling::always_on ? dc_diag_ : Eigen::Vector3d::Zero().eval();
  return diag_exp(rates, duration);
}

Mat3 Propagator::free_lab(double duration) const {
  Eigen::Vector3d rates = static_diag_;
  if (cfg_.dc == DcCoupling::always_on) rates += dc_diag_;
  return diag_exp(rates, duration);
}

Mat3 Propagator::window_rot(double t_start, double duration) const {
  const long n = std::max(1L, long(std::ceil(duration / cfg_.dt - 1e-9)));
  const double h = duration / double(n);
  const double w_z = angular(field_.nu_z);
  const double w_x = angular(field_.nu_x);
  const double w_rf = angular(field_.nu_rf);
  Mat3 u = Mat3::Identity();
  if (duration == 0.0) return u;
  for (long k = 0; k < n; ++k) {
    const double t_local = (double(k) + 0.5) * h;
    const double t0 = t_start + double(k) * h;
    const double s = std::sin(w_rf * t_local + field_.phi0);
    const Eigen::Vector3d diag = dc_diag_ + w_z * s * m_values;
    const double coupling = w_x * s * inv_sqrt2;
    if (coupling == 0.0) {
      u = diag_exp(diag, h) * u;
      continue;
    }
    // Interaction-picture step with the static part treated exactly:
    // exp(i H0 t1) exp(-i (H0 + V) h) exp(-i H0 t0). A midpoint sample of the
    // rotating couplings alone converges only as (Omega_0 dt)^2.
    Mat3 hm = Mat3::Zero();
    for (int j = 0; j < 3; ++j) hm(j, j) = static_diag_(j) + diag(j);
    hm(idx_plus, idx_zero) = hm(idx_zero, idx_plus) = coupling;
    hm(idx_zero, idx_minus) = hm(idx_minus, idx_zero) = coupling;
    const Eigen::Vector3d neg = -static_diag_;
    u = diag_exp(neg, t0 + h) * hermitian_exp(hm, h) * diag_exp(static_diag_, t0) * u;
  }
  return u;
}

Evolution Propagator::evolve(const PulseSequence& seq) {
  const auto report = validate_sequence(seq);
  if (!report.ok()) {
    const auto& v = *std::find_if(report.items.begin(), report.items.end(),
                                  [](const Violation& x) { return x.severity == Severity::error; });
    throw Error(ErrorKind::invalid_argument,
                "invalid pulse sequence: " + std::string(to_string(v.kind)) + ": " + v.message);
  }
  const bool lab = cfg_.frame == Frame::lab;
  Vec3 psi = Vec3::Zero();
  psi(idx_zero) = 1.0;
  for (const auto& e : seq.events) {
    switch (e.kind) {
      case EventKind::mw_pulse:
        psi = (lab ? pulse_lab(e) : pulse_rot(e)) * psi;
        break;
      case EventKind::free_evolution:
        psi = (lab ? free_lab(e.duration) : free_rot(e.duration)) * psi;
        break;
      case EventKind::rf_window:
        psi = (lab ? window_(e.duration) : window_rot(e.start, e.duration)) * psi;
        break;
    }
  }
  if (lab) {
    for (int j = 0; j < 3; ++j)
      psi(j) *= std::exp(imag_unit * (static_diag_(j) * seq.total_duration));
  }
  const double drift = std::abs(psi.squaredNorm() - 1.0);
  if (drift > 1e-9)
    throw Error(ErrorKind::non_unitary_drift, "state norm drifted by " + std::to_string(drift * 1e9) + "e-9 (limit 1e-9)");
  return {psi, std::norm(psi(idx_zero))};
}

std::vector<double> Propagator::sweep(std::span<const double> taus,
                                      const std::function<PulseSequence(double)>& seq_builder) {
  std::vector<double> out;
  out.reserve(taus.size());
  for (double tau : taus) out.push_back(evolve(seq_builder(tau)).population0);
  return out;
}

Evolution evolve(const SpinSystem& sys, const StaticHamiltonian& h0, const RfFieldParams& f,
                 const PulseSequence& seq, const PropagationConfig& cfg) {
  Propagator p(sys, h0, f, cfg);
  return p.evolve(seq);
}

// --- numeric secular shift -------------------------------------------------

ShiftMeasurement measure_numeric_shift(const SpinSystem& sys, const StaticHamiltonian& h0,
                                       const RfFieldParams& f, std::span<const double> tau_grid,
                                       const std::function<PulseSequence(double)>& seq_builder,
                                       const PropagationConfig& cfg) {
  constexpr int n_cols = 6;
  if (tau_grid.size() < std::size_t(n_cols) + 2)
    throw Error(ErrorKind::invalid_argument, "tau grid needs at least 8 points");
  Propagator prop(sys, h0, f, cfg);
  const double w_rf = angular(f.nu_rf);

  ShiftMeasurement out;
  out.phase.reserve(tau_grid.size());
  double parity = 1.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    const PulseSequence seq = seq_builder(tau_grid[i]);
    PulseSequence quad = seq;
    auto last = std::find_if(quad.events.rbegin(), quad.events.rend(),
                             [](const PulseEvent& e) { return e.kind == EventKind::mw_pulse; });
    if (last == quad.events.rend())
      throw Error(ErrorKind::invalid_argument, "sequence has no readout pulse");
    last->mw_phase += std::numbers::pi / 2.0;

    // Refocusing pulses after the window conjugate the coherence, so the
    // phase accrued inside the window appears with flipped sign.
    if (i == 0) {
      const int w = rf_window_index(seq);
      int flips = 0;
      for (std::size_t k = std::size_t(w) + 1; k < seq.events.size(); ++k)
        if (seq.events[k].kind == EventKind::mw_pulse &&
            std::abs(seq.events[k].mw_angle - std::numbers::pi) < 1e-9)
          ++flips;
      parity = (flips % 2 == 0) ? 1.0 : -1.0;
    }

    const double p_in = prop.evolve(seq).population0;
    const double p_quad = prop.evolve(quad).population0;
    // Before the readout pulse: 1 - 2 P(0) = 2|rho| sin(theta), 1 - 2 P(pi/2) = 2|rho| cos(theta)
    const double theta = parity * std::atan2(1.0 - 2.0 * p_in, 1.0 - 2.0 * p_quad);
    double unwrapped = theta;
    if (i > 0) unwrapped = prev + wrap_phase_symmetric(theta - wrap_phase_symmetric(prev));
    out.phase.push_back(unwrapped);
    prev = unwrapped;
  }

  Eigen::MatrixXd a(tau_grid.size(), n_cols);
  Eigen::VectorXd y(tau_grid.size());
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    const double t = tau_grid[i];
    a.row(Eigen::Index(i)) << 1.0, t, std::cos(w_rf * t), std::sin(w_rf * t),
        std::cos(2 * w_rf * t), std::sin(2 * w_rf * t);
    y(Eigen::Index(i)) = out.phase[i];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
  out.rate_mhz = ordinary(coef(1));
  out.residual_rms = std::sqrt((a * coef - y).squaredNorm() / double(tau_grid.size()));
  return out;
}

}  // namespace nvrf

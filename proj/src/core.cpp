#include "nvrf/core.hpp"

#include <algorithm>
#include <sstream>

namespace nvrf {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::non_positive_carrier: return "NonPositiveCarrier";
    case ErrorKind::negative_transverse: return "NegativeTransverse";
    case ErrorKind::zero_carrier: return "ZeroCarrier";
    case ErrorKind::zero_transition: return "ZeroTransition";
    case ErrorKind::negative_duration: return "NegativeDuration";
    case ErrorKind::invalid_trace: return "InvalidTrace";
    case ErrorKind::non_uniform_sampling: return "NonUniformSampling";
    case ErrorKind::step_too_coarse: return "StepTooCoarse";
    case ErrorKind::non_unitary_drift: return "NonUnitaryDrift";
    case ErrorKind::ambiguous_assignment: return "AmbiguousAssignment";
    case ErrorKind::degenerate_trace: return "DegenerateTrace";
    case ErrorKind::no_convergence: return "NoConvergence";
    case ErrorKind::singular_system: return "SingularSystem";
    case ErrorKind::negative_shift: return "NegativeShift";
    case ErrorKind::zero_field: return "ZeroField";
    case ErrorKind::parse: return "ParseError";
    case ErrorKind::io: return "IoError";
  }
  return "Unknown";
}

double wrap_phase(double phi) {
  double r = std::fmod(phi, two_pi);
  if (r < 0) r += two_pi;
  // fmod of a value just below a multiple of 2pi can round up to 2pi
  if (r >= two_pi) r = 0.0;
  return r;
}

double wrap_phase_symmetric(double phi) {
  double r = wrap_phase(phi);
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

std::string_view to_string(FieldIssue issue) {
  switch (issue) {
    case FieldIssue::non_positive_carrier: return "NonPositiveCarrier";
    case FieldIssue::negative_transverse: return "NegativeTransverse";
    case FieldIssue::non_finite: return "NonFinite";
  }
  return "Unknown";
}

FieldCheck validate_field(const RfFieldParams& f) {
  FieldCheck out;
  const bool finite = std::isfinite(f.nu_z) && std::isfinite(f.nu_x) && std::isfinite(f.nu_rf) &&
                      std::isfinite(f.phi0) && std::isfinite(f.nu_dc) &&
                      (!f.power_mw || std::isfinite(*f.power_mw));
  if (!finite) out.issues.push_back(FieldIssue::non_finite);
  if (!(f.nu_rf > 0)) out.issues.push_back(FieldIssue::non_positive_carrier);
  if (f.nu_x < 0) out.issues.push_back(FieldIssue::negative_transverse);
  if (out.issues.empty()) {
    RfFieldParams g = f;
    g.phi0 = wrap_phase(f.phi0);
    out.field = g;
  }
  return out;
}

RfFieldParams checked_field(const RfFieldParams& f) {
  auto check = validate_field(f);
  if (check.ok()) return *check.field;
  switch (check.issues.front()) {
    case FieldIssue::non_positive_carrier:
      throw Error(ErrorKind::non_positive_carrier, "nu_rf must be > 0");
    case FieldIssue::negative_transverse:
      throw Error(ErrorKind::negative_transverse, "nu_x must be >= 0");
    case FieldIssue::non_finite:
      break;
  }
  throw Error(ErrorKind::invalid_argument, "field parameters must be finite");
}

void validate_spin_system(const SpinSystem& s) {
  if (!(s.nu_transition > 0) || !std::isfinite(s.nu_transition))
    throw Error(ErrorKind::zero_transition, "nu_transition must be positive and finite");
  const int q = s.coherence_order;
  if (q != -2 && q != -1 && q != 1 && q != 2)
    throw Error(ErrorKind::invalid_argument,
                "coherence_order must be one of -2, -1, 1, 2 (got " + std::to_string(q) + ")");
  if (!(s.t2_star > 0))
    throw Error(ErrorKind::invalid_argument, "t2_star must be > 0 or infinite");
}

std::string_view to_string(SequenceKind kind) {
  return kind == SequenceKind::ramsey ? "ramsey" : "dd";
}

SequenceKind sequence_kind_from_string(std::string_view s) {
  if (s == "ramsey") return SequenceKind::ramsey;
  if (s == "dd") return SequenceKind::dd;
  throw Error(ErrorKind::invalid_argument, "unknown sequence kind '" + std::string(s) + "'");
}

std::string_view to_string(WindowKind w) {
  return w == WindowKind::rectangular ? "rectangular" : "hann";
}

WindowKind window_from_string(std::string_view s) {
  if (s == "rectangular" || s == "rect") return WindowKind::rectangular;
  if (s == "hann") return WindowKind::hann;
  throw Error(ErrorKind::invalid_argument, "unknown window '" + std::string(s) + "'");
}

std::vector<double> uniform_grid(double start, double step, std::size_t count) {
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) g[i] = start + step * double(i);
  return g;
}

TimeTrace make_trace(std::vector<double> tau, std::vector<double> population,
                     std::vector<double> sigma, TraceMeta meta) {
  if (tau.size() != population.size())
    throw Error(ErrorKind::invalid_trace, "tau and population lengths differ");
  if (tau.size() < 2) throw Error(ErrorKind::invalid_trace, "a trace needs at least 2 points");
  if (!sigma.empty() && sigma.size() != tau.size())
    throw Error(ErrorKind::invalid_trace, "sigma length differs from tau");

  const double lo = meta.relaxed_bounds ? relaxed_lower_bound : 0.0;
  const double hi = meta.relaxed_bounds ? relaxed_upper_bound : 1.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (!std::isfinite(tau[i]) || !std::isfinite(population[i]))
      throw Error(ErrorKind::invalid_trace, "non-finite sample at row " + std::to_string(i));
    if (population[i] < lo || population[i] > hi) {
      std::ostringstream os;
      os << "population " << population[i] << " at row " << i << " outside [" << lo << ", " << hi
         << "]";
      throw Error(ErrorKind::invalid_trace, os.str());
    }
    if (!sigma.empty() && !(sigma[i] >= 0))
      throw Error(ErrorKind::invalid_trace, "negative sigma at row " + std::to_string(i));
  }

  for (std::size_t i = 1; i < tau.size(); ++i)
    if (!(tau[i] > tau[i - 1]))
      throw Error(ErrorKind::invalid_trace, "tau must be strictly increasing at row " +
                                                std::to_string(i));
  const double mean_step = (tau.back() - tau.front()) / double(tau.size() - 1);
  for (std::size_t i = 1; i < tau.size(); ++i) {
    const double step = tau[i] - tau[i - 1];
    if (std::abs(step - mean_step) > uniform_spacing_rtol * mean_step)
      throw Error(ErrorKind::non_uniform_sampling,
                  "tau spacing not uniform at row " + std::to_string(i));
  }
  return TimeTrace{std::move(tau), std::move(population), std::move(sigma), std::move(meta)};
}

}  // namespace nvrf

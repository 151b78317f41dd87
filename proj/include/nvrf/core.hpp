#pragma once

// Shared domain types. Public quantities are ordinary frequencies in MHz and
// times in microseconds; phase arithmetic is done on angular rates (rad/us).

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nvrf/error.hpp"

namespace nvrf {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Angular rate in rad/us for an ordinary frequency in MHz.
constexpr double angular(double nu_mhz) noexcept { return two_pi * nu_mhz; }
/// Ordinary frequency in MHz for an angular rate in rad/us.
constexpr double ordinary(double omega) noexcept { return omega / two_pi; }

/// Wraps a phase to [0, 2pi).
double wrap_phase(double phi);
/// Wraps a phase to (-pi, pi].
double wrap_phase_symmetric(double phi);

struct RfFieldParams {
  double nu_z = 0.0;   // longitudinal amplitude, MHz
  double nu_x = 0.0;   // transverse amplitude, MHz
  double nu_rf = 2.0;  // carrier, MHz
  double phi0 = 0.0;   // initial RF phase, rad
  double nu_dc = 0.0;  // signed DC projection, MHz
  std::optional<double> power_mw;

  friend bool operator==(const RfFieldParams&, const RfFieldParams&) = default;
};

enum class FieldIssue { non_positive_carrier, negative_transverse, non_finite };

std::string_view to_string(FieldIssue issue);

struct FieldCheck {
  std::optional<RfFieldParams> field;  // set iff issues is empty
  std::vector<FieldIssue> issues;

  bool ok() const noexcept { return issues.empty(); }
};

/// Checks every field invariant and returns the field with phi0 wrapped into
/// [0, 2pi), or the full list of violations.
FieldCheck validate_field(const RfFieldParams& f);

/// Same as validate_field but throws the first issue as an Error.
RfFieldParams checked_field(const RfFieldParams& f);

struct SpinSystem {
  double nu_transition = 2475.151;  // Omega_0 / 2pi, MHz
  int coherence_order = 1;          // q = m - m'
  double t2_star = std::numeric_limits<double>::infinity();  // us

  bool infinite_t2() const noexcept { return std::isinf(t2_star); }
  friend bool operator==(const SpinSystem&, const SpinSystem&) = default;
};

/// Throws Error(invalid_argument / zero_transition) if `s` violates an invariant.
void validate_spin_system(const SpinSystem& s);

enum class SequenceKind { ramsey, dd };

std::string_view to_string(SequenceKind kind);
SequenceKind sequence_kind_from_string(std::string_view s);

struct TraceMeta {
  std::optional<double> power_mw;
  std::optional<SequenceKind> sequence;
  std::optional<long long> shots;
  std::optional<unsigned long long> seed;
  // Noise-sampled traces carry population estimates that may leave [0, 1].
  bool relaxed_bounds = false;
  std::map<std::string, std::string> extra;

  friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

/// Sampled population trace on a uniform tau grid. Construct through
/// make_trace, which enforces the invariants.
struct TimeTrace {
  std::vector<double> tau;         // us, strictly increasing, uniform
  std::vector<double> population;  // P|0>
  std::vector<double> sigma;       // empty, or one std-dev per point
  TraceMeta meta;

  std::size_t size() const noexcept { return tau.size(); }
  bool has_sigma() const noexcept { return !sigma.empty(); }
  double spacing() const { return (tau.back() - tau.front()) / double(tau.size() - 1); }
};

inline constexpr double uniform_spacing_rtol = 1e-6;
inline constexpr double relaxed_lower_bound = -0.2;
inline constexpr double relaxed_upper_bound = 1.2;

/// Validates and assembles a trace. Throws invalid_trace for length/range
/// problems and non_uniform_sampling for a non-uniform grid.
TimeTrace make_trace(std::vector<double> tau, std::vector<double> population,
                     std::vector<double> sigma = {}, TraceMeta meta = {});

/// Uniform grid start, start+step, ... with `count` points.
std::vector<double> uniform_grid(double start, double step, std::size_t count);

enum class WindowKind { rectangular, hann };

std::string_view to_string(WindowKind w);
WindowKind window_from_string(std::string_view s);

struct Spectrum {
  std::vector<double> freq;       // MHz, 0 .. Nyquist
  std::vector<double> magnitude;  // non-negative
  WindowKind window = WindowKind::rectangular;
  int pad_factor = 1;

  double resolution() const { return freq.size() > 1 ? freq[1] - freq[0] : 0.0; }
};

}  // namespace nvrf

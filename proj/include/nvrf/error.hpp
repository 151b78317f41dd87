#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nvrf {

enum class ErrorKind {
  invalid_argument,
  non_positive_carrier,
  negative_transverse,
  zero_carrier,
  zero_transition,
  negative_duration,
  invalid_trace,
  non_uniform_sampling,
  step_too_coarse,
  non_unitary_drift,
  ambiguous_assignment,
  degenerate_trace,
  no_convergence,
  singular_system,
  negative_shift,
  zero_field,
  parse,
  io,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; `kind` carries the failure class so
// callers (and the CLI exit-code map) never parse messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nvrf

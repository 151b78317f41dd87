#pragma once

#include <string>
#include <vector>

#include "nvrf/core.hpp"

namespace nvrf {

enum class EventKind { mw_pulse, rf_window, free_evolution };

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct PulseEvent {
  EventKind kind = EventKind::free_evolution;
  double start = 0.0;     // us
  double duration = 0.0;  // us; always 0 for mw_pulse
  double mw_angle = 0.0;  // rad, mw_pulse only
  double mw_phase = 0.0;  // rad, mw_pulse only

  double end() const noexcept { return start + duration; }
  friend bool operator==(const PulseEvent&, const PulseEvent&) = default;
};

struct PulseSequence {
  SequenceKind kind_tag = SequenceKind::ramsey;
  std::vector<PulseEvent> events;
  double total_duration = 0.0;

  friend bool operator==(const PulseSequence&, const PulseSequence&) = default;
};

inline constexpr double default_dd_pad = 0.5;  // us

/// pi/2 -- rf_window(tau_p) -- pi/2
PulseSequence build_ramsey(double tau_p);

/// pi/2 -- pad -- pi(0) -- rf_window(tau_p) -- pi(pi/2) -- pad -- pi/2
PulseSequence build_dd(double tau_p, double tau_pad = default_dd_pad);

PulseSequence build_sequence(SequenceKind kind, double tau_p, double tau_pad = default_dd_pad);

enum class Severity { error, warning };

enum class ViolationKind {
  negative_duration,
  pulse_has_duration,
  unsorted,
  overlap,
  structure,
  total_duration_mismatch,
  phase_convention,
};

std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  Severity severity;
  int event_index;  // -1 when not tied to a single event
  std::string message;
};

struct SequenceReport {
  std::vector<Violation> items;

  /// True when nothing of error severity was found (warnings are allowed).
  bool ok() const;
  bool has(ViolationKind k) const;
};

SequenceReport validate_sequence(const PulseSequence& s);

/// Index of the first rf_window event, or -1.
int rf_window_index(const PulseSequence& s);

}  // namespace nvrf

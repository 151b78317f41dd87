#include "nvrf/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nvrf {

namespace {

constexpr double half_pi = std::numbers::pi / 2.0;
constexpr double pi = std::numbers::pi;

PulseEvent pulse(double t, double angle, double phase) {
  return {EventKind::mw_pulse, t, 0.0, angle, phase};
}

PulseEvent span(EventKind k, double start, double duration) {
  return {k, start, duration, 0.0, 0.0};
}

void require_non_negative(double v, const char* name) {
  if (!(v >= 0) || !std::isfinite(v))
    throw Error(ErrorKind::negative_duration, std::string(name) + " must be >= 0");
}

bool near(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

}  // namespace

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::mw_pulse: return "mw_pulse";
    case EventKind::rf_window: return "rf_window";
    case EventKind::free_evolution: return "free_evolution";
  }
  return "unknown";
}

EventKind event_kind_from_string(std::string_view s) {
  if (s == "mw_pulse") return EventKind::mw_pulse;
  if (s == "rf_window") return EventKind::rf_window;
  if (s == "free_evolution") return EventKind::free_evolution;
  throw Error(ErrorKind::parse, "unknown event kind '" + std::string(s) + "'");
}

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::negative_duration: return "NegativeDuration";
    case ViolationKind::pulse_has_duration: return "PulseHasDuration";
    case ViolationKind::unsorted: return "UnsortedEvents";
    case ViolationKind::overlap: return "OverlapViolation";
    case ViolationKind::structure: return "StructureViolation";
    case ViolationKind::total_duration_mismatch: return "TotalDurationMismatch";
    case ViolationKind::phase_convention: return "PhaseConventionWarning";
  }
  return "Unknown";
}

PulseSequence build_ramsey(double tau_p) {
  require_non_negative(tau_p, "tau_p");
  PulseSequence s;
  s.kind_tag = SequenceKind::ramsey;
  s.events = {pulse(0.0, half_pi, 0.0), span(EventKind::rf_window, 0.0, tau_p),
              pulse(tau_p, half_pi, 0.0)};
  s.total_duration = tau_p;
  return s;
}

PulseSequence build_dd(double tau_p, double tau_pad) {
  require_non_negative(tau_p, "tau_p");
  require_non_negative(tau_pad, "tau_pad");
  const double t1 = tau_pad;
  const double t2 = tau_pad + tau_p;
  const double total = 2.0 * tau_pad + tau_p;
  PulseSequence s;
  s.kind_tag = SequenceKind::dd;
  s.events = {pulse(0.0, half_pi, 0.0),
              span(EventKind::free_evolution, 0.0, tau_pad),
              pulse(t1, pi, 0.0),
              span(EventKind::rf_window, t1, tau_p),
              pulse(t2, pi, half_pi),
              span(EventKind::free_evolution, t2, tau_pad),
              pulse(total, half_pi, 0.0)};
  s.total_duration = total;
  return s;
}

PulseSequence build_sequence(SequenceKind kind, double tau_p, double tau_pad) {
  return kind == SequenceKind::ramsey ? build_ramsey(tau_p) : build_dd(tau_p, tau_pad);
}

bool SequenceReport::ok() const {
  return std::none_of(items.begin(), items.end(),
                      [](const Violation& v) { return v.severity == Severity::error; });
}

bool SequenceReport::has(ViolationKind k) const {
  return std::any_of(items.begin(), items.end(), [k](const Violation& v) { return v.kind == k; });
}

int rf_window_index(const PulseSequence& s) {
  for (std::size_t i = 0; i < s.events.size(); ++i)
    if (s.events[i].kind == EventKind::rf_window) return int(i);
  return -1;
}

SequenceReport validate_sequence(const PulseSequence& s) {
  SequenceReport r;
  auto report = [&](ViolationKind k, int idx, std::string msg, Severity sev = Severity::error) {
    r.items.push_back({k, sev, idx, std::move(msg)});
  };
  const auto& ev = s.events;
  const double eps = 1e-12 * std::max(1.0, s.total_duration);

  double max_end = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const int idx = int(i);
    if (ev[i].duration < 0) report(ViolationKind::negative_duration, idx, "negative duration");
    if (ev[i].kind == EventKind::mw_pulse && ev[i].duration != 0.0)
      report(ViolationKind::pulse_has_duration, idx, "mw pulses are instantaneous");
    if (i > 0 && ev[i].start < ev[i - 1].start - eps)
      report(ViolationKind::unsorted, idx, "event starts before its predecessor");
    max_end = std::max(max_end, ev[i].end());
  }

  // Open-interval overlap: finite spans may touch, and a pulse may sit on a
  // span boundary but not inside it.
  for (std::size_t i = 0; i < ev.size(); ++i) {
    for (std::size_t j = i + 1; j < ev.size(); ++j) {
      const auto& a = ev[i];
      const auto& b = ev[j];
      const bool fa = a.duration > 0;
      const bool fb = b.duration > 0;
      bool clash = false;
      if (fa && fb) {
        clash = a.start < b.end() - eps && b.start < a.end() - eps;
      } else if (fa && !fb && b.kind == EventKind::mw_pulse) {
        clash = b.start > a.start + eps && b.start < a.end() - eps;
      } else if (fb && !fa && a.kind == EventKind::mw_pulse) {
        clash = a.start > b.start + eps && a.start < b.end() - eps;
      }
      if (clash)
        report(ViolationKind::overlap, int(j),
               "event " + std::to_string(j) + " overlaps event " + std::to_string(i));
    }
  }

  if (!near(max_end, s.total_duration, 1e-9 * std::max(1.0, max_end)))
    report(ViolationKind::total_duration_mismatch, -1, "total_duration differs from last event end");

  std::vector<int> pulses;
  std::vector<int> windows;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (ev[i].kind == EventKind::mw_pulse) pulses.push_back(int(i));
    if (ev[i].kind == EventKind::rf_window) windows.push_back(int(i));
  }
  if (windows.size() != 1) {
    report(ViolationKind::structure, -1, "expected exactly one rf_window");
    return r;
  }
  const auto& w = ev[std::size_t(windows[0])];
  auto angle_is = [&](int idx, double angle) { return near(ev[std::size_t(idx)].mw_angle, angle); };

  if (s.kind_tag == SequenceKind::ramsey) {
    if (pulses.size() != 2 || !angle_is(pulses[0], half_pi) || !angle_is(pulses[1], half_pi)) {
      report(ViolationKind::structure, -1, "ramsey needs exactly two pi/2 pulses");
      return r;
    }
    if (ev[std::size_t(pulses[0])].start > w.start + eps ||
        ev[std::size_t(pulses[1])].start < w.end() - eps)
      report(ViolationKind::structure, windows[0], "rf_window must lie between the pi/2 pulses");
  } else {
    const bool shape = pulses.size() == 4 && angle_is(pulses[0], half_pi) &&
                       angle_is(pulses[1], pi) && angle_is(pulses[2], pi) &&
                       angle_is(pulses[3], half_pi);
    if (!shape) {
      report(ViolationKind::structure, -1, "dd needs pi/2, pi, pi, pi/2 pulses");
      return r;
    }
    const auto& pi1 = ev[std::size_t(pulses[1])];
    const auto& pi2 = ev[std::size_t(pulses[2])];
    if (pi1.start > w.start + eps || pi2.start < w.end() - eps)
      report(ViolationKind::structure, windows[0],
             "rf_window must lie between the two refocusing pulses");
    const double rel = wrap_phase(pi2.mw_phase - pi1.mw_phase);
    if (!near(rel, half_pi, 1e-9) && !near(rel, 3.0 * half_pi, 1e-9))
      report(ViolationKind::phase_convention, pulses[2],
             "refocusing pulses are not in quadrature; cumulative pulse errors are not compensated",
             Severity::warning);
  }
  return r;
}

}  // namespace nvrf

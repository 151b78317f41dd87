#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nvrf {

struct AcceptanceOptions {
  std::uint64_t seed = 20240611;
  int realizations = 200;  // noise traces for the calibration criterion
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs every acceptance criterion in order and prints one PASS/FAIL line per
/// criterion to `out` as soon as it finishes.
std::vector<CriterionResult> run_acceptance(std::ostream& out, const AcceptanceOptions& opt = {});

}  // namespace nvrf

#pragma once

#include <cstdint>

#include "nvrf/core.hpp"

namespace nvrf {

/// Two-rate photon counting readout: |0> is bright (rate0), |-1> dim (rate1).
struct ReadoutModel {
  long long shots = 100000;
  double rate0 = 0.03;  // mean detected photons per shot in |0>
  double rate1 = 0.02;  // mean detected photons per shot in |-1>
};

void validate_readout(const ReadoutModel& m);

/// Analytic standard deviation of the population estimate at true population p.
double population_sigma(const ReadoutModel& m, double p);

/// Seed for sample `index` derived from the trace seed (splitmix64 mix).
std::uint64_t point_seed(std::uint64_t seed, std::uint64_t index);

/// Poisson-samples every point, maps counts back through the linear contrast
/// model and stores sqrt(counts)-propagated sigma. Estimates are not clipped;
/// the returned trace is marked relaxed_bounds. Identical seeds give
/// bit-identical traces.
TimeTrace sample_trace(const TimeTrace& ideal, const ReadoutModel& m, std::uint64_t seed);

}  // namespace nvrf

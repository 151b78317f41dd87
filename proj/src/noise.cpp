#include "nvrf/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nvrf {

void validate_readout(const ReadoutModel& m) {
  if (m.shots < 1) throw Error(ErrorKind::invalid_argument, "shots must be >= 1");
  if (!(m.rate1 >= 0) || !(m.rate0 > m.rate1))
    throw Error(ErrorKind::invalid_argument, "readout needs rate0 > rate1 >= 0");
}

double population_sigma(const ReadoutModel& m, double p) {
  const double shots = double(m.shots);
  const double mean_counts = shots * (p * m.rate0 + (1.0 - p) * m.rate1);
  return std::sqrt(mean_counts) / (shots * (m.rate0 - m.rate1));
}

std::uint64_t point_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TimeTrace sample_trace(const TimeTrace& ideal, const ReadoutModel& m, std::uint64_t seed) {
  validate_readout(m);
  const double shots = double(m.shots);
  const double contrast = m.rate0 - m.rate1;
  std::vector<double> pop(ideal.size());
  std::vector<double> sig(ideal.size());
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    const double p = std::clamp(ideal.population[i], 0.0, 1.0);
    const double mean = shots * (p * m.rate0 + (1.0 - p) * m.rate1);
    double counts = 0.0;
    if (mean > 0) {
      std::mt19937_64 rng(point_seed(seed, i));
      std::poisson_distribution<long long> draw(mean);
      counts = double(draw(rng));
    }
    pop[i] = (counts / shots - m.rate1) / contrast;
    sig[i] = std::sqrt(counts) / (shots * contrast);
  }
  TraceMeta meta = ideal.meta;
  meta.shots = m.shots;
  meta.seed = seed;
  meta.relaxed_bounds = true;
  // Extreme draws far outside the relaxed band are rejected by make_trace.
  return make_trace(ideal.tau, std::move(pop), std::move(sig), std::move(meta));
}

}  // namespace nvrf

#include "nvrf/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numeric>

namespace nvrf {

namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

struct PlanGuard {
  fftw_plan plan;
  ~PlanGuard() { fftw_destroy_plan(plan); }
};

void check_uniform(const TimeTrace& t) {
  const double step = t.spacing();
  for (std::size_t i = 1; i < t.size(); ++i)
    if (std::abs(t.tau[i] - t.tau[i - 1] - step) > uniform_spacing_rtol * step)
      throw Error(ErrorKind::non_uniform_sampling,
                  "tau spacing not uniform at row " + std::to_string(i));
}

}  // namespace

WindowKind default_window(const TimeTrace& t, double nu_rf) {
  const double cycles = double(t.size()) * t.spacing() * nu_rf;
  if (!(cycles >= 1.0) || std::abs(cycles - std::round(cycles)) > 1e-6 * cycles)
    return WindowKind::hann;
  // Whole periods give a leakage-free comb only if the samples repeat too; a
  // secular shift or T2* decay breaks that and the sinc sidelobes would show
  // up as peaks.
  const double per_period = 1.0 / (nu_rf * t.spacing());
  const long k = std::lround(per_period);
  if (k < 1 || std::abs(per_period - double(k)) > 1e-6 * per_period) return WindowKind::hann;
  const auto [lo, hi] = std::minmax_element(t.population.begin(), t.population.end());
  const double tol = 1e-9 * std::max(1.0, *hi - *lo);
  for (std::size_t i = 0; i + std::size_t(k) < t.size(); ++i)
    if (std::abs(t.population[i + std::size_t(k)] - t.population[i]) > tol) return WindowKind::hann;
  return WindowKind::rectangular;
}

Spectrum spectrum(const TimeTrace& t, const SpectrumOptions& opt) {
  if (opt.pad_factor < 1) throw Error(ErrorKind::invalid_argument, "pad_factor must be >= 1");
  if (t.size() < 2) throw Error(ErrorKind::invalid_trace, "trace too short for a spectrum");
  check_uniform(t);

  const std::size_t n = t.size();
  const std::size_t m = n * std::size_t(opt.pad_factor);
  const std::size_t bins = m / 2 + 1;

  const double mean =
      opt.remove_mean ? std::accumulate(t.population.begin(), t.population.end(), 0.0) / double(n)
                      : 0.0;

  std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * m)));
  std::unique_ptr<fftw_complex, FftwFree> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  PlanGuard guard{fftw_plan_dft_r2c_1d(int(m), in.get(), out.get(), FFTW_ESTIMATE)};

  double* x = in.get();
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0;
    if (opt.window == WindowKind::hann)
      w = 0.5 * (1.0 - std::cos(two_pi * double(i) / double(n - 1)));
    x[i] = (t.population[i] - mean) * w;
  }
  std::fill(x + n, x + m, 0.0);
  fftw_execute(guard.plan);

  Spectrum s;
  s.window = opt.window;
  s.pad_factor = opt.pad_factor;
  s.freq.resize(bins);
  s.magnitude.resize(bins);
  const double df = 1.0 / (double(m) * t.spacing());
  const double norm = 1.0 / std::sqrt(double(n));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool unpaired = k == 0 || (m % 2 == 0 && k == m / 2);
    const double re = out.get()[k][0];
    const double im = out.get()[k][1];
    s.freq[k] = double(k) * df;
    s.magnitude[k] = std::hypot(re, im) * norm * (unpaired ? 1.0 : std::sqrt(2.0));
  }
  return s;
}

PeakList find_peaks(const Spectrum& s, double threshold_fraction) {
  if (!(threshold_fraction > 0 && threshold_fraction < 1))
    throw Error(ErrorKind::invalid_argument, "threshold must lie in (0, 1)");
  PeakList out;
  out.resolution = s.resolution();
  const auto& mag = s.magnitude;
  const std::size_t k_count = mag.size();
  if (k_count < 3) return out;
  const double top = *std::max_element(mag.begin(), mag.end());
  out.threshold = threshold_fraction * top;
  if (top <= 0) return out;

  // The one-sided spectrum of a real signal mirrors about 0 and Nyquist.
  auto at = [&](long k) {
    if (k < 0) k = -k;
    if (k >= long(k_count)) k = 2 * long(k_count) - 2 - k;
    return mag[std::size_t(k)];
  };
  // Lowest point reached walking downhill from k in direction dir.
  auto valley = [&](long k, long dir) {
    double v = at(k);
    for (long j = k + dir; j >= -long(k_count) + 1 && j <= 2 * long(k_count) - 2; j += dir) {
      const double next = at(j);
      if (next > v) break;
      v = next;
      if (j == 0 || j == long(k_count) - 1) break;
    }
    return v;
  };

  // A peak must clear the threshold both in height and in contrast against
  // its neighbouring valleys, so a noise-only spectrum yields no peaks.
  for (long k = 0; k < long(k_count); ++k) {
    const double c = mag[std::size_t(k)];
    const double l = at(k - 1);
    const double r = at(k + 1);
    if (!(c > l && c >= r) || c < out.threshold) continue;
    const double contrast = c - std::max(valley(k, -1), valley(k, +1));
    if (contrast < out.threshold) continue;
    const double denom = l - 2.0 * c + r;
    const double offset = denom != 0.0 ? 0.5 * (l - r) / denom : 0.0;
    Peak p;
    p.interp_offset = offset;
    p.freq = std::clamp((double(k) + offset) * out.resolution, 0.0, s.freq.back());
    p.magnitude = c - 0.25 * (l - r) * offset;
    out.peaks.push_back(p);
  }
  return out;
}

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::lower: return "-";
    case Branch::center: return "0";
    case Branch::upper: return "+";
  }
  return "?";
}

HarmonicAssignment assign_harmonics(const PeakList& p, double nu_rf, bool skip_ambiguous,
                                    double center_tol) {
  if (!(nu_rf > 0)) throw Error(ErrorKind::non_positive_carrier, "nu_rf must be > 0");
  const double tol = center_tol >= 0 ? center_tol : p.resolution;
  HarmonicAssignment out;
  double weighted = 0.0;
  double weight = 0.0;
  for (const auto& peak : p.peaks) {
    const long n = std::lround(peak.freq / nu_rf);
    const double d = peak.freq - double(n) * nu_rf;
    if (std::abs(d) > 0.4 * nu_rf) {
      if (skip_ambiguous) {
        ++out.skipped;
        continue;
      }
      throw Error(ErrorKind::ambiguous_assignment,
                  "peak at " + std::to_string(peak.freq) + " MHz is not near any harmonic");
    }
    LabeledPeak lp;
    lp.peak = peak;
    lp.n = int(n);
    lp.shift = std::abs(d);
    if (lp.shift <= tol) {
      lp.branch = Branch::center;
    } else {
      lp.branch = d > 0 ? Branch::upper : Branch::lower;
      weighted += peak.magnitude * lp.shift;
      weight += peak.magnitude;
    }
    out.peaks.push_back(lp);
  }
  out.consensus_shift = weight > 0 ? weighted / weight : 0.0;
  return out;
}

}  // namespace nvrf

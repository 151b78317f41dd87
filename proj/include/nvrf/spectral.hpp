#pragma once

#include <vector>

#include "nvrf/core.hpp"

namespace nvrf {

inline constexpr int default_pad_factor = 8;

struct SpectrumOptions {
  WindowKind window = WindowKind::rectangular;
  int pad_factor = default_pad_factor;
  bool remove_mean = true;
};

/// Rectangular when the record (N samples x spacing) spans an integer number
/// of RF periods and the samples repeat with the RF period, Hann otherwise.
WindowKind default_window(const TimeTrace& t, double nu_rf);

/// One-sided magnitude spectrum of the (mean-removed, tapered, zero-padded)
/// population. Bins are scaled so that, for pad_factor 1 and a rectangular
/// window, the sum of squared magnitudes equals the sum of squared samples.
/// Throws non_uniform_sampling if the grid is not uniform.
Spectrum spectrum(const TimeTrace& t, const SpectrumOptions& opt = {});

struct Peak {
  double freq = 0.0;  // MHz, interpolated
  double magnitude = 0.0;
  double interp_offset = 0.0;  // sub-bin correction, in bins
};

struct PeakList {
  std::vector<Peak> peaks;  // ascending freq
  double threshold = 0.0;   // absolute magnitude used
  double resolution = 0.0;  // MHz per bin
};

/// Local maxima whose magnitude is at least threshold_fraction * max,
/// refined by 3-point parabolic interpolation.
PeakList find_peaks(const Spectrum& s, double threshold_fraction);

enum class Branch { lower, center, upper };

std::string_view to_string(Branch b);

struct LabeledPeak {
  Peak peak;
  int n = 0;
  Branch branch = Branch::center;
  double shift = 0.0;  // unsigned |freq - n nu_rf|, MHz
};

struct HarmonicAssignment {
  std::vector<LabeledPeak> peaks;
  double consensus_shift = 0.0;  // magnitude-weighted mean over sideband peaks, MHz
  int skipped = 0;               // ambiguous peaks dropped when skipping is enabled
};

/// Labels each peak with its nearest harmonic n and side. A peak further than
/// 0.4 nu_rf from every harmonic throws ambiguous_assignment unless
/// skip_ambiguous is set. `center_tol` (MHz) decides the on-harmonic case and
/// defaults to the list resolution.
HarmonicAssignment assign_harmonics(const PeakList& p, double nu_rf, bool skip_ambiguous = false,
                                    double center_tol = -1.0);

}  // namespace nvrf

#pragma once

// CSV and JSON formats for traces, spectra, peak tables, fits, field
// solutions and pulse sequences. Numbers are written in the shortest form
// that reads back to the identical double.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "nvrf/core.hpp"
#include "nvrf/estimation.hpp"
#include "nvrf/sequence.hpp"
#include "nvrf/spectral.hpp"

namespace nvrf {

std::string format_number(double v);
/// Strict full-string parse; throws parse on garbage.
double parse_number(std::string_view s);

// tau_us,population,sigma with leading "# key=value" metadata lines. The
// sigma column is left empty for traces without uncertainties.
void write_trace_csv(std::ostream& os, const TimeTrace& t);
TimeTrace read_trace_csv(std::istream& is);

// freq_mhz,magnitude
void write_spectrum_csv(std::ostream& os, const Spectrum& s);
Spectrum read_spectrum_csv(std::istream& is);

// n,branch,freq_mhz,magnitude,shift_mhz
void write_peaks_csv(std::ostream& os, const HarmonicAssignment& h);
HarmonicAssignment read_peaks_csv(std::istream& is);

std::string fit_result_to_json(const FitResult& r);
FitResult fit_result_from_json(const std::string& text);

std::string field_solution_to_json(const FieldSolution& s);
FieldSolution field_solution_from_json(const std::string& text);

std::string sequence_to_json(const PulseSequence& s);
PulseSequence sequence_from_json(const std::string& text);

/// Whole-file helpers; failures throw io.
std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& content);

}  // namespace nvrf

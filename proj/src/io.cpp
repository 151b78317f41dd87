#include "nvrf/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace nvrf {

using nlohmann::json;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::parse, "not a number: '" + std::string(s) + "'");
  return v;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct CsvTable {
  std::map<std::string, std::string> meta;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int first_row_line = 0;
};

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      const std::string body = trim(s.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) t.meta[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
      continue;
    }
    auto cells = split(s, ',');
    for (auto& c : cells) c = trim(c);
    if (t.header.empty()) {
      t.header = std::move(cells);
      t.first_row_line = line_no + 1;
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(t.header.size()) + " columns");
    t.rows.push_back(std::move(cells));
  }
  if (is.bad()) throw Error(ErrorKind::io, "read failed");
  if (t.header.empty()) throw Error(ErrorKind::parse, "empty CSV: no header");
  return t;
}

void expect_header(const CsvTable& t, std::initializer_list<std::string_view> cols) {
  std::size_t i = 0;
  for (auto c : cols) {
    if (i >= t.header.size() || t.header[i] != c)
      throw Error(ErrorKind::parse, "unexpected CSV header, want column '" + std::string(c) + "'");
    ++i;
  }
}

double cell(const CsvTable& t, std::size_t r, std::size_t c) {
  try {
    return parse_number(t.rows[r][c]);
  } catch (const Error& e) {
    throw Error(ErrorKind::parse,
                "line " + std::to_string(t.first_row_line + int(r)) + ": " + e.what());
  }
}

std::optional<double> opt_number(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

// JSON has no infinity; an open-ended T2* is written as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json params_json(const FitParameters& p) {
  json j;
  const auto v = p.as_vector();
  for (int i = 0; i < n_params; ++i) j[std::string(param_name(i))] = v[i];
  return j;
}

FitParameters params_from(const json& j) {
  Eigen::Matrix<double, n_params, 1> v;
  for (int i = 0; i < n_params; ++i) v[i] = j.at(std::string(param_name(i))).get<double>();
  return FitParameters::from_vector(v);
}

template <class F>
auto with_json_errors(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("JSON: ") + e.what());
  }
}

}  // namespace

void write_trace_csv(std::ostream& os, const TimeTrace& t) {
  const TraceMeta& m = t.meta;
  if (m.power_mw) os << "# power_mw=" << format_number(*m.power_mw) << '\n';
  if (m.sequence) os << "# sequence=" << to_string(*m.sequence) << '\n';
  if (m.shots) os << "# shots=" << *m.shots << '\n';
  if (m.seed) os << "# seed=" << *m.seed << '\n';
  if (m.relaxed_bounds) os << "# relaxed_bounds=true\n";
  for (const auto& [k, v] : m.extra) os << "# " << k << '=' << v << '\n';
  os << "tau_us,population,sigma\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << format_number(t.tau[i]) << ',' << format_number(t.population[i]) << ',';
    if (t.has_sigma()) os << format_number(t.sigma[i]);
    os << '\n';
  }
}

TimeTrace read_trace_csv(std::istream& is) {
  const CsvTable t = read_csv(is);
  if (t.header.size() < 2 || t.header.size() > 3)
    throw Error(ErrorKind::parse, "trace CSV needs tau_us,population[,sigma]");
  if (t.header.size() == 3)
    expect_header(t, {"tau_us", "population", "sigma"});
  else
    expect_header(t, {"tau_us", "population"});

  TraceMeta meta;
  for (const auto& [k, v] : t.meta) {
    try {
      if (k == "power_mw") {
        meta.power_mw = parse_number(v);
      } else if (k == "sequence") {
        meta.sequence = sequence_kind_from_string(v);
      } else if (k == "shots") {
        meta.shots = std::stoll(v);
      } else if (k == "seed") {
        meta.seed = std::stoull(v);
      } else if (k == "relaxed_bounds") {
        meta.relaxed_bounds = v == "true" || v == "1";
      } else {
        meta.extra[k] = v;
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::parse, "bad metadata value for '" + k + "'");
    }
  }

  std::vector<double> tau, pop, sig;
  int with_sigma = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    tau.push_back(cell(t, r, 0));
    pop.push_back(cell(t, r, 1));
    if (t.header.size() == 3 && !t.rows[r][2].empty()) {
      sig.push_back(cell(t, r, 2));
      ++with_sigma;
    }
  }
  if (with_sigma != 0 && std::size_t(with_sigma) != t.rows.size())
    throw Error(ErrorKind::parse, "sigma column must be filled on every row or none");
  return make_trace(std::move(tau), std::move(pop), std::move(sig), std::move(meta));
}

void write_spectrum_csv(std::ostream& os, const Spectrum& s) {
  os << "# window=" << to_string(s.window) << '\n';
  os << "# pad_factor=" << s.pad_factor << '\n';
  os << "freq_mhz,magnitude\n";
  for (std::size_t i = 0; i < s.freq.size(); ++i)
    os << format_number(s.freq[i]) << ',' << format_number(s.magnitude[i]) << '\n';
}

Spectrum read_spectrum_csv(std::istream& is) {
  const CsvTable t = read_csv(is);
  expect_header(t, {"freq_mhz", "magnitude"});
  Spectrum s;
  if (auto it = t.meta.find("window"); it != t.meta.end()) s.window = window_from_string(it->second);
  if (auto it = t.meta.find("pad_factor"); it != t.meta.end())
    s.pad_factor = int(parse_number(it->second));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.freq.push_back(cell(t, r, 0));
    s.magnitude.push_back(cell(t, r, 1));
  }
  return s;
}

void write_peaks_csv(std::ostream& os, const HarmonicAssignment& h) {
  os << "# consensus_shift_mhz=" << format_number(h.consensus_shift) << '\n';
  if (h.skipped) os << "# skipped=" << h.skipped << '\n';
  os << "n,branch,freq_mhz,magnitude,shift_mhz\n";
  for (const LabeledPeak& p : h.peaks)
    os << p.n << ',' << to_string(p.branch) << ',' << format_number(p.peak.freq) << ','
       << format_number(p.peak.magnitude) << ',' << format_number(p.shift) << '\n';
}

HarmonicAssignment read_peaks_csv(std::istream& is) {
  const CsvTable t = read_csv(is);
  expect_header(t, {"n", "branch", "freq_mhz", "magnitude", "shift_mhz"});
  HarmonicAssignment h;
  if (auto it = t.meta.find("consensus_shift_mhz"); it != t.meta.end())
    h.consensus_shift = parse_number(it->second);
  if (auto it = t.meta.find("skipped"); it != t.meta.end()) h.skipped = int(parse_number(it->second));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    LabeledPeak p;
    p.n = int(cell(t, r, 0));
    const std::string& b = t.rows[r][1];
    if (b == "-")
      p.branch = Branch::lower;
    else if (b == "0")
      p.branch = Branch::center;
    else if (b == "+")
      p.branch = Branch::upper;
    else
      throw Error(ErrorKind::parse, "unknown branch '" + b + "'");
    p.peak.freq = cell(t, r, 2);
    p.peak.magnitude = cell(t, r, 3);
    p.shift = cell(t, r, 4);
    h.peaks.push_back(p);
  }
  return h;
}

std::string fit_result_to_json(const FitResult& r) {
  json j;
  j["params"] = params_json(r.params);
  j["sigma"] = params_json(r.sigma);
  json cov = json::array();
  for (int a = 0; a < n_params; ++a) {
    json row = json::array();
    for (int b = 0; b < n_params; ++b) row.push_back(r.covariance(a, b));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["residual_rms"] = r.residual_rms;
  j["chi2_reduced"] = r.chi2_reduced;
  j["n_iter"] = r.n_iter;
  j["init_source"] = std::string(to_string(r.init_source));
  j["sign_ambiguous"] = r.sign_ambiguous;
  j["model"] = std::string(to_string(r.model));
  j["nu_rf_mhz"] = r.nu_rf;
  j["coherence_order"] = r.coherence_order;
  j["t2_star_us"] = finite_or_null(r.t2_star);
  j["power_mw"] = r.power_mw ? json(*r.power_mw) : json(nullptr);
  j["nu_z_mhz"] = r.nu_z();
  j["nu_z_sigma_mhz"] = r.nu_z_sigma();
  return j.dump(2) + "\n";
}

FitResult fit_result_from_json(const std::string& text) {
  return with_json_errors([&] {
    const json j = json::parse(text);
    FitResult r;
    r.params = params_from(j.at("params"));
    r.sigma = params_from(j.at("sigma"));
    if (j.contains("covariance")) {
      const json& cov = j.at("covariance");
      if (cov.size() != n_params) throw Error(ErrorKind::parse, "covariance must be 6x6");
      for (int a = 0; a < n_params; ++a) {
        if (cov[a].size() != n_params) throw Error(ErrorKind::parse, "covariance must be 6x6");
        for (int b = 0; b < n_params; ++b) r.covariance(a, b) = cov[a][b].get<double>();
      }
    }
    r.residual_rms = j.at("residual_rms").get<double>();
    r.chi2_reduced = j.value("chi2_reduced", 0.0);
    r.n_iter = j.at("n_iter").get<int>();
    r.init_source = init_source_from_string(j.at("init_source").get<std::string>());
    r.sign_ambiguous = j.value("sign_ambiguous", false);
    r.model = sequence_kind_from_string(j.value("model", std::string("ramsey")));
    r.nu_rf = j.at("nu_rf_mhz").get<double>();
    r.coherence_order = j.value("coherence_order", 1);
    const auto t2 = j.contains("t2_star_us") ? opt_number(j["t2_star_us"]) : std::nullopt;
    r.t2_star = t2 ? *t2 : std::numeric_limits<double>::infinity();
    if (j.contains("power_mw")) r.power_mw = opt_number(j["power_mw"]);
    return r;
  });
}

std::string field_solution_to_json(const FieldSolution& s) {
  json j;
  j["nu_transition_mhz"] = s.nu_transition;
  j["law"] = {{"a_mhz_per_sqrt_mw", s.law.a}, {"b_mhz_per_mw", s.law.b}};
  j["ratio"] = {{"measured", s.ratio.measured}, {"expected", s.ratio.expected}};
  json cols = json::array();
  for (const PowerColumn& c : s.columns) {
    cols.push_back({{"power_mw", c.power_mw},
                    {"nu_z_mhz", c.nu_z},
                    {"nu_z_sigma_mhz", c.nu_z_sigma},
                    {"shift_mhz", c.shift},
                    {"shift_sigma_mhz", c.shift_sigma},
                    {"nu_dc_mhz", c.nu_dc},
                    {"nu_dc_sigma_mhz", c.nu_dc_sigma},
                    {"nu_bs_mhz", c.nu_bs},
                    {"nu_bs_sigma_mhz", c.nu_bs_sigma},
                    {"nu_x_mhz", c.nu_x},
                    {"nu_x_sigma_mhz", c.nu_x_sigma},
                    {"theta_deg", c.theta_deg}});
  }
  j["columns"] = cols;
  return j.dump(2) + "\n";
}

FieldSolution field_solution_from_json(const std::string& text) {
  return with_json_errors([&] {
    const json j = json::parse(text);
    FieldSolution s;
    s.nu_transition = j.at("nu_transition_mhz").get<double>();
    s.law.a = j.at("law").at("a_mhz_per_sqrt_mw").get<double>();
    s.law.b = j.at("law").at("b_mhz_per_mw").get<double>();
    s.ratio.measured = j.at("ratio").at("measured").get<double>();
    s.ratio.expected = j.at("ratio").at("expected").get<double>();
    const json& cols = j.at("columns");
    if (cols.size() != 2) throw Error(ErrorKind::parse, "field solution needs two columns");
    for (std::size_t i = 0; i < 2; ++i) {
      const json& c = cols[i];
      PowerColumn& p = s.columns[i];
      p.power_mw = c.at("power_mw").get<double>();
      p.nu_z = c.at("nu_z_mhz").get<double>();
      p.nu_z_sigma = c.at("nu_z_sigma_mhz").get<double>();
      p.shift = c.at("shift_mhz").get<double>();
      p.shift_sigma = c.at("shift_sigma_mhz").get<double>();
      p.nu_dc = c.at("nu_dc_mhz").get<double>();
      p.nu_dc_sigma = c.at("nu_dc_sigma_mhz").get<double>();
      p.nu_bs = c.at("nu_bs_mhz").get<double>();
      p.nu_bs_sigma = c.at("nu_bs_sigma_mhz").get<double>();
      p.nu_x = c.at("nu_x_mhz").get<double>();
      p.nu_x_sigma = c.at("nu_x_sigma_mhz").get<double>();
      p.theta_deg = c.at("theta_deg").get<double>();
    }
    return s;
  });
}

std::string sequence_to_json(const PulseSequence& s) {
  json j;
  j["kind_tag"] = std::string(to_string(s.kind_tag));
  j["total_duration_us"] = s.total_duration;
  json ev = json::array();
  for (const PulseEvent& e : s.events)
    ev.push_back({{"kind", std::string(to_string(e.kind))},
                  {"start", e.start},
                  {"duration", e.duration},
                  {"mw_angle", e.mw_angle},
                  {"mw_phase", e.mw_phase}});
  j["events"] = ev;
  return j.dump(2) + "\n";
}

PulseSequence sequence_from_json(const std::string& text) {
  return with_json_errors([&] {
    const json j = json::parse(text);
    PulseSequence s;
    s.kind_tag = sequence_kind_from_string(j.at("kind_tag").get<std::string>());
    for (const json& e : j.at("events")) {
      PulseEvent p;
      p.kind = event_kind_from_string(e.at("kind").get<std::string>());
      p.start = e.at("start").get<double>();
      p.duration = e.at("duration").get<double>();
      p.mw_angle = e.value("mw_angle", 0.0);
      p.mw_phase = e.value("mw_phase", 0.0);
      s.events.push_back(p);
    }
    if (j.contains("total_duration_us")) {
      s.total_duration = j["total_duration_us"].get<double>();
    } else {
      for (const PulseEvent& e : s.events) s.total_duration = std::max(s.total_duration, e.end());
    }
    return s;
  });
}

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::io, "read failed for '" + p.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + p.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw Error(ErrorKind::io, "write failed for '" + p.string() + "'");
}

}  // namespace nvrf

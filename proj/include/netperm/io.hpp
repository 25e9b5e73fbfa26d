#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "netperm/common.hpp"
#include "netperm/inference.hpp"
#include "netperm/interference.hpp"
#include "netperm/randomize.hpp"
#include "netperm/simulate.hpp"

#include <json.hpp>

namespace netperm {

/// 17 significant digits: round-trips every double exactly.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw data_error(where + ": cannot parse number '" + s + "'");
  }
}

inline std::uint8_t parse_binary(const std::string& s, const std::string& where) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw data_error(where + ": expected 0 or 1, got '" + s + "'");
}

}  // namespace detail

/// Data CSV: header id,y,d,z with optional trailing b column.
inline ObservedData read_data_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  const auto header = detail::split_csv(line);
  bool has_b = false;
  if (header.size() == 5 && header[4] == "b") has_b = true;
  else if (header.size() != 4) throw data_error(path + ": header must be id,y,d,z[,b]");
  if (header[0] != "id" || header[1] != "y" || header[2] != "d" || header[3] != "z")
    throw data_error(path + ": header must be id,y,d,z[,b]");

  ObservedData data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = path + " line " + std::to_string(lineno);
    if (cells.size() != header.size())
      throw data_error(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                       std::to_string(cells.size()));
    data.y.push_back(detail::parse_double(cells[1], where));
    data.d.push_back(detail::parse_binary(cells[2], where));
    data.z.push_back(detail::parse_binary(cells[3], where));
    if (has_b) data.b.push_back(detail::parse_double(cells[4], where));
  }
  if (data.y.empty()) throw data_error(path + ": no data rows");
  return data;
}

inline void write_data_csv(const std::string& path, const ObservedData& data) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write data file '" + path + "'");
  out << (data.b.empty() ? "id,y,d,z\n" : "id,y,d,z,b\n");
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << i << ',' << format_g17(data.y[i]) << ',' << int(data.d[i]) << ',' << int(data.z[i]);
    if (!data.b.empty()) out << ',' << format_g17(data.b[i]);
    out << '\n';
  }
}

/// Edge list: one "i j" pair per line, '#' starts a comment line.
inline std::vector<std::pair<std::int32_t, std::int32_t>> read_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open edge file '" + path + "'");
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream row(t);
    long long i = 0, j = 0;
    if (!(row >> i >> j))
      throw data_error(path + " line " + std::to_string(lineno) + ": expected two integers");
    std::string rest;
    if (row >> rest)
      throw data_error(path + " line " + std::to_string(lineno) + ": expected exactly two integers");
    edges.emplace_back(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j));
  }
  return edges;
}

/// Writes every directed entry, so reload via build_from_edges(...,
/// symmetric=false) reproduces the matrix exactly.
inline void write_edge_list(const std::string& path, const InterferenceMatrix& a) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write edge file '" + path + "'");
  for (std::size_t i = 0; i < a.n(); ++i)
    for (std::int32_t j : a.rows[i]) out << i << ' ' << j << '\n';
}

inline nlohmann::json test_result_json(const TestResult& r) {
  nlohmann::json j;
  j["statistic_observed"] = r.statistic_observed;
  j["pvalue"] = r.pvalue;
  j["draws_used"] = r.draws_used;
  j["extreme_count"] = r.extreme_count;
  j["nonconverged_fits"] = r.nonconverged_fits;
  j["failed_draws"] = r.failed_draws;
  j["seed"] = r.seed;
  j["method"] = method_string(r.method);
  j["stat"] = stat_string(r.stat_kind);
  j["exact"] = r.exact;
  j["observed_zero_variance"] = r.observed_zero_variance;
  return j;
}

/// 64-bit FNV-1a as a stable cross-platform content digest.
inline std::string digest_hex(const std::string& content) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : content) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunManifest {
  std::string command_line;
  std::string config_digest;
  std::uint64_t master_seed = 0;
  std::string version = version_string;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
  nlohmann::json extra;  // command-specific fields (failure counts, p1/p0 summaries)
};

inline nlohmann::json manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["command_line"] = m.command_line;
  j["config_digest"] = m.config_digest;
  j["master_seed"] = m.master_seed;
  j["version"] = m.version;
  j["wall_seconds"] = m.wall_seconds;
  j["warnings"] = m.warnings;
  if (!m.extra.is_null()) j["detail"] = m.extra;
  return j;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << content;
}

inline void write_study_csv(const std::string& path, const StudyResult& res) {
  std::ostringstream out;
  out << "replicate,method,stat,delta0,tau0,pvalue\n";
  for (const auto& row : res.rows) {
    if (!row.ok) continue;
    out << row.replicate << ',' << method_string(row.method) << ',' << stat_string(row.stat) << ','
        << format_g17(row.delta0) << ',' << format_g17(row.tau0) << ',' << format_g17(row.pvalue) << '\n';
  }
  write_text(path, out.str());
}

/// Sorted p-values with ranks per (method, stat, theta0) group, ready for
/// ECDF plotting.
inline void write_ecdf_csv(const std::string& path, const StudyResult& res) {
  std::ostringstream out;
  out << "method,stat,delta0,tau0,rank,pvalue,ecdf\n";
  const std::size_t per_rep = res.tasks.size();
  for (std::size_t t = 0; t < per_rep; ++t) {
    std::vector<double> pvs;
    for (std::size_t r = 0; r * per_rep + t < res.rows.size(); ++r) {
      const StudyRow& row = res.rows[r * per_rep + t];
      if (row.ok) pvs.push_back(row.pvalue);
    }
    std::sort(pvs.begin(), pvs.end());
    const auto& task = res.tasks[t];
    for (std::size_t k = 0; k < pvs.size(); ++k) {
      out << method_string(task.method) << ',' << stat_string(task.stat) << ','
          << format_g17(task.theta0.delta) << ',' << format_g17(task.theta0.tau) << ',' << (k + 1) << ','
          << format_g17(pvs[k]) << ',' << format_g17(static_cast<double>(k + 1) / static_cast<double>(pvs.size()))
          << '\n';
    }
  }
  write_text(path, out.str());
}

inline void write_rate_csv(const std::string& path, const std::vector<RateCell>& cells,
                           const std::string& rate_name) {
  std::ostringstream out;
  out << "method,stat,delta0,tau0," << rate_name << ",replicates_used\n";
  for (const auto& c : cells) {
    out << method_string(c.method) << ',' << stat_string(c.stat) << ',' << format_g17(c.delta0) << ','
        << format_g17(c.tau0) << ',' << format_g17(c.rate) << ',' << c.used << '\n';
  }
  write_text(path, out.str());
}

inline void write_grid_csv(const std::string& path, const PvalueGrid& grid) {
  std::ostringstream out;
  out << "delta0,tau0,pvalue\n";
  for (std::size_t i = 0; i < grid.n_delta(); ++i)
    for (std::size_t j = 0; j < grid.n_tau(); ++j)
      out << format_g17(grid.delta_values[i]) << ',' << format_g17(grid.tau_values[j]) << ','
          << format_g17(grid.pvalue(i, j)) << '\n';
  write_text(path, out.str());
}

inline nlohmann::json summary_stats_json(const std::vector<double>& values) {
  double sum = 0, lo = 0, hi = 0;
  std::size_t count = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    if (count == 0) lo = hi = v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
    ++count;
  }
  nlohmann::json j;
  j["count"] = count;
  if (count) {
    j["mean"] = sum / static_cast<double>(count);
    j["min"] = lo;
    j["max"] = hi;
  }
  return j;
}

}  // namespace netperm

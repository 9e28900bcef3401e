#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "specdyn/dynamics.hpp"
#include "specdyn/errors.hpp"
#include "specdyn/experiments.hpp"
#include "specdyn/linalg.hpp"
#include "specdyn/rng.hpp"

namespace specdyn {

// Shortest-round-trip decimal rendering; keeps CSV artifacts byte-stable.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Write-to-temp-then-rename so partially written artifacts never appear.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// ---------------------------------------------------------------------------
// Dense CSV matrices (one row per line, comma separator, '.' decimal)
// ---------------------------------------------------------------------------

inline std::string matrix_to_csv(const Mat& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Mat matrix_from_csv(const std::string& text) {
  std::vector<Vec> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    Vec row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("bad CSV cell: " + cell);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("ragged CSV rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty CSV matrix");
  Mat m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Mat& m) {
  atomic_write(path, matrix_to_csv(m));
}

inline Mat read_matrix_csv(const std::filesystem::path& path) {
  return matrix_from_csv(read_file(path));
}

// ---------------------------------------------------------------------------
// Trajectory CSV: t, loss, e1, out_drift, lambda_max_D2
// ---------------------------------------------------------------------------

inline std::string trajectory_to_csv(const Trajectory& traj, std::uint64_t config_hash,
                                     std::uint64_t seed) {
  std::string out = "# config_hash=" + hex64(config_hash) +
                    " seed=" + std::to_string(seed) + "\n";
  out += "t,loss,e1,out_drift,lambda_max_D2\n";
  for (std::size_t t = 0; t < traj.losses.size(); ++t) {
    out += std::to_string(t);
    out += ',';
    out += format_double(traj.losses[t]);
    out += ',';
    out += format_double(traj.in_span_error[t]);
    out += ',';
    out += format_double(traj.out_span_drift[t]);
    out += ',';
    out += t < traj.coupling_norm.size() ? format_double(traj.coupling_norm[t])
                                         : std::string("nan");
    out += '\n';
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<Vec> rows;

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw IoError("no such CSV column: " + name);
  }
  Vec column(const std::string& name) const {
    const std::size_t idx = column_index(name);
    Vec v(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i][idx];
    return v;
  }
};

inline CsvTable read_csv_table(const std::filesystem::path& path) {
  CsvTable table;
  std::istringstream is(read_file(path));
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string cell;
    if (!have_header) {
      while (std::getline(ls, cell, ',')) table.columns.push_back(cell);
      have_header = true;
      continue;
    }
    Vec row;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("bad CSV cell: " + cell);
      }
    }
    if (row.size() != table.columns.size()) throw IoError("ragged CSV rows");
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw IoError("CSV table has no header row");
  return table;
}

// ---------------------------------------------------------------------------
// Flat key-value config with [section] headers
// ---------------------------------------------------------------------------

struct ConfigSection {
  std::string name;
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  const std::string& get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end())
      throw ConfigError("missing config key '" + key + "' in section [" + name + "]");
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }
  double get_double(const std::string& key) const {
    try {
      return std::stod(get(key));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not a number");
    }
  }
  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    try {
      return std::stoull(get(key));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not an unsigned integer");
    }
  }
};

struct ParsedConfig {
  ConfigSection globals;                // keys before the first section header
  std::vector<ConfigSection> sections;  // in file order
  std::string raw;                      // exact file bytes, hashed for headers

  std::uint64_t hash() const { return fnv1a64(raw); }
};

inline ParsedConfig parse_config(const std::string& text) {
  ParsedConfig cfg;
  cfg.raw = text;
  cfg.globals.name = "";
  ConfigSection* current = &cfg.globals;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
      cfg.sections.push_back({strip(line.substr(1, line.size() - 2)), {}});
      current = &cfg.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    current->values[key] = value;
  }
  return cfg;
}

inline ParsedConfig read_config_file(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

// Preconditioner section -> config; recognizes the same keys as
// PrecondConfig::to_kv plus the hosting section's name as the method name.
inline PrecondConfig precond_from_section(const ConfigSection& s) {
  PrecondConfig cfg;
  cfg.family = family_from_name(s.get("family"));
  cfg.epsilon = s.get_double_or("epsilon", cfg.epsilon);
  if (s.has("window")) {
    const std::string w = s.get("window");
    if (w == "unbounded")
      cfg.window = std::nullopt;
    else
      cfg.window = static_cast<std::size_t>(s.get_u64_or("window", 10));
  }
  if (s.has("take_sqrt")) {
    const std::string v = s.get("take_sqrt");
    cfg.take_sqrt = (v == "true" || v == "1");
  }
  cfg.rho = s.get_double_or("rho", cfg.rho);
  cfg.beta1 = s.get_double_or("beta1", cfg.beta1);
  cfg.beta2 = s.get_double_or("beta2", cfg.beta2);
  cfg.validate();
  return cfg;
}

inline MethodSpec method_from_section(const ConfigSection& s) {
  MethodSpec m;
  m.name = s.name;
  m.precond = precond_from_section(s);
  m.eta = s.get_double_or("eta", 0.0);
  m.momentum = s.get_double_or("momentum", 0.0);
  return m;
}

// ---------------------------------------------------------------------------
// Report CSV
// ---------------------------------------------------------------------------

inline std::string report_to_csv(const ExperimentReport& report,
                                 std::uint64_t config_hash, std::uint64_t seed) {
  std::string out = "# config_hash=" + hex64(config_hash) +
                    " seed=" + std::to_string(seed) + "\n";
  out += "method,seed,training_error,test_error,dist_w_star,dist_min_norm,accuracy\n";
  for (const RunRecord& r : report.rows) {
    out += r.method;
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += format_double(r.training_error);
    out += ',';
    out += format_double(r.test_error);
    out += ',';
    out += format_double(r.dist_w_star);
    out += ',';
    out += format_double(r.dist_min_norm);
    out += ',';
    out += format_double(r.accuracy);
    out += '\n';
  }
  return out;
}

}  // namespace specdyn

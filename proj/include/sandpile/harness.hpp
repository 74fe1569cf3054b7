#pragma once

// Experiment plumbing: specs, report rows, CSV/JSON output, config files and
// replica-parallel execution with deterministic aggregation.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sandpile/lattice.hpp"

#ifndef SANDPILE_VERSION
#define SANDPILE_VERSION "0.0.0"
#endif

namespace sandpile::harness {

inline constexpr const char* kVersion = SANDPILE_VERSION;
inline constexpr const char* kThreadsEnv = "SANDPILE_THREADS";

struct ExperimentSpec {
  std::string experiment;
  int d = 2;
  std::vector<int> box{2, 2};
  std::optional<Point> origin;
  std::uint64_t samples = 10000;
  std::uint64_t seed = 1;
  int replicas = 1;
  std::string out;
  std::string format = "csv";
  /// Side lengths for nested-box experiments; empty means a default ladder.
  std::vector<int> nested;
  /// "auto", "exact" or "mc" for experiments that support both.
  std::string method = "auto";
};

struct Row {
  std::string name;
  std::string estimate;
  std::optional<double> stderr_;
  std::string target;
  std::string tolerance;
  std::optional<bool> pass;
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::vector<Row> rows;
  double wall_seconds = 0.0;
  std::string version = kVersion;

  bool all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const Row& r) { return !r.pass || *r.pass; });
  }
};

// ---------------------------------------------------------------------------
// Formatting

inline std::string fmt_double(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

template <typename T>
std::string fmt_exact(const T& x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

/// Header plus one row per statistic: name,estimate,stderr,target,tolerance,pass.
inline std::string to_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  os << "name,estimate,stderr,target,tolerance,pass\n";
  for (const Row& r : rep.rows) {
    os << csv_field(r.name) << ',' << csv_field(r.estimate) << ',' << (r.stderr_ ? fmt_double(*r.stderr_) : "") << ','
       << csv_field(r.target) << ',' << csv_field(r.tolerance) << ',' << (r.pass ? (*r.pass ? "true" : "false") : "") << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json spec_to_json(const ExperimentSpec& s) {
  nlohmann::ordered_json j;
  j["experiment"] = s.experiment;
  j["d"] = s.d;
  j["box"] = s.box;
  j["origin"] = s.origin ? nlohmann::ordered_json(*s.origin) : nlohmann::ordered_json(nullptr);
  j["samples"] = s.samples;
  j["seed"] = s.seed;
  j["replicas"] = s.replicas;
  j["nested"] = s.nested;
  j["method"] = s.method;
  j["format"] = s.format;
  return j;
}

/// Same fields as the CSV, plus the spec echo, version and wall clock.
/// `with_timing = false` omits the wall-clock field.
inline std::string to_json(const ExperimentReport& rep, bool with_timing = true) {
  nlohmann::ordered_json j;
  j["version"] = rep.version;
  j["spec"] = spec_to_json(rep.spec);
  j["rows"] = nlohmann::ordered_json::array();
  for (const Row& r : rep.rows) {
    nlohmann::ordered_json row;
    row["name"] = r.name;
    row["estimate"] = r.estimate;
    row["stderr"] = r.stderr_ ? nlohmann::ordered_json(*r.stderr_) : nlohmann::ordered_json(nullptr);
    row["target"] = r.target;
    row["tolerance"] = r.tolerance;
    row["pass"] = r.pass ? nlohmann::ordered_json(*r.pass) : nlohmann::ordered_json(nullptr);
    j["rows"].push_back(row);
  }
  j["all_pass"] = rep.all_pass();
  if (with_timing) j["wall_clock_seconds"] = rep.wall_seconds;
  return j.dump(2) + "\n";
}

inline std::string render(const ExperimentReport& rep) {
  if (rep.spec.format == "csv") return to_csv(rep);
  if (rep.spec.format == "json") return to_json(rep);
  throw std::invalid_argument("unknown output format: " + rep.spec.format);
}

inline void write_report(const ExperimentReport& rep, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open output file: " + path);
  f << render(rep);
  if (!f) throw std::runtime_error("failed writing output file: " + path);
}

// ---------------------------------------------------------------------------
// Spec parsing

/// "2x3" -> {2, 3}; a single number is repeated on every axis.
inline std::vector<int> parse_box(const std::string& text, int d) {
  if (text.empty() || text.back() == 'x') throw std::invalid_argument("malformed box: " + text);
  std::vector<int> sizes;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty()) throw std::invalid_argument("malformed box: " + text);
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(part, &used);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("malformed box: " + text);
    }
    if (used != part.size() || v < 1) throw std::invalid_argument("malformed box: " + text);
    sizes.push_back(v);
  }
  if (sizes.size() == 1 && d > 1) sizes.assign(d, sizes[0]);
  if (static_cast<int>(sizes.size()) != d) throw std::invalid_argument("box '" + text + "' does not have " + std::to_string(d) + " axes");
  return sizes;
}

/// "1,2,3" -> {1, 2, 3}.
inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    out.push_back(std::stoi(part, &used));
    if (used != part.size()) throw std::invalid_argument("malformed integer list: " + text);
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Reads `key = value` lines (`#` starts a comment).  Keys use the CLI flag names.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
    kv[key] = val;
  }
  return kv;
}

/// Applies config-file entries on top of `spec`.  `box` is resolved after `d`.
inline void apply_config(ExperimentSpec& spec, const std::map<std::string, std::string>& kv, std::string* box_text) {
  for (const auto& [k, v] : kv) {
    if (k == "experiment") spec.experiment = v;
    else if (k == "d") spec.d = std::stoi(v);
    else if (k == "box") *box_text = v;
    else if (k == "origin") spec.origin = parse_int_list(v);
    else if (k == "samples") spec.samples = std::stoull(v);
    else if (k == "seed") spec.seed = std::stoull(v);
    else if (k == "replicas") spec.replicas = std::stoi(v);
    else if (k == "out") spec.out = v;
    else if (k == "format") spec.format = v;
    else if (k == "nested") spec.nested = parse_int_list(v);
    else if (k == "method") spec.method = v;
    else throw std::invalid_argument("unknown config key: " + k);
  }
}

// ---------------------------------------------------------------------------
// Replicas

inline int thread_count() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    const int t = std::atoi(env);
    if (t >= 1) return t;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, units) into `replicas` contiguous chunks, runs them on up to
/// thread_count() threads and folds the accumulators in replica order.
/// `work(acc, index)` must draw randomness only from streams keyed by
/// `index`; then the result is independent of the replica count.
template <typename Acc, typename Make, typename Work>
Acc run_replicated(std::uint64_t units, int replicas, Make make, Work work) {
  replicas = std::max(1, replicas);
  std::vector<Acc> parts;
  parts.reserve(replicas);
  for (int r = 0; r < replicas; ++r) parts.push_back(make());
  auto chunk = [&](int r) {
    const std::uint64_t lo = units * static_cast<std::uint64_t>(r) / replicas;
    const std::uint64_t hi = units * static_cast<std::uint64_t>(r + 1) / replicas;
    for (std::uint64_t i = lo; i < hi; ++i) work(parts[r], i);
  };
  const int threads = std::min(thread_count(), replicas);
  if (threads <= 1) {
    for (int r = 0; r < replicas; ++r) chunk(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (int r = next++; r < replicas; r = next++) chunk(r);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  Acc total = std::move(parts[0]);
  for (int r = 1; r < replicas; ++r) total.merge(parts[r]);
  return total;
}

}  // namespace sandpile::harness

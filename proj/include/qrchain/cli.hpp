#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qrchain/fibergrid.hpp"
#include "qrchain/hardware.hpp"
#include "qrchain/metrics.hpp"
#include "qrchain/optimizer.hpp"
#include "qrchain/simcore.hpp"

namespace qrchain::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Bad flags, values or missing inputs; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// text formats

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view text, const std::string& what) {
  std::string t(text);
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
  std::size_t start = 0;
  while (start < t.size() && std::isspace(static_cast<unsigned char>(t[start]))) ++start;
  t = t.substr(start);
  if (!t.empty() && t.front() == '+') t.erase(0, 1);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw UsageError("cannot parse " + what + " from '" + std::string(text) + "'");
  }
  return v;
}

inline std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

/// "T,n,F,pdet,sq", or the words "baseline" / "noiseless". T accepts "inf".
inline HardwareParams parse_params(std::string_view text) {
  if (text == "baseline") return kBaseline;
  if (text == "noiseless") return kNoiseless;
  const auto f = split(text, ',');
  if (f.size() != 5) throw UsageError("--params needs 5 comma-separated values T,n,F,pdet,sq");
  HardwareParams hw;
  hw.coherence_time = parse_number(f[0], "coherence time");
  const double n = parse_number(f[1], "num_modes");
  if (n != std::floor(n) || n < 1 || n > 9e15) throw UsageError("num_modes must be a positive integer");
  hw.num_modes = static_cast<std::int64_t>(n);
  hw.link_fidelity = parse_number(f[2], "link fidelity");
  hw.detection_prob = parse_number(f[3], "detection probability");
  hw.swap_quality = parse_number(f[4], "swap quality");
  try {
    hw.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return hw;
}

inline std::string format_params(const HardwareParams& hw) {
  return fmt(hw.coherence_time) + "," + std::to_string(hw.num_modes) + "," +
         fmt(hw.link_fidelity) + "," + fmt(hw.detection_prob) + "," + fmt(hw.swap_quality);
}

/// "direct", "r:a" (repeater count and asymmetry parameter) or "sites:i,j,k".
inline ChainConfiguration parse_placement(std::string_view text, const FiberPath& path) {
  try {
    if (text == "direct" || text == "0" || text.starts_with("0:")) return direct_configuration(path);
    if (text.starts_with("sites:")) {
      std::vector<int> sites;
      for (const auto& s : split(text.substr(6), ',')) {
        const double v = parse_number(s, "site index");
        if (v != std::floor(v)) throw UsageError("site index must be an integer: " + s);
        sites.push_back(static_cast<int>(v));
      }
      return make_configuration(path, sites);
    }
    const auto f = split(text, ':');
    if (f.size() != 2) throw UsageError("--placement must be direct, r:a or sites:i,j,k");
    const double r = parse_number(f[0], "repeater count");
    const double a = parse_number(f[1], "asymmetry parameter");
    if (r != std::floor(r) || r < 0) throw UsageError("repeater count must be a non-negative integer");
    const auto table = enumerate_placements(path, static_cast<int>(r));
    return select_configuration(table, static_cast<int>(r), a);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("bad placement: ") + e.what());
  }
}

inline std::string join_sites(const std::vector<int>& sites, char sep = ' ') {
  std::string s;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (i) s.push_back(sep);
    s += std::to_string(sites[i]);
  }
  return s;
}

inline constexpr const char* kRecordHeader = "delivery_time_s,generation_duration_s,werner";

/// Ordered key=value pairs written as '#' comment lines ahead of any data.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, fmt(value)); }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : entries) out << "# " << k << '=' << v << '\n';
  }
};

inline Manifest start_manifest(const std::string& subcommand) {
  Manifest m;
  m.set("tool", std::string("qrchain ") + kVersion);
  m.set("subcommand", subcommand);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  m.set("started_utc", std::string(buf));
  return m;
}

inline void write_records(std::ostream& out, std::span<const PairRecord> records) {
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << fmt(r.delivery_time) << ',' << fmt(r.generation_duration) << ',' << fmt(r.werner) << '\n';
  }
}

struct RecordDump {
  Manifest manifest;
  std::vector<PairRecord> records;
};

inline RecordDump read_records(std::istream& in) {
  RecordDump dump;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto body = line.substr(line.find_first_not_of("# ") == std::string::npos
                                        ? line.size()
                                        : line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq != std::string::npos) dump.manifest.set(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    if (line == kRecordHeader) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) {
      throw std::runtime_error("record line " + std::to_string(line_no) + ": expected 3 fields");
    }
    try {
      dump.records.push_back({parse_number(f[0], "delivery time"),
                              parse_number(f[1], "generation duration"),
                              parse_number(f[2], "werner parameter")});
    } catch (const UsageError& e) {
      throw std::runtime_error("record line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dump;
}

inline FiberPath open_path(const std::string& file, bool band_check) {
  if (file.empty()) throw UsageError("--path-file is required");
  if (!std::filesystem::is_regular_file(file)) throw UsageError("path file not found: " + file);
  try {
    return load_fiber_path_file(file, band_check);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("bad path file: ") + e.what());
  }
}

inline double parse_cutoff(const std::string& text) {
  const double c = parse_number(text, "cut-off");
  if (!(c > 0.0)) throw UsageError("--cutoff must be > 0 (use inf for none)");
  return c;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string path_file;
  bool band_check = true;
  std::string placement = "direct";
  std::string params = "baseline";
  std::string cutoff = "inf";  // seconds
  std::uint64_t seed = 1;
  std::size_t pairs = 100;
  double light_speed = kFiberLightSpeed;
  std::string out;  // record dump file; empty: stdout
};

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  if (o.pairs == 0) throw UsageError("--pairs must be >= 1");
  if (!(o.light_speed > 0.0)) throw UsageError("--light-speed must be > 0");
  const FiberPath path = open_path(o.path_file, o.band_check);
  SimConfig sim;
  sim.chain = parse_placement(o.placement, path);
  sim.params = parse_params(o.params);
  sim.cutoff_time = parse_cutoff(o.cutoff);
  sim.num_pairs = o.pairs;
  sim.rng_seed = o.seed;
  sim.light_speed = o.light_speed;

  Manifest m = start_manifest("simulate");
  m.set("path_file", o.path_file);
  m.set("placement", o.placement);
  m.set("repeater_sites", join_sites(sim.chain.repeater_sites));
  m.set("asymmetry", sim.chain.asymmetry);
  m.set("params", format_params(sim.params));
  m.set("coherence_time", sim.params.coherence_time);
  m.set("cutoff_time", sim.cutoff_time);
  m.set("light_speed", sim.light_speed);
  m.set("seed", std::to_string(sim.rng_seed));
  m.set("pairs", std::to_string(sim.num_pairs));

  const auto wall0 = std::chrono::steady_clock::now();
  ChainSimulator simulator(sim);
  const auto records = simulator.run();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  m.set("wall_clock_s", wall);

  const auto skr = skr_from_records(records);
  double mean_w = 0.0;
  for (const auto& r : records) mean_w += r.werner;
  mean_w /= static_cast<double>(records.size());
  Manifest summary;
  summary.set("pairs", std::to_string(records.size()));
  summary.set("entanglement_rate_hz", skr.entanglement_rate);
  summary.set("entanglement_rate_stderr_hz", skr.rate_stderr);
  summary.set("mean_werner", mean_w);
  summary.set("mean_fidelity", (1.0 + 3.0 * mean_w) / 4.0);
  summary.set("qber", skr.qber);
  summary.set("skr_hz", skr.skr);
  summary.set("cutoffs", std::to_string(simulator.stats().cutoffs));
  summary.set("events", std::to_string(simulator.stats().events));

  if (o.out.empty()) {
    m.write(out);
    write_records(out, records);
    summary.write(out);
  } else {
    std::ofstream file(o.out);
    if (!file) throw std::runtime_error("cannot write " + o.out);
    m.write(file);
    write_records(file, records);
    for (const auto& [k, v] : summary.entries) out << k << '=' << v << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsOptions {
  std::string records = "-";  // dump file, "-" for stdin
  std::string metric = "skr";
  std::optional<double> coherence_time;  // default: taken from the dump manifest, else inf
  bool csv = false;
};

inline int cmd_metrics(const MetricsOptions& o, std::istream& in, std::ostream& out) {
  Metric metric;
  try {
    metric = metric_from_name(o.metric);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  RecordDump dump;
  if (o.records == "-") {
    dump = read_records(in);
  } else {
    std::ifstream file(o.records);
    if (!file) throw UsageError("record dump not found: " + o.records);
    dump = read_records(file);
  }
  double T = kInfinity;
  if (o.coherence_time) {
    T = *o.coherence_time;
  } else if (auto v = dump.manifest.get("coherence_time")) {
    T = parse_number(*v, "coherence_time");
  }
  if (!(T > 0.0)) throw UsageError("coherence time must be > 0");

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("metric", std::string(metric_name(metric)));
  if (metric == Metric::skr) {
    const auto r = skr_from_records(dump.records);
    kv.emplace_back("pairs", std::to_string(r.pairs));
    kv.emplace_back("entanglement_rate_hz", fmt(r.entanglement_rate));
    kv.emplace_back("entanglement_rate_stderr_hz", fmt(r.rate_stderr));
    kv.emplace_back("qber", fmt(r.qber));
    kv.emplace_back("qber_stderr", fmt(r.qber_stderr));
    kv.emplace_back("skr_hz", fmt(r.skr));
    kv.emplace_back("skr_stderr_hz", fmt(r.skr_stderr));
  } else {
    const auto r = bqc_from_records(dump.records, T);
    kv.emplace_back("coherence_time", fmt(T));
    kv.emplace_back("rounds", std::to_string(r.rounds));
    kv.emplace_back("round_rate_hz", fmt(r.round_rate));
    kv.emplace_back("mean_success_prob", fmt(r.mean_success_prob));
    kv.emplace_back("success_rate_hz", fmt(r.success_rate));
    kv.emplace_back("success_rate_stderr_hz", fmt(r.success_rate_stderr));
  }
  if (o.csv) {
    for (std::size_t i = 0; i < kv.size(); ++i) out << (i ? "," : "") << kv[i].first;
    out << '\n';
    for (std::size_t i = 0; i < kv.size(); ++i) out << (i ? "," : "") << kv[i].second;
    out << '\n';
  } else {
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// enumerate

struct EnumerateOptions {
  std::string path_file;
  bool band_check = true;
  std::string symmetric;  // "L,A,r": symmetrized path instead of a path file
  int max_repeaters = -1;  // -1: as many as fit
};

inline FiberPath enumerate_path(const EnumerateOptions& o) {
  if (o.symmetric.empty()) return open_path(o.path_file, o.band_check);
  if (!o.path_file.empty()) throw UsageError("use either --path-file or --symmetric");
  const auto f = split(o.symmetric, ',');
  if (f.size() != 3) throw UsageError("--symmetric needs L,A,r");
  const double r = parse_number(f[2], "repeater count");
  if (r != std::floor(r) || r < 0) throw UsageError("repeater count must be a non-negative integer");
  try {
    return symmetrized_path(parse_number(f[0], "length"), parse_number(f[1], "attenuation"),
                            static_cast<int>(r));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

inline int cmd_enumerate(const EnumerateOptions& o, std::ostream& out) {
  const FiberPath path = enumerate_path(o);
  const int max_r = o.max_repeaters < 0 ? max_feasible_repeaters(path.num_sites()) : o.max_repeaters;
  const auto table = enumerate_placements(path, max_r);
  Manifest m = start_manifest("enumerate");
  m.set("path_file", o.path_file);
  if (!o.symmetric.empty()) m.set("symmetric", o.symmetric);
  m.set("segments", std::to_string(path.num_segments()));
  m.set("max_repeaters", std::to_string(table.max_repeaters()));
  m.set("truncated", table.truncated ? "true" : "false");
  m.set("placements", std::to_string(table.total()));
  m.write(out);
  out << "r,n,asymmetry,sites\n";
  for (int r = 1; r <= table.max_repeaters(); ++r) {
    const auto& group = table.by_repeaters[static_cast<std::size_t>(r)];
    for (std::size_t n = 0; n < group.size(); ++n) {
      out << r << ',' << n << ',' << fmt(group[n].asymmetry) << ',' << join_sites(group[n].repeater_sites)
          << '\n';
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// min-modes

struct MinModesOptions {
  std::string path_file;  // optional source of total length / attenuation
  bool band_check = true;
  std::optional<double> length;
  std::optional<double> attenuation;
  int repeaters = 0;
  double target = 1.0;
  std::string metric = "skr";
  double z = 1.645;
  std::size_t sims = 100;
  std::uint64_t seed = 1;
  std::int64_t modes_cap = 1'000'000;
  double light_speed = kFiberLightSpeed;
};

inline int cmd_min_modes(const MinModesOptions& o, std::ostream& out) {
  MinModesConfig cfg;
  if (!o.path_file.empty()) {
    const FiberPath path = open_path(o.path_file, o.band_check);
    cfg.total_length = path.total_length();
    cfg.total_attenuation = path.total_attenuation();
  }
  if (o.length) cfg.total_length = *o.length;
  if (o.attenuation) cfg.total_attenuation = *o.attenuation;
  if (!(cfg.total_length > 0.0)) throw UsageError("need --length or --path-file");
  if (!(cfg.total_attenuation >= 0.0)) throw UsageError("attenuation must be >= 0");
  if (o.repeaters < 0) throw UsageError("--repeaters must be >= 0");
  if (o.sims < 2) throw UsageError("--sims must be >= 2");
  if (!(o.target >= 0.0)) throw UsageError("--target must be >= 0");
  try {
    cfg.metric = metric_from_name(o.metric);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.num_repeaters = o.repeaters;
  cfg.target_rate = o.target;
  cfg.z = o.z;
  cfg.sims = o.sims;
  cfg.rng_seed = o.seed;
  cfg.modes_cap = o.modes_cap;
  cfg.light_speed = o.light_speed;

  const auto res = minimal_modes(cfg);
  Manifest m = start_manifest("min-modes");
  m.set("total_length_km", cfg.total_length);
  m.set("total_attenuation_db", cfg.total_attenuation);
  m.set("repeaters", std::to_string(cfg.num_repeaters));
  m.set("target_hz", cfg.target_rate);
  m.set("metric", std::string(metric_name(cfg.metric)));
  m.set("z", cfg.z);
  m.set("sims", std::to_string(cfg.sims));
  m.set("seed", std::to_string(cfg.rng_seed));
  m.set("modes_cap", std::to_string(cfg.modes_cap));
  m.write(out);
  out << "num_modes=" << res.num_modes << '\n';
  out << "rate_hz=" << fmt(res.rate) << '\n';
  out << "rate_stderr_hz=" << fmt(res.rate_stderr) << '\n';
  out << "probes=" << res.evaluations << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// optimize

struct OptimizeOptions {
  std::string path_file;
  bool band_check = true;
  OptimizerConfig config;
  std::string metric = "skr";
  std::string out_prefix = "qrchain_opt";
};

struct RadarRow {
  Param param;
  double value;
  double baseline_value;
  double improvement_factor;
};

inline std::vector<RadarRow> radar_rows(const HardwareParams& hw, const PathContext& ctx) {
  std::vector<RadarRow> rows;
  for (Param p : kAllParams) {
    rows.push_back({p, param_value(hw, p), param_value(kBaseline, p),
                    improvement_factor(p, param_value(hw, p), ctx)});
  }
  return rows;
}

inline void write_radar(std::ostream& out, const HardwareParams& hw, const PathContext& ctx) {
  out << "parameter,value,baseline_value,improvement_factor\n";
  for (const auto& r : radar_rows(hw, ctx)) {
    out << param_name(r.param) << ',' << fmt(r.value) << ',' << fmt(r.baseline_value) << ','
        << fmt(r.improvement_factor) << '\n';
  }
}

inline Manifest optimizer_manifest(const OptimizeOptions& o) {
  const auto& c = o.config;
  Manifest m = start_manifest("optimize");
  m.set("path_file", o.path_file);
  m.set("target", c.target_rate);
  m.set("metric", std::string(metric_name(c.target_metric)));
  m.set("seed", std::to_string(c.rng_seed));
  m.set("population", std::to_string(c.population_size));
  m.set("generations", std::to_string(c.generations));
  m.set("sims_per_eval", std::to_string(c.sims_per_eval));
  m.set("mutation_scale", c.mutation_scale);
  m.set("mutation_prob", c.mutation_prob);
  m.set("crossover_rate", c.crossover_rate);
  m.set("elitism", std::to_string(c.elitism_count));
  m.set("tournament", std::to_string(c.tournament_size));
  m.set("w1", c.weights.w1);
  m.set("w2", c.weights.w2);
  m.set("factor_min", c.factor_min);
  m.set("factor_max", c.factor_max);
  m.set("modes_cap", std::to_string(c.modes_cap));
  m.set("min_repeaters", std::to_string(c.min_repeaters));
  m.set("max_repeaters", std::to_string(c.max_repeaters));
  m.set("cutoff_fraction_min", c.cutoff_fraction_min);
  m.set("cutoff_fraction_max", c.cutoff_fraction_max);
  if (c.fixed_repeaters) m.set("repeaters", std::to_string(*c.fixed_repeaters));
  if (c.fixed_asymmetry) m.set("asymmetry", *c.fixed_asymmetry);
  if (c.fixed_cutoff_fraction) m.set("cutoff_fraction", *c.fixed_cutoff_fraction);
  m.set("local_search_budget", std::to_string(c.local_search_budget));
  m.set("local_search_step", c.local_search_step);
  m.set("light_speed", c.light_speed);
  return m;
}

inline int cmd_optimize(OptimizeOptions o, std::ostream& out) {
  try {
    o.config.target_metric = metric_from_name(o.metric);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(o.config.target_rate >= 0.0)) throw UsageError("--target must be >= 0");
  const FiberPath path = open_path(o.path_file, o.band_check);
  std::optional<HardwareOptimizer> opt;
  try {
    opt.emplace(path, o.config);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("bad optimizer configuration: ") + e.what());
  }

  Manifest m = optimizer_manifest(o);
  const auto wall0 = std::chrono::steady_clock::now();
  const auto ga = opt->genetic_search();
  const Candidate refined = opt->local_search(ga.best);
  auto result = opt->describe(refined);
  result.history = ga.history;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  m.set("wall_clock_s", wall);

  const std::string result_file = o.out_prefix + "_result.txt";
  const std::string history_file = o.out_prefix + "_history.csv";
  const std::string radar_file = o.out_prefix + "_radar.csv";

  Manifest r;
  r.set("params", format_params(result.best.params));
  for (Param p : kAllParams) {
    r.set(std::string("value.") + std::string(param_name(p)), fmt(param_value(result.best.params, p)));
  }
  for (Param p : kAllParams) {
    r.set(std::string("factor.") + std::string(param_name(p)), fmt(result.cost.factor(p)));
  }
  r.set("hardware_cost", result.cost.hardware_cost);
  r.set("penalty", result.cost.penalty);
  r.set("total_cost", result.cost.total_cost);
  r.set("genetic_cost", ga.cost.total_cost);
  r.set("achieved_rate_hz", result.achieved_rate);
  r.set("repeaters", std::to_string(result.best.r));
  r.set("a", result.best.a);
  r.set("placement_rank", std::to_string(result.placement_rank));
  r.set("sites", join_sites(result.placement.repeater_sites));
  r.set("asymmetry", result.placement.asymmetry);
  r.set("cutoff_fraction", result.best.cutoff_fraction);
  r.set("cutoff_time", result.best.cutoff_fraction * result.best.params.coherence_time);
  r.set("evaluations", std::to_string(result.evaluations));

  {
    std::ofstream f(result_file);
    if (!f) throw std::runtime_error("cannot write " + result_file);
    m.write(f);
    for (const auto& [k, v] : r.entries) f << k << '=' << v << '\n';
  }
  {
    std::ofstream f(history_file);
    if (!f) throw std::runtime_error("cannot write " + history_file);
    m.write(f);
    f << "generation,best_total_cost\n";
    for (std::size_t g = 0; g < result.history.size(); ++g) f << g << ',' << fmt(result.history[g]) << '\n';
  }
  {
    std::ofstream f(radar_file);
    if (!f) throw std::runtime_error("cannot write " + radar_file);
    m.write(f);
    write_radar(f, result.best.params, opt->context());
  }
  for (const auto& [k, v] : r.entries) out << k << '=' << v << '\n';
  out << "result_file=" << result_file << '\n';
  out << "history_file=" << history_file << '\n';
  out << "radar_file=" << radar_file << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// argument handling

/// Reads flat "key = value" lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("config file not found: " + file);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(file + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    kv.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

/// Splices the entries of `--config FILE` in front of the remaining flags so that
/// flags given on the command line win (options keep their last value).
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string file;
    std::size_t erase = 0;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      file = args[i + 1];
      erase = 2;
    } else if (args[i].starts_with("--config=")) {
      file = args[i].substr(9);
      erase = 1;
    } else {
      continue;
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + erase));
    std::vector<std::string> spliced;
    for (const auto& [k, v] : read_config_file(file)) spliced.push_back("--" + k + "=" + v);
    // Insert right after the subcommand name (the first non-flag argument).
    std::size_t at = 1;
    while (at < args.size() && args[at].starts_with("-")) ++at;
    at = std::min(at + 1, args.size());
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), spliced.begin(), spliced.end());
    break;
  }
  return args;
}

inline int run(std::vector<std::string> args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Repeater-chain simulation and minimal hardware requirements", "qrchain"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", kVersion);

  std::string config_file;  // handled by expand_config; listed here for --help
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Flat key=value file; command-line flags override it");
  };

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Simulate a repeater chain and dump per-pair records");
  s->add_option("--path-file", sim.path_file, "Fiber path CSV (name_a,name_b,length_km[,attenuation_db])");
  s->add_option("--placement", sim.placement, "direct, r:a or sites:i,j,k")->capture_default_str();
  s->add_option("--params", sim.params, "T,n,F,pdet,sq or baseline / noiseless")->capture_default_str();
  s->add_option("--cutoff", sim.cutoff, "Memory cut-off in seconds (inf: none)")->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--pairs", sim.pairs, "Number of end-to-end pairs")->capture_default_str();
  s->add_option("--light-speed", sim.light_speed, "km/s")->capture_default_str();
  s->add_option("--out", sim.out, "Write the record dump here instead of stdout");
  bool sim_no_band = false;
  s->add_flag("--no-band-check", sim_no_band, "Accept attenuation outside 0.1-0.5 dB/km");
  add_config(s);

  MetricsOptions met;
  auto* mt = app.add_subcommand("metrics", "Secret-key or BQC success rate from a record dump");
  mt->add_option("records", met.records, "Record dump ('-' for stdin)")->capture_default_str();
  mt->add_option("--metric", met.metric, "skr or bqc")->capture_default_str();
  double met_T = 0.0;
  auto* met_T_opt = mt->add_option("--coherence-time", met_T, "Seconds; default from the dump manifest");
  mt->add_flag("--csv", met.csv, "Emit a CSV header and row");
  add_config(mt);

  EnumerateOptions en;
  auto* e = app.add_subcommand("enumerate", "List repeater placements on a fiber path");
  e->add_option("--path-file", en.path_file);
  e->add_option("--symmetric", en.symmetric, "L,A,r: equidistant path instead of a file");
  e->add_option("--max-repeaters", en.max_repeaters, "-1: as many as fit")->capture_default_str();
  bool en_no_band = false;
  e->add_flag("--no-band-check", en_no_band);
  add_config(e);

  MinModesOptions mm;
  auto* mmc = app.add_subcommand("min-modes", "Fewest multiplexing modes reaching a target with ideal hardware");
  mmc->add_option("--path-file", mm.path_file, "Take total length and attenuation from this path");
  double mm_len = 0.0, mm_att = 0.0;
  auto* mm_len_opt = mmc->add_option("--length", mm_len, "Total length, km");
  auto* mm_att_opt = mmc->add_option("--attenuation", mm_att, "Total attenuation, dB");
  mmc->add_option("--repeaters", mm.repeaters)->capture_default_str();
  mmc->add_option("--target", mm.target, "Hz")->capture_default_str();
  mmc->add_option("--metric", mm.metric)->capture_default_str();
  mmc->add_option("--z", mm.z, "Required rate is met when rate - z*stderr >= target")->capture_default_str();
  mmc->add_option("--sims", mm.sims, "Pairs simulated per probe")->capture_default_str();
  mmc->add_option("--seed", mm.seed)->capture_default_str();
  mmc->add_option("--modes-cap", mm.modes_cap)->capture_default_str();
  mmc->add_option("--light-speed", mm.light_speed)->capture_default_str();
  bool mm_no_band = false;
  mmc->add_flag("--no-band-check", mm_no_band);
  add_config(mmc);

  OptimizeOptions op;
  auto& oc = op.config;
  auto* o = app.add_subcommand("optimize", "Genetic search plus local refinement of minimal hardware");
  o->add_option("--path-file", op.path_file);
  o->add_option("--target", oc.target_rate, "Hz")->capture_default_str();
  o->add_option("--metric", op.metric)->capture_default_str();
  o->add_option("--seed", oc.rng_seed)->capture_default_str();
  o->add_option("--population", oc.population_size)->capture_default_str();
  o->add_option("--generations", oc.generations)->capture_default_str();
  o->add_option("--sims-per-eval", oc.sims_per_eval)->capture_default_str();
  o->add_option("--mutation-scale", oc.mutation_scale)->capture_default_str();
  o->add_option("--mutation-prob", oc.mutation_prob)->capture_default_str();
  o->add_option("--crossover-rate", oc.crossover_rate)->capture_default_str();
  o->add_option("--elitism", oc.elitism_count)->capture_default_str();
  o->add_option("--tournament", oc.tournament_size)->capture_default_str();
  o->add_option("--threads", oc.threads, "0: all cores")->capture_default_str();
  o->add_option("--w1", oc.weights.w1)->capture_default_str();
  o->add_option("--w2", oc.weights.w2)->capture_default_str();
  o->add_option("--factor-min", oc.factor_min)->capture_default_str();
  o->add_option("--factor-max", oc.factor_max)->capture_default_str();
  o->add_option("--modes-cap", oc.modes_cap)->capture_default_str();
  o->add_option("--min-repeaters", oc.min_repeaters)->capture_default_str();
  o->add_option("--max-repeaters", oc.max_repeaters, "-1: as many as fit")->capture_default_str();
  o->add_option("--cutoff-fraction-min", oc.cutoff_fraction_min)->capture_default_str();
  o->add_option("--cutoff-fraction-max", oc.cutoff_fraction_max)->capture_default_str();
  int fixed_r = 0;
  double fixed_a = 0.0, fixed_cut = 1.0;
  auto* fixed_r_opt = o->add_option("--repeaters", fixed_r, "Pin the repeater count");
  auto* fixed_a_opt = o->add_option("--asymmetry", fixed_a, "Pin the asymmetry parameter a");
  auto* fixed_cut_opt = o->add_option("--cutoff-fraction", fixed_cut, "Pin the cut-off (fraction of T)");
  o->add_option("--local-search-budget", oc.local_search_budget)->capture_default_str();
  o->add_option("--local-search-step", oc.local_search_step)->capture_default_str();
  o->add_option("--light-speed", oc.light_speed)->capture_default_str();
  o->add_option("--out-prefix", op.out_prefix, "Prefix of the result, history and radar files")
      ->capture_default_str();
  bool op_no_band = false;
  o->add_flag("--no-band-check", op_no_band);
  add_config(o);

  try {
    args = expand_config(std::move(args));
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  }

  try {
    if (*s) {
      sim.band_check = !sim_no_band;
      return cmd_simulate(sim, out);
    }
    if (*mt) {
      if (met_T_opt->count()) met.coherence_time = met_T;
      return cmd_metrics(met, in, out);
    }
    if (*e) {
      en.band_check = !en_no_band;
      return cmd_enumerate(en, out);
    }
    if (*mmc) {
      mm.band_check = !mm_no_band;
      if (mm_len_opt->count()) mm.length = mm_len;
      if (mm_att_opt->count()) mm.attenuation = mm_att;
      return cmd_min_modes(mm, out);
    }
    if (*o) {
      op.band_check = !op_no_band;
      if (fixed_r_opt->count()) oc.fixed_repeaters = fixed_r;
      if (fixed_a_opt->count()) oc.fixed_asymmetry = fixed_a;
      if (fixed_cut_opt->count()) oc.fixed_cutoff_fraction = fixed_cut;
      return cmd_optimize(op, out);
    }
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

inline int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cin, std::cout, std::cerr);
}

}  // namespace qrchain::cli

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rotsync/rotsync.hpp"

namespace rotsync::cli {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity from ROTSYNC_LOG: error, warn, info (default) or debug, or 0-3.
inline LogLevel log_level_from_env() {
  const char* env = std::getenv("ROTSYNC_LOG");
  if (!env) return LogLevel::info;
  const std::string v = env;
  if (v == "error" || v == "0" || v == "quiet") return LogLevel::error;
  if (v == "warn" || v == "warning" || v == "1") return LogLevel::warn;
  if (v == "debug" || v == "3") return LogLevel::debug;
  return LogLevel::info;
}

class Log {
 public:
  explicit Log(LogLevel level = log_level_from_env(), std::ostream& out = std::cerr)
      : level_(level), out_(&out) {}

  void error(const std::string& msg) const { emit(LogLevel::error, "error", msg); }
  void warn(const std::string& msg) const { emit(LogLevel::warn, "warning", msg); }
  void info(const std::string& msg) const { emit(LogLevel::info, "info", msg); }
  void debug(const std::string& msg) const { emit(LogLevel::debug, "debug", msg); }
  bool enabled(LogLevel l) const { return l <= level_; }

 private:
  void emit(LogLevel l, const char* tag, const std::string& msg) const {
    if (enabled(l)) *out_ << "[" << tag << "] " << msg << '\n';
  }
  LogLevel level_;
  std::ostream* out_;
};

enum class Source { fallback, config, flag };

inline const char* source_name(Source s) {
  switch (s) {
    case Source::fallback: return "default";
    case Source::config: return "config";
    case Source::flag: return "flag";
  }
  return "?";
}

/// Flat key/value settings. Keys are the field names of SolverConfig,
/// DenoiseConfig and SyntheticSpec plus a few pipeline switches. Later
/// sources override earlier ones only when they rank at least as high:
/// flags beat the config file, which beats the built-in defaults.
class Settings {
 public:
  Settings() {
    const SolverConfig sc;
    const DenoiseConfig dc;
    const SyntheticSpec ss;
    auto def = [&](const std::string& k, std::string v) { values_[k] = {std::move(v), Source::fallback}; };
    def("alpha", format_double(sc.alpha));
    def("max_iters", std::to_string(sc.max_iters));
    def("init_mode", "tree");
    def("use_denoise_weights", "auto");
    def("tau_schedule", "reciprocal");
    def("tau0", format_double(sc.tau0));
    def("gauge_node", std::to_string(sc.gauge_node));
    def("step_tolerance", format_double(sc.step_tolerance));
    def("smoothing_start", format_double(sc.smoothing_start));
    def("smoothing_decay", format_double(sc.smoothing_decay));
    def("smoothing_min", format_double(sc.smoothing_min));
    def("threads", "1");
    def("cost", "exp");
    def("huber_delta", "0.1");
    def("denoise", "true");
    def("epsilon", format_double(dc.epsilon));
    def("sample_rounds_scale", format_double(dc.sample_rounds_scale));
    def("inner_iters", std::to_string(dc.inner_iters));
    def("min_weight", format_double(dc.min_weight));
    def("max_cycle_len", "0");
    def("n", std::to_string(ss.n));
    def("edge_density", format_double(ss.edge_density));
    def("outlier_fraction", format_double(ss.outlier_fraction));
    def("outlier_angle", format_double(ss.outlier_angle));
    def("uniform_outlier_angle", "false");
    def("inlier_sigma", format_double(ss.inlier_sigma));
    def("seed", "0");
    def("levels", "0.1,0.2,0.3,0.4");
    def("methods", "denoise+exp,none+exp,none+l2");
    def("repeats", "10");
  }

  bool known(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value, Source source) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown setting '" + key + "'");
    if (source >= it->second.source) it->second = {value, source};
  }

  /// Parses "key = value" lines; '#' starts a comment.
  void load(std::istream& in, const std::string& name) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(body.substr(0, eq));
      if (!known(key))
        throw ConfigError(name + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      set(key, trim(body.substr(eq + 1)), Source::config);
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    load(in, path);
  }

  /// Applies "key=value".
  void assign(const std::string& kv, Source source) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), source);
  }

  const std::string& text(const std::string& key) const { return entry(key).value; }
  Source source(const std::string& key) const { return entry(key).source; }

  double real(const std::string& key) const {
    const std::string& v = text(key);
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
  }

  std::uint64_t count(const std::string& key) const {
    const std::string& v = text(key);
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
  }

  bool flag(const std::string& key) const {
    const std::string& v = text(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
  }

  void echo(const Log& log) const {
    for (const auto& [k, e] : values_)
      log.info("  " + k + " = " + e.value + " (" + source_name(e.source) + ")");
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, e] : values_) out[k] = e.value;
    return out;
  }

 private:
  struct Entry {
    std::string value;
    Source source = Source::fallback;
  };

  const Entry& entry(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown setting '" + key + "'");
    return it->second;
  }

  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

  std::map<std::string, Entry> values_;
};

inline std::uint64_t seed_of(const Settings& s) { return s.count("seed"); }

inline unsigned threads_of(const Settings& s) { return static_cast<unsigned>(s.count("threads")); }

inline CostFunction cost_of(const Settings& s) {
  const std::string name = s.text("cost");
  if (name == "huber" && !(s.real("huber_delta") > 0.0))
    throw ConfigError("huber_delta: must be > 0");
  try {
    return CostFunction::from_name(name, name == "huber" ? s.real("huber_delta") : 0.0);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("cost: ") + e.what());
  }
}

/// `denoise_on` picks the default for use_denoise_weights when it is "auto".
inline SolverConfig solver_config_of(const Settings& s, bool denoise_on) {
  SolverConfig c;
  c.alpha = s.real("alpha");
  const auto iters = s.count("max_iters");
  if (iters > 1000000) throw ConfigError("max_iters: too large");
  c.max_iters = static_cast<int>(iters);
  const std::string init = s.text("init_mode");
  if (init == "identity") {
    c.init_mode = InitMode::identity;
  } else if (init == "tree" || init == "spanning_tree") {
    c.init_mode = InitMode::spanning_tree;
  } else {
    throw ConfigError("init_mode: expected identity or tree, got '" + init + "'");
  }
  c.use_denoise_weights = s.text("use_denoise_weights") == "auto" ? denoise_on
                                                                   : s.flag("use_denoise_weights");
  const std::string sched = s.text("tau_schedule");
  if (sched == "reciprocal") {
    c.tau_schedule = TauSchedule::reciprocal;
  } else if (sched == "constant") {
    c.tau_schedule = TauSchedule::constant;
  } else {
    throw ConfigError("tau_schedule: expected reciprocal or constant, got '" + sched + "'");
  }
  c.tau0 = s.real("tau0");
  c.gauge_node = s.count("gauge_node");
  c.step_tolerance = s.real("step_tolerance");
  c.smoothing_start = s.real("smoothing_start");
  c.smoothing_decay = s.real("smoothing_decay");
  c.smoothing_min = s.real("smoothing_min");
  c.threads = threads_of(s);
  c.validate();
  return c;
}

inline DenoiseConfig denoise_config_of(const Settings& s) {
  DenoiseConfig c;
  c.epsilon = s.real("epsilon");
  c.sample_rounds_scale = s.real("sample_rounds_scale");
  const auto inner = s.count("inner_iters");
  if (inner > 1000000) throw ConfigError("inner_iters: too large");
  c.inner_iters = static_cast<int>(inner);
  c.min_weight = s.real("min_weight");
  const auto len = s.count("max_cycle_len");
  if (len > 0) c.max_cycle_len = len;
  c.seed = seed_of(s);
  c.threads = threads_of(s);
  c.validate();
  return c;
}

/// The single pipeline a `solve` run executes, named like ablation methods.
inline MethodSpec method_of(const Settings& s) {
  MethodSpec m;
  m.denoise = s.flag("denoise");
  m.cost = cost_of(s);
  m.name = std::string(m.denoise ? "denoise" : "none") + "+" + m.cost.name();
  m.solver = solver_config_of(s, m.denoise);
  m.denoiser = denoise_config_of(s);
  return m;
}

inline SyntheticSpec synthetic_spec_of(const Settings& s) {
  SyntheticSpec spec;
  spec.n = s.count("n");
  spec.edge_density = s.real("edge_density");
  spec.outlier_fraction = s.real("outlier_fraction");
  spec.outlier_angle = s.real("outlier_angle");
  spec.uniform_outlier_angle = s.flag("uniform_outlier_angle");
  spec.inlier_sigma = s.real("inlier_sigma");
  spec.seed = seed_of(s);
  spec.validate();
  return spec;
}

inline std::vector<double> levels_of(const Settings& s) {
  std::vector<double> out;
  for (const auto& item : s.list("levels")) {
    double v = 0.0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size())
      throw ConfigError("levels: expected numbers, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

/// Ablation methods by name, sharing every solver and denoiser setting.
inline std::vector<MethodSpec> methods_of(const Settings& s) {
  std::vector<MethodSpec> out;
  for (const auto& name : s.list("methods")) {
    MethodSpec m;
    try {
      m = method_from_name(name);
    } catch (const Error& e) {
      throw ConfigError(std::string("methods: ") + e.what());
    }
    if (m.cost.kind() == CostKind::huber) {
      const double delta = s.real("huber_delta");
      if (!(delta > 0.0)) throw ConfigError("huber_delta: must be > 0");
      m.cost = CostFunction::huber(delta);
    }
    m.solver = solver_config_of(s, m.denoise);
    m.denoiser = denoise_config_of(s);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace rotsync::cli

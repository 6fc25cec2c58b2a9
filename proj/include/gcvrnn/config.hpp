#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gcvrnn/data.hpp"
#include "gcvrnn/model_config.hpp"
#include "gcvrnn/optim.hpp"

namespace gcvrnn {

// Run configuration file: one `key=value` per line, `#` starts a comment,
// blank lines are ignored. Every ModelConfig key is accepted alongside the
// run keys below; unknown and repeated keys are rejected.
//
//   scenarios=circle:3,5,7;camera:10,20,30
//   baselines=mean,median,linear_fit

struct RunConfig {
  ModelConfig model;

  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double lr_decay = 0.9;
  std::size_t lr_decay_interval = 20;
  std::size_t checkpoint_interval = 20;

  std::size_t agents = 10;
  std::size_t train_sequences = 2000;
  std::size_t test_sequences = 400;
  std::vector<MaskingSpec> scenarios = default_scenarios();
  Vec2 camera{0.0, -35.0};
  std::string units = "ft";
  DynamicsParams dynamics;

  std::string data_dir = "data";
  std::string dataset;  // file used by train/eval when no input is given
  std::string out_dir = "out";
  std::vector<std::string> baselines = {"linear_fit", "mean", "median"};

  static std::vector<MaskingSpec> default_scenarios() {
    std::vector<MaskingSpec> out;
    for (double r : {3.0, 5.0, 7.0}) out.push_back(MaskingSpec{MaskMode::circle, r});
    for (double a : {10.0, 20.0, 30.0}) out.push_back(MaskingSpec{MaskMode::camera, a});
    return out;
  }

  AdamOptions adam_options() const {
    AdamOptions o;
    o.learning_rate = learning_rate;
    o.decay_factor = lr_decay;
    o.decay_interval = lr_decay_interval;
    return o;
  }

  void validate() const {
    model.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (checkpoint_interval == 0) throw ConfigError("checkpoint_interval must be positive");
    if (lr_decay_interval == 0) throw ConfigError("lr_decay_interval must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (agents == 0) throw ConfigError("agents must be positive");
    for (const auto& s : scenarios) s.validate();
    for (const auto& b : baselines) {
      if (b != "mean" && b != "median" && b != "linear_fit") throw ConfigError("unknown baseline '" + b + "'");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

inline std::vector<MaskingSpec> parse_scenarios(const std::string& v, Vec2 camera) {
  std::vector<MaskingSpec> out;
  for (const auto& group : split(v, ';')) {
    const auto colon = group.find(':');
    if (colon == std::string::npos) throw ConfigError("scenario group '" + group + "' lacks ':'");
    const MaskMode mode = parse_mask_mode(trim(group.substr(0, colon)));
    for (const auto& p : split(group.substr(colon + 1), ',')) {
      MaskingSpec s{mode, parse_double("scenarios", p)};
      s.camera = camera;
      out.push_back(s);
    }
  }
  return out;
}

inline std::string format_scenarios(const std::vector<MaskingSpec>& specs) {
  std::string out;
  for (MaskMode mode : {MaskMode::circle, MaskMode::camera}) {
    std::string params;
    for (const auto& s : specs) {
      if (s.mode != mode) continue;
      params += (params.empty() ? "" : ",") + format_double(s.parameter);
    }
    if (params.empty()) continue;
    out += (out.empty() ? "" : ";") + to_string(mode) + ":" + params;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : std::string(1, sep)) + s;
  return out;
}

}  // namespace detail

inline const std::vector<FieldBinding<RunConfig>>& run_config_fields() {
  using C = RunConfig;
  auto path = [](const char* key, std::string C::*m) {
    return FieldBinding<C>{key, [m](const C& c) { return c.*m; }, [m](C& c, const std::string& v) { c.*m = v; }};
  };
  auto dyn = [](const char* key, double DynamicsParams::*m) {
    return FieldBinding<C>{key, [m](const C& c) { return detail::format_double(c.dynamics.*m); },
                           [m, key](C& c, const std::string& v) { c.dynamics.*m = detail::parse_double(key, v); }};
  };
  static const std::vector<FieldBinding<C>> fields = {
      GCVRNN_SIZE_FIELD(C, epochs),
      GCVRNN_SIZE_FIELD(C, batch_size),
      GCVRNN_DOUBLE_FIELD(C, learning_rate),
      GCVRNN_DOUBLE_FIELD(C, lr_decay),
      GCVRNN_SIZE_FIELD(C, lr_decay_interval),
      GCVRNN_SIZE_FIELD(C, checkpoint_interval),
      GCVRNN_SIZE_FIELD(C, agents),
      GCVRNN_SIZE_FIELD(C, train_sequences),
      GCVRNN_SIZE_FIELD(C, test_sequences),
      FieldBinding<C>{"scenarios", [](const C& c) { return detail::format_scenarios(c.scenarios); },
                      [](C& c, const std::string& v) { c.scenarios = detail::parse_scenarios(v, c.camera); }},
      FieldBinding<C>{"camera_x", [](const C& c) { return detail::format_double(c.camera.x); },
                      [](C& c, const std::string& v) { c.camera.x = detail::parse_double("camera_x", v); }},
      FieldBinding<C>{"camera_y", [](const C& c) { return detail::format_double(c.camera.y); },
                      [](C& c, const std::string& v) { c.camera.y = detail::parse_double("camera_y", v); }},
      path("units", &C::units),
      path("data_dir", &C::data_dir),
      path("dataset", &C::dataset),
      path("out_dir", &C::out_dir),
      FieldBinding<C>{"baselines", [](const C& c) { return detail::join(c.baselines, ','); },
                      [](C& c, const std::string& v) { c.baselines = detail::split(v, ','); }},
      dyn("dyn_field_half", &DynamicsParams::field_half),
      dyn("dyn_v_max", &DynamicsParams::v_max),
      dyn("dyn_ref_speed", &DynamicsParams::ref_speed),
      dyn("dyn_ref_waypoint_margin", &DynamicsParams::ref_waypoint_margin),
      dyn("dyn_attraction", &DynamicsParams::attraction),
      dyn("dyn_damping", &DynamicsParams::damping),
      dyn("dyn_repulsion", &DynamicsParams::repulsion),
      dyn("dyn_repulsion_range", &DynamicsParams::repulsion_range),
      dyn("dyn_formation_min", &DynamicsParams::formation_min),
      dyn("dyn_formation_max", &DynamicsParams::formation_max),
      dyn("dyn_orbit_rate", &DynamicsParams::orbit_rate),
      dyn("dyn_noise", &DynamicsParams::noise),
      dyn("dyn_wall", &DynamicsParams::wall),
  };
  return fields;
}

inline void set_run_field(RunConfig& c, const std::string& key, const std::string& value) {
  if (set_model_field(c.model, key, value)) return;
  for (const auto& f : run_config_fields()) {
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Parses config text. Camera keys apply to every scenario regardless of order.
inline RunConfig parse_run_config(const std::string& text, const std::string& what = "config") {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string at = what + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(at + ": expected key=value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(at + ": duplicate key '" + key + "'");
    try {
      set_run_field(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(at + ": " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(at + ": " + e.what());
    }
  }
  for (auto& s : c.scenarios) s.camera = c.camera;
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

/// Full key=value listing; parse_run_config(to_text(c)) reproduces c.
inline std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& [k, v] : to_key_values(c.model)) os << k << '=' << v << '\n';
  for (const auto& f : run_config_fields()) os << f.key << '=' << f.get(c) << '\n';
  return os.str();
}

}  // namespace gcvrnn

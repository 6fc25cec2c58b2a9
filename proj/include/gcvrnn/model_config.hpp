#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gcvrnn/tensor.hpp"

namespace gcvrnn {

enum class TrainingMode { joint, impute_only, predict_only };

inline std::string to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::joint: return "joint";
    case TrainingMode::impute_only: return "impute-only";
    case TrainingMode::predict_only: return "predict-only";
  }
  return "joint";
}

inline TrainingMode parse_training_mode(const std::string& s) {
  if (s == "joint") return TrainingMode::joint;
  if (s == "impute-only") return TrainingMode::impute_only;
  if (s == "predict-only") return TrainingMode::predict_only;
  throw ConfigError("unknown mode '" + s + "' (expected joint|impute-only|predict-only)");
}

/// Architecture, ablation switches and loss weights of the model.
struct ModelConfig {
  // dimensions
  std::size_t d_node = 16;      // node feature D
  std::size_t d_graph = 16;     // fused graph feature D_G
  std::size_t hidden = 256;     // recurrent state H
  std::size_t latent = 64;      // Z
  std::size_t mlp_hidden = 128; // hidden width of prior/posterior/decoder MLPs
  std::size_t z_feature = 64;   // width of the latent feature extractors
  std::size_t st_layers = 3;
  std::size_t ec_hidden = 16;
  std::size_t ec_channels = 2;
  std::size_t n_max = 16;       // capacity of the learnable adjacency

  std::size_t t_past = 40;
  std::size_t t_future = 10;

  // ablations
  bool use_st = true;
  bool use_dl = true;
  bool use_ec = true;
  bool use_td = true;
  bool share_streams = true;
  TrainingMode mode = TrainingMode::joint;

  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;

  // Alternatives for ambiguous details; defaults follow the published formulas.
  bool lag_uses_previous_mask = false;
  bool literal_normalization = false;
  bool impute_feedback = false;

  double coord_scale = 0.1;  // scene units -> network units
  double logvar_clamp = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!use_st && !use_dl && !use_ec) throw ConfigError("at least one of use_st/use_dl/use_ec must be enabled");
    if (mode == TrainingMode::joint && (t_past == 0 || t_future == 0)) {
      throw ConfigError("joint mode requires t_past > 0 and t_future > 0");
    }
    if (mode == TrainingMode::predict_only && (t_past == 0 || t_future == 0)) {
      throw ConfigError("predict-only mode requires t_past > 0 and t_future > 0");
    }
    if (mode == TrainingMode::impute_only && t_past == 0) throw ConfigError("impute-only mode requires t_past > 0");
    if (d_node == 0 || d_graph == 0 || hidden == 0 || latent == 0 || mlp_hidden == 0 || z_feature == 0 ||
        st_layers == 0 || ec_hidden == 0 || ec_channels == 0 || n_max == 0) {
      throw ConfigError("model dimensions must be positive");
    }
    if (!(coord_scale > 0.0)) throw ConfigError("coord_scale must be positive");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("bad number for " + key + ": '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("bad integer for " + key + ": '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("bad boolean for " + key + ": '" + s + "'");
}

}  // namespace detail

/// Binds a config key to a struct field for text round-tripping.
template <class Config>
struct FieldBinding {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

#define GCVRNN_SIZE_FIELD(T, name)                                                         \
  FieldBinding<T> {                                                                        \
    #name, [](const T& c) { return std::to_string(c.name); },                             \
        [](T& c, const std::string& v) { c.name = detail::parse_uint(#name, v); }          \
  }
#define GCVRNN_BOOL_FIELD(T, name)                                                         \
  FieldBinding<T> {                                                                        \
    #name, [](const T& c) { return std::string(c.name ? "true" : "false"); },             \
        [](T& c, const std::string& v) { c.name = detail::parse_bool(#name, v); }          \
  }
#define GCVRNN_DOUBLE_FIELD(T, name)                                                       \
  FieldBinding<T> {                                                                        \
    #name, [](const T& c) { return detail::format_double(c.name); },                      \
        [](T& c, const std::string& v) { c.name = detail::parse_double(#name, v); }        \
  }

inline const std::vector<FieldBinding<ModelConfig>>& model_config_fields() {
  using C = ModelConfig;
  static const std::vector<FieldBinding<C>> fields = {
      GCVRNN_SIZE_FIELD(C, d_node),
      GCVRNN_SIZE_FIELD(C, d_graph),
      GCVRNN_SIZE_FIELD(C, hidden),
      GCVRNN_SIZE_FIELD(C, latent),
      GCVRNN_SIZE_FIELD(C, mlp_hidden),
      GCVRNN_SIZE_FIELD(C, z_feature),
      GCVRNN_SIZE_FIELD(C, st_layers),
      GCVRNN_SIZE_FIELD(C, ec_hidden),
      GCVRNN_SIZE_FIELD(C, ec_channels),
      GCVRNN_SIZE_FIELD(C, n_max),
      GCVRNN_SIZE_FIELD(C, t_past),
      GCVRNN_SIZE_FIELD(C, t_future),
      GCVRNN_BOOL_FIELD(C, use_st),
      GCVRNN_BOOL_FIELD(C, use_dl),
      GCVRNN_BOOL_FIELD(C, use_ec),
      GCVRNN_BOOL_FIELD(C, use_td),
      GCVRNN_BOOL_FIELD(C, share_streams),
      FieldBinding<C>{"mode", [](const C& c) { return to_string(c.mode); },
                      [](C& c, const std::string& v) { c.mode = parse_training_mode(v); }},
      GCVRNN_DOUBLE_FIELD(C, lambda1),
      GCVRNN_DOUBLE_FIELD(C, lambda2),
      GCVRNN_DOUBLE_FIELD(C, lambda3),
      GCVRNN_BOOL_FIELD(C, lag_uses_previous_mask),
      GCVRNN_BOOL_FIELD(C, literal_normalization),
      GCVRNN_BOOL_FIELD(C, impute_feedback),
      GCVRNN_DOUBLE_FIELD(C, coord_scale),
      GCVRNN_DOUBLE_FIELD(C, logvar_clamp),
      GCVRNN_SIZE_FIELD(C, seed),
  };
  return fields;
}

inline std::map<std::string, std::string> to_key_values(const ModelConfig& c) {
  std::map<std::string, std::string> kv;
  for (const auto& f : model_config_fields()) kv[f.key] = f.get(c);
  return kv;
}

/// Sets one field; returns false if the key is not a model key.
inline bool set_model_field(ModelConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : model_config_fields()) {
    if (f.key == key) {
      f.set(c, value);
      return true;
    }
  }
  return false;
}

}  // namespace gcvrnn

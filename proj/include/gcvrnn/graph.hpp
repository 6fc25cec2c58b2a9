#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gcvrnn/autodiff.hpp"
#include "gcvrnn/layers.hpp"
#include "gcvrnn/model_config.hpp"

namespace gcvrnn {

// Multi-space graph encoder. All tensors below are "stacked": a batch of B
// scenes with N agents each is laid out as B*N consecutive rows, and the graph
// operators act block-diagonally on groups of N rows.

enum class Phase { past, future };

/// Visibility adjacency A_st and self-loop mask I_st for one scene.
struct StaticAdjacency {
  Tensor adjacency;   // N x N, a_ij = 1 iff i != j and both visible
  Tensor self_loops;  // N x N diagonal, I_ii = m_i
};

inline void require_binary(std::span<const double> mask) {
  for (double m : mask) {
    if (m != 0.0 && m != 1.0) throw DataError("mask entries must be 0 or 1");
  }
}

inline StaticAdjacency build_static_adjacency(std::span<const double> mask) {
  require_binary(mask);
  const std::size_t n = mask.size();
  StaticAdjacency s{Tensor::zeros(n, n), Tensor::zeros(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    s.self_loops(i, i) = mask[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && mask[i] == 1.0 && mask[j] == 1.0) s.adjacency(i, j) = 1.0;
    }
  }
  return s;
}

/// D^-1/2 (A + I) D^-1/2, or the printed D^-1/2 (A + I) D^1/2 when `literal`.
/// Degrees below one are clamped to one so invisible nodes keep zero rows.
inline Tensor normalize_static(const StaticAdjacency& adj, bool literal = false) {
  const std::size_t n = adj.adjacency.rows();
  Tensor out = Tensor::zeros(n, n);
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += adj.adjacency(i, j) + adj.self_loops(i, j);
  for (auto& d : deg) d = std::max(d, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adj.adjacency(i, j) + adj.self_loops(i, j);
      if (a == 0.0) continue;
      out(i, j) = literal ? a * std::sqrt(deg[j]) / std::sqrt(deg[i]) : a / std::sqrt(deg[i] * deg[j]);
    }
  }
  return out;
}

enum class EdgeCategory : std::uint8_t { both_visible = 0, one_visible = 1, both_invisible = 2 };
inline constexpr std::size_t kEdgeCategories = 3;

/// Undirected visibility category for every ordered pair of one scene.
struct EdgeCategoryField {
  std::size_t n = 0;
  std::vector<EdgeCategory> categories;  // row-major n x n

  EdgeCategory at(std::size_t i, std::size_t j) const { return categories[i * n + j]; }

  std::array<double, kEdgeCategories> one_hot(std::size_t i, std::size_t j) const {
    std::array<double, kEdgeCategories> v{};
    v[static_cast<std::size_t>(at(i, j))] = 1.0;
    return v;
  }
};

inline EdgeCategoryField edge_categories(std::span<const double> mask) {
  require_binary(mask);
  EdgeCategoryField f;
  f.n = mask.size();
  f.categories.resize(f.n * f.n);
  for (std::size_t i = 0; i < f.n; ++i) {
    for (std::size_t j = 0; j < f.n; ++j) {
      const double s = mask[i] + mask[j];
      f.categories[i * f.n + j] =
          s == 2.0 ? EdgeCategory::both_visible : (s == 0.0 ? EdgeCategory::both_invisible : EdgeCategory::one_visible);
    }
  }
  return f;
}

/// (x * m) ++ m for each row of coords [R,2] and mask [R,1].
inline Tensor embedding_input(const Tensor& coords, const Tensor& mask) {
  if (coords.cols() != 2 || mask.cols() != 1 || coords.rows() != mask.rows()) {
    throw DimensionError("embedding_input: shape mismatch " + shape_string(coords.shape()) + " vs " +
                         shape_string(mask.shape()));
  }
  if (!coords.all_finite()) throw DataError("embedding_input: non-finite coordinate");
  Tensor out = Tensor::zeros(coords.rows(), 3);
  for (std::size_t i = 0; i < coords.rows(); ++i) {
    const double m = mask[i];
    out(i, 0) = coords(i, 0) * m;
    out(i, 1) = coords(i, 1) * m;
    out(i, 2) = m;
  }
  return out;
}

// ---- single GCL families -------------------------------------------------

/// relu(Â F W) with Â stacked per scene ([B*N, N]) or shared ([N, N]).
inline Var st_gcl(const Var& features, const Var& adj_norm, const Var& weight, std::size_t group) {
  return relu(group_matmul(adj_norm, matmul(features, weight), group));
}

/// relu(A_dl F W); A_dl is a single N x N block shared by every scene.
inline Var dl_gcl(const Var& features, const Var& adj, const Var& weight, std::size_t group) {
  return relu(group_matmul(adj, matmul(features, weight), group));
}

/// Per-category neighbour indicators, each stacked [B*N, N].
inline std::array<Tensor, kEdgeCategories> category_indicators(const std::vector<EdgeCategoryField>& fields) {
  const std::size_t n = fields.empty() ? 0 : fields[0].n;
  std::array<Tensor, kEdgeCategories> ind;
  for (auto& t : ind) t = Tensor::zeros(fields.size() * n, n);
  for (std::size_t b = 0; b < fields.size(); ++b) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ind[static_cast<std::size_t>(fields[b].at(i, j))](b * n + i, j) = 1.0;
  }
  return ind;
}

/// f_i = 1/N sum_j Θ_{c(i,j)} f_j + b. Because Θ depends on the pair only
/// through its category, the sum is grouped per category:
/// F_ec = 1/N sum_c (E_c F) Θ_c^T + b.
/// `thetas[c]` is D_G x D; the neighbourhood of a node is every node of its scene.
inline Var ec_gcl(const Var& features, const std::array<Var, kEdgeCategories>& thetas, const Var& bias,
                  const std::array<Tensor, kEdgeCategories>& indicators, std::size_t group) {
  Tape& tape = features.tape();
  std::optional<Var> acc;
  for (std::size_t c = 0; c < kEdgeCategories; ++c) {
    Var pooled = group_matmul(tape.constant(indicators[c]), features, group);
    Var term = matmul(pooled, transpose(thetas[c]));
    acc = acc ? add(*acc, term) : term;
  }
  return add_row(scale(*acc, 1.0 / static_cast<double>(group)), bias);
}

/// Weighted sum of the enabled branches; absent branches contribute nothing.
inline Var fuse(const std::optional<Var>& st, const std::optional<Var>& dl, const std::optional<Var>& ec,
                const Var& alpha, const Var& beta, const Var& gamma) {
  std::optional<Var> out;
  auto accumulate = [&](const std::optional<Var>& branch, const Var& w) {
    if (!branch) return;
    Var term = mul_row(*branch, w);
    if (out) {
      if (!same_matrix_shape(out->value(), term.value())) {
        throw DimensionError("fuse: shape mismatch " + shape_string(out->value().shape()) + " vs " +
                             shape_string(term.value().shape()));
      }
      out = add(*out, term);
    } else {
      out = term;
    }
  };
  accumulate(st, alpha);
  accumulate(dl, beta);
  accumulate(ec, gamma);
  if (!out) throw ConfigError("fuse: no graph branch enabled");
  return *out;
}

struct BranchFlags {
  bool st = true;
  bool dl = true;
  bool ec = true;
};

/// Parameters and forward pass of the multi-space encoder.
class MsGnn {
 public:
  MsGnn() = default;

  MsGnn(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) : d_node_(cfg.d_node), d_graph_(cfg.d_graph) {
    embed_past_ = Mlp2::create(store, "msgnn.embed_past", 3, cfg.d_node, cfg.d_node, rng);
    embed_future_ = Mlp2::create(store, "msgnn.embed_future", 2, cfg.d_node, cfg.d_node, rng);
    for (std::size_t l = 0; l < cfg.st_layers; ++l) {
      const std::size_t out = l + 1 == cfg.st_layers ? cfg.d_graph : cfg.d_node;
      st_.push_back(&store.add("msgnn.st.layer" + std::to_string(l) + ".W", glorot_uniform(cfg.d_node, out, rng)));
    }
    dl_weight_ = &store.add("msgnn.dl.layer0.W", glorot_uniform(cfg.d_node, cfg.d_graph, rng));
    const double a_hi = 2.0 / static_cast<double>(cfg.n_max);
    dl_adjacency_ = &store.add("msgnn.dl.A", uniform_tensor({cfg.n_max, cfg.n_max}, 0.0, a_hi, rng));
    ec_map_ = Mlp2::create(store, "msgnn.ec.map", kEdgeCategories, cfg.ec_hidden,
                           cfg.ec_channels * cfg.d_graph * cfg.d_node, rng);
    ec_channels_ = cfg.ec_channels;
    ec_bias_ = &store.add("msgnn.ec.b", Tensor({1, cfg.d_graph}));
    alpha_ = &store.add("msgnn.fuse.alpha", Tensor({1, cfg.d_graph}, 1.0));
    beta_ = &store.add("msgnn.fuse.beta", Tensor({1, cfg.d_graph}, 1.0));
    gamma_ = &store.add("msgnn.fuse.gamma", Tensor({1, cfg.d_graph}, 1.0));
  }

  /// Node features from raw inputs: φ_p((x*m) ++ m) in the past, φ_f(y) in the future.
  Var embed(Tape& tape, const Tensor& coords, const Tensor& mask, Phase phase) const {
    if (phase == Phase::past) return embed_past_(tape, tape.constant(embedding_input(coords, mask)));
    if (!coords.all_finite()) throw DataError("embed: non-finite coordinate");
    return embed_future_(tape, tape.constant(coords));
  }

  /// Same as embed() for the past phase but with an explicit 3-wide input row
  /// per node (used when imputed values are fed back at inference).
  Var embed_raw_past(Tape& tape, const Tensor& input) const { return embed_past_(tape, tape.constant(input)); }

  Var st_branch(Tape& tape, const Var& features, const Tensor& adj_norm_stacked, std::size_t group) const {
    Var adj = tape.constant(adj_norm_stacked);
    Var f = features;
    for (auto* w : st_) f = st_gcl(f, adj, tape.parameter(*w), group);
    return f;
  }

  Var dl_branch(Tape& tape, const Var& features, std::size_t group) const {
    if (group > dl_adjacency_->value.rows()) {
      throw CapacityError("scene has " + std::to_string(group) + " agents but learnable adjacency holds " +
                          std::to_string(dl_adjacency_->value.rows()));
    }
    Var adj = slice_block(tape.parameter(*dl_adjacency_), group, group);
    return dl_gcl(features, adj, tape.parameter(*dl_weight_), group);
  }

  /// Edge weight matrices Θ_c (D_G x D) for the three categories: two affine
  /// maps with a ReLU produce channels x D_G x D values per one-hot category,
  /// which are mean-pooled over the channel axis.
  std::array<Var, kEdgeCategories> edge_thetas(Tape& tape) const {
    Var raw = ec_map_(tape, tape.constant(Tensor::identity(kEdgeCategories)));
    const std::size_t width = d_graph_ * d_node_;
    Var pooled = slice_cols(raw, 0, width);
    for (std::size_t k = 1; k < ec_channels_; ++k) pooled = add(pooled, slice_cols(raw, k * width, (k + 1) * width));
    pooled = scale(pooled, 1.0 / static_cast<double>(ec_channels_));
    std::array<Var, kEdgeCategories> thetas;
    for (std::size_t c = 0; c < kEdgeCategories; ++c) thetas[c] = reshape(gather_rows(pooled, {c}), d_graph_, d_node_);
    return thetas;
  }

  Var ec_branch(Tape& tape, const Var& features, const std::vector<EdgeCategoryField>& cats, std::size_t group) const {
    return ec_gcl(features, edge_thetas(tape), tape.parameter(*ec_bias_), category_indicators(cats), group);
  }

  Var fuse_branches(Tape& tape, const std::optional<Var>& st, const std::optional<Var>& dl,
                    const std::optional<Var>& ec) const {
    return fuse(st, dl, ec, tape.parameter(*alpha_), tape.parameter(*beta_), tape.parameter(*gamma_));
  }

  /// Full encoder for one timestep of a stacked batch. `mask` is ignored in the
  /// future phase (every agent visible) and the edge-conditioned branch only
  /// runs in the past phase.
  Var forward(Tape& tape, const Tensor& coords, const Tensor& mask, Phase phase, std::size_t group,
              const BranchFlags& flags, bool literal_normalization = false,
              const Tensor* raw_past_input = nullptr) const {
    if (!flags.st && !flags.dl && !flags.ec) throw ConfigError("msgnn: empty branch set");
    Var f = raw_past_input ? embed_raw_past(tape, *raw_past_input) : embed(tape, coords, mask, phase);
    return forward_from_features(tape, f, mask, phase, group, flags, literal_normalization);
  }

  Var forward_from_features(Tape& tape, const Var& features, const Tensor& mask, Phase phase, std::size_t group,
                            const BranchFlags& flags, bool literal_normalization = false) const {
    if (!flags.st && !flags.dl && !flags.ec) throw ConfigError("msgnn: empty branch set");
    const std::size_t rows = features.rows();
    if (group == 0 || rows % group != 0) throw DimensionError("msgnn: rows not divisible by agent count");
    const std::size_t scenes = rows / group;
    std::optional<Var> st, dl, ec;
    if (flags.st) {
      Tensor adj = Tensor::zeros(rows, group);
      for (std::size_t b = 0; b < scenes; ++b) {
        std::vector<double> m(group, 1.0);
        if (phase == Phase::past)
          for (std::size_t i = 0; i < group; ++i) m[i] = mask[b * group + i];
        Tensor norm = normalize_static(build_static_adjacency(m), literal_normalization);
        std::copy(norm.storage().begin(), norm.storage().end(), adj.storage().begin() + b * group * group);
      }
      st = st_branch(tape, features, adj, group);
    }
    if (flags.dl) dl = dl_branch(tape, features, group);
    if (flags.ec && phase == Phase::past) {
      std::vector<EdgeCategoryField> cats;
      for (std::size_t b = 0; b < scenes; ++b) {
        std::vector<double> m(mask.storage().begin() + b * group, mask.storage().begin() + (b + 1) * group);
        cats.push_back(edge_categories(m));
      }
      ec = ec_branch(tape, features, cats, group);
    }
    return fuse_branches(tape, st, dl, ec);
  }

  const std::vector<Parameter*>& st_weights() const { return st_; }
  Parameter& dl_weight() const { return *dl_weight_; }
  Parameter& dl_adjacency() const { return *dl_adjacency_; }
  Parameter& ec_bias() const { return *ec_bias_; }
  Parameter& alpha() const { return *alpha_; }
  Parameter& beta() const { return *beta_; }
  Parameter& gamma() const { return *gamma_; }
  const Mlp2& embed_past() const { return embed_past_; }
  const Mlp2& embed_future() const { return embed_future_; }
  const Mlp2& ec_map() const { return ec_map_; }

 private:
  std::size_t d_node_ = 0, d_graph_ = 0, ec_channels_ = 1;
  Mlp2 embed_past_, embed_future_, ec_map_;
  std::vector<Parameter*> st_;
  Parameter* dl_weight_ = nullptr;
  Parameter* dl_adjacency_ = nullptr;
  Parameter* ec_bias_ = nullptr;
  Parameter* alpha_ = nullptr;
  Parameter* beta_ = nullptr;
  Parameter* gamma_ = nullptr;
};

}  // namespace gcvrnn

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcvrnn/autodiff.hpp"
#include "gcvrnn/data.hpp"
#include "gcvrnn/graph.hpp"
#include "gcvrnn/layers.hpp"
#include "gcvrnn/model_config.hpp"

namespace gcvrnn {

/// Diagonal Gaussian; σ = exp(0.5 logvar).
struct LatentDistribution {
  Var mu;
  Var logvar;
};

/// Bivariate Gaussian per row: mean (2), σ = exp(log_sigma) (2), ρ (1).
struct BiGaussianParams {
  Var mu;
  Var log_sigma;
  Var rho;
};

// ---- temporal lag / decay -----------------------------------------------

/// Lag update for step t (1-based):
///   t = 1: 0;  m_t = 0: 1 + δ_{t-1};  m_t = 1: 1.
/// With `previous_mask` set the branch is taken on m_{t-1} instead.
inline std::vector<double> temporal_lag_update(std::span<const double> prev_lag, std::size_t t,
                                               std::span<const double> mask_t,
                                               std::span<const double> prev_mask = {}) {
  if (t < 1) throw ContractError("temporal_lag_update: steps are 1-based");
  std::vector<double> lag(mask_t.size(), 0.0);
  if (t == 1) return lag;
  if (prev_lag.size() != mask_t.size()) throw DimensionError("temporal_lag_update: agent count mismatch");
  const bool use_prev = !prev_mask.empty();
  for (std::size_t i = 0; i < mask_t.size(); ++i) {
    const double m = use_prev ? prev_mask[i] : mask_t[i];
    lag[i] = m == 0.0 ? 1.0 + prev_lag[i] : 1.0;
  }
  return lag;
}

/// Δ = 1 / exp(max(0, w δ + b)), one value per row.
inline Var temporal_decay(const Var& delta, const Var& weight, const Var& bias) {
  Var pre = add_row(matmul(delta, weight), bias);
  return exp(scale(max_scalar(pre, 0.0), -1.0));
}

/// h' = Δ ⊙ h with Δ broadcast along the hidden axis; identity when disabled.
inline Var decay_hidden(const Var& h, const Var& decay, bool use_td) { return use_td ? mul_col(h, decay) : h; }

// ---- likelihood terms ------------------------------------------------------

/// z = μ + σ ⊙ ε.
inline Var sample_latent(const LatentDistribution& d, const Tensor& noise) {
  if (!same_matrix_shape(d.mu.value(), noise)) {
    throw DimensionError("sample_latent: shape mismatch " + shape_string(d.mu.value().shape()) + " vs " +
                         shape_string(noise.shape()));
  }
  return add(d.mu, mul(exp(scale(d.logvar, 0.5)), d.mu.tape().constant(noise)));
}

/// Per-row negative log density of a bivariate normal:
///   log(2π σx σy sqrt(1-ρ²)) + q / (2(1-ρ²)),  q = zx² + zy² - 2ρ zx zy.
inline Var bigauss_nll(const Var& target, const BiGaussianParams& p) {
  Var z = div(sub(target, p.mu), exp(p.log_sigma));
  Var zx = slice_cols(z, 0, 1);
  Var zy = slice_cols(z, 1, 2);
  Var one_m_r2 = add_scalar(scale(square(p.rho), -1.0), 1.0);
  Var q = sub(add(square(zx), square(zy)), scale(mul(p.rho, mul(zx, zy)), 2.0));
  Var log_norm = add(add_scalar(row_sum(p.log_sigma), std::log(2.0 * std::numbers::pi)), scale(log(one_m_r2), 0.5));
  return add(log_norm, div(q, scale(one_m_r2, 2.0)));
}

/// KL(q || p) for diagonal Gaussians, summed over latent dimensions (per row).
inline Var gauss_kl(const LatentDistribution& q, const LatentDistribution& p) {
  Var diff = sub(q.mu, p.mu);
  Var ratio = exp(sub(q.logvar, p.logvar));
  Var mahal = div(square(diff), exp(p.logvar));
  Var per_dim = add_scalar(sub(add(ratio, mahal), sub(q.logvar, p.logvar)), -1.0);
  return scale(row_sum(per_dim), 0.5);
}

/// Sum over steps and rows of NLL + λ KL, divided by the number of scenes.
inline Var stream_loss(const std::vector<Var>& nll, const std::vector<Var>& kl, double lambda, std::size_t scenes) {
  if (nll.empty()) throw ContractError("stream_loss: empty stream");
  Tape& tape = nll.front().tape();
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t t = 0; t < nll.size(); ++t) {
    total = add(total, sum(nll[t]));
    if (lambda != 0.0) total = add(total, scale(sum(kl[t]), lambda));
  }
  return scale(total, 1.0 / static_cast<double>(scenes));
}

// ---- batches ----------------------------------------------------------------

/// Stacked batch: B scenes of N agents as B*N rows, one tensor per step.
/// Coordinates are already in network units.
struct Batch {
  std::size_t scenes = 0;
  std::size_t agents = 0;
  std::vector<Tensor> past;    // t_past x [B*N, 2]
  std::vector<Tensor> mask;    // t_past x [B*N, 1]
  std::vector<Tensor> future;  // t_future x [B*N, 2]

  std::size_t rows() const { return scenes * agents; }
  std::size_t t_past() const { return past.size(); }
  std::size_t t_future() const { return future.size(); }
};

inline Batch make_batch(std::span<const TrajectorySequence* const> seqs, std::span<const MaskMatrix* const> masks,
                        double coord_scale) {
  if (seqs.empty() || seqs.size() != masks.size()) throw ContractError("make_batch: need matching sequences and masks");
  Batch b;
  b.scenes = seqs.size();
  b.agents = seqs[0]->agents;
  const std::size_t tp = seqs[0]->t_past, tf = seqs[0]->t_future;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const auto& s = *seqs[k];
    const auto& m = *masks[k];
    if (s.agents != b.agents || s.t_past != tp || s.t_future != tf) {
      throw DimensionError("make_batch: sequence " + s.id + " has T=" + std::to_string(s.t_past) + "+" +
                           std::to_string(s.t_future) + ", N=" + std::to_string(s.agents) + "; expected T=" +
                           std::to_string(tp) + "+" + std::to_string(tf) + ", N=" + std::to_string(b.agents));
    }
    if (m.t_past != tp || m.agents != b.agents) throw DimensionError("make_batch: mask shape disagrees with sequence " + s.id);
  }
  const std::size_t R = b.rows();
  for (std::size_t t = 0; t < tp + tf; ++t) {
    Tensor xy = Tensor::zeros(R, 2);
    Tensor mk = Tensor::zeros(R, 1);
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      for (std::size_t i = 0; i < b.agents; ++i) {
        const Vec2 p = seqs[k]->at(t, i);
        const std::size_t r = k * b.agents + i;
        xy(r, 0) = p.x * coord_scale;
        xy(r, 1) = p.y * coord_scale;
        if (t < tp) mk[r] = masks[k]->visible(t, i) ? 1.0 : 0.0;
      }
    }
    if (t < tp) {
      b.past.push_back(std::move(xy));
      b.mask.push_back(std::move(mk));
    } else {
      b.future.push_back(std::move(xy));
    }
  }
  return b;
}

/// Reparameterization noise, one [rows, Z] tensor per step.
struct StepNoise {
  std::vector<Tensor> past;
  std::vector<Tensor> future;
};

/// Noise for B scenes where scene k draws from a stream seeded by
/// (seed, scene_keys[k]), so values do not depend on batch composition.
inline StepNoise make_noise(std::uint64_t seed, std::span<const std::uint64_t> scene_keys, std::size_t agents,
                            std::size_t latent, std::size_t t_past, std::size_t t_future) {
  StepNoise n;
  const std::size_t R = scene_keys.size() * agents;
  for (std::size_t t = 0; t < t_past; ++t) n.past.emplace_back(Shape{R, latent});
  for (std::size_t t = 0; t < t_future; ++t) n.future.emplace_back(Shape{R, latent});
  for (std::size_t k = 0; k < scene_keys.size(); ++k) {
    std::mt19937_64 rng(derive_seed(seed, scene_keys[k], 0x6e6f697365ull));
    std::normal_distribution<double> g(0.0, 1.0);
    auto fill = [&](Tensor& t) {
      for (std::size_t i = 0; i < agents; ++i)
        for (std::size_t j = 0; j < latent; ++j) t((k * agents) + i, j) = g(rng);
    };
    for (auto& t : n.past) fill(t);
    for (auto& t : n.future) fill(t);
  }
  return n;
}

inline StepNoise make_noise(std::uint64_t seed, std::size_t scenes, std::size_t agents, std::size_t latent,
                            std::size_t t_past, std::size_t t_future) {
  std::vector<std::uint64_t> keys(scenes);
  for (std::size_t k = 0; k < scenes; ++k) keys[k] = k;
  return make_noise(seed, keys, agents, latent, t_past, t_future);
}

/// Everything the training objective needs from one unrolled pass.
struct ForwardTrace {
  std::vector<Var> nll_past, kl_past;      // [R,1] per step
  std::vector<Var> nll_future, kl_future;  // [R,1] per step
  std::vector<BiGaussianParams> decoded_past, decoded_future;
  std::optional<Var> imputation_loss;
  std::optional<Var> prediction_loss;
  Var total;
};

/// Imputed past and predicted future in scene units, laid out T x N x 2.
struct InferenceResult {
  std::size_t agents = 0;
  std::vector<double> imputed;
  std::vector<double> predicted;

  Vec2 imputed_at(std::size_t t, std::size_t i) const { return {imputed[(t * agents + i) * 2], imputed[(t * agents + i) * 2 + 1]}; }
  Vec2 predicted_at(std::size_t t, std::size_t i) const {
    return {predicted[(t * agents + i) * 2], predicted[(t * agents + i) * 2 + 1]};
  }
};

/// Graph-conditioned variational recurrent model with temporal decay: an
/// imputation stream over the observed window and a prediction stream over
/// the future, joined through the recurrent state and the last past latent.
class GcVrnn {
 public:
  explicit GcVrnn(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x696e6974ull));
    msgnn_ = MsGnn(params_, cfg_, rng);
    prior_ = Mlp2::create(params_, "cvrnn.prior", cfg_.hidden, cfg_.mlp_hidden, 2 * cfg_.latent, rng);
    encoder_ = Mlp2::create(params_, "cvrnn.enc", cfg_.d_graph + cfg_.hidden, cfg_.mlp_hidden, 2 * cfg_.latent, rng);
    z_past_ = Linear::create(params_, "cvrnn.phi_z_past", cfg_.latent, cfg_.z_feature, true, rng);
    z_future_ = Linear::create(params_, "cvrnn.phi_z_future", 2 * cfg_.latent, cfg_.z_feature, true, rng);
    dec_past_ = Mlp2::create(params_, "cvrnn.dec_past", cfg_.z_feature + cfg_.hidden, cfg_.mlp_hidden, 5, rng);
    dec_future_ = Mlp2::create(params_, "cvrnn.dec_future", cfg_.z_feature + cfg_.hidden, cfg_.mlp_hidden, 5, rng);
    td_weight_ = &params_.add("cvrnn.td.W", Tensor({1, 1}, 0.1));
    td_bias_ = &params_.add("cvrnn.td.b", Tensor({1, 1}, 0.0));
    cell_impute_ = GruCell::create(params_, "cvrnn.rnn", cfg_.d_graph + cfg_.z_feature, cfg_.hidden, rng);
    cell_predict_ = cfg_.share_streams
                        ? cell_impute_
                        : GruCell::create(params_, "cvrnn.rnn_future", cfg_.d_graph + cfg_.z_feature, cfg_.hidden, rng);
  }

  GcVrnn(const GcVrnn&) = delete;
  GcVrnn& operator=(const GcVrnn&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const MsGnn& msgnn() const { return msgnn_; }
  const GruCell& impute_cell() const { return cell_impute_; }
  const GruCell& predict_cell() const { return cell_predict_; }
  const Mlp2& prior_net() const { return prior_; }
  const Mlp2& encoder_net() const { return encoder_; }
  const Mlp2& past_decoder() const { return dec_past_; }
  const Mlp2& future_decoder() const { return dec_future_; }
  const Linear& past_z_feature() const { return z_past_; }
  const Linear& future_z_feature() const { return z_future_; }
  Parameter& td_weight() { return *td_weight_; }
  Parameter& td_bias() { return *td_bias_; }

  BranchFlags branches() const { return {cfg_.use_st, cfg_.use_dl, cfg_.use_ec}; }

  Var graph_features(Tape& tape, const Tensor& coords, const Tensor& mask, Phase phase, std::size_t agents,
                     const Tensor* raw_past = nullptr) const {
    return msgnn_.forward(tape, coords, mask, phase, agents, branches(), cfg_.literal_normalization, raw_past);
  }

  /// [μ, logvar] = φ_pri(h_{t-1}).
  LatentDistribution prior_params(Tape& tape, const Var& h_prev) const { return split_latent(prior_(tape, h_prev)); }

  /// [μ, logvar] = φ_enc(F_G ++ h_{t-1}).
  LatentDistribution posterior_params(Tape& tape, const Var& fg, const Var& h_prev) const {
    return split_latent(encoder_(tape, concat(fg, h_prev)));
  }

  Var decay(Tape& tape, const Tensor& lag) const {
    return temporal_decay(tape.constant(lag), tape.parameter(*td_weight_), tape.parameter(*td_bias_));
  }

  Var past_z_features(Tape& tape, const Var& z) const { return relu(z_past_(tape, z)); }
  Var future_z_features(Tape& tape, const Var& z, const Var& z_last) const {
    return relu(z_future_(tape, concat(z, z_last)));
  }

  /// h_t = GRU(F_G ++ φ_z(z), h'_{t-1}).
  Var recurrence_impute(Tape& tape, const Var& fg, const Var& z, const Var& h_decayed) const {
    return recurrence_impute_features(tape, fg, past_z_features(tape, z), h_decayed);
  }
  Var recurrence_impute_features(Tape& tape, const Var& fg, const Var& zfeat, const Var& h_decayed) const {
    return cell_impute_(tape, concat(fg, zfeat), h_decayed);
  }

  /// h_t = GRU(F_G ++ φ_z(z_t ++ z_tp), h_{t-1}), with the prediction cell.
  Var recurrence_predict(Tape& tape, const Var& fg, const Var& z, const std::optional<Var>& z_last,
                         const Var& h_prev) const {
    if (!z_last) throw ContractError("recurrence_predict: latent of the last observed step is required");
    return recurrence_predict_features(tape, fg, future_z_features(tape, z, *z_last), h_prev);
  }
  Var recurrence_predict_features(Tape& tape, const Var& fg, const Var& zfeat, const Var& h_prev) const {
    return cell_predict_(tape, concat(fg, zfeat), h_prev);
  }

  BiGaussianParams decode_imputation(Tape& tape, const Var& z, const Var& h_prev) const {
    return decode_head(dec_past_(tape, concat(past_z_features(tape, z), h_prev)));
  }
  BiGaussianParams decode_imputation_features(Tape& tape, const Var& zfeat, const Var& h_prev) const {
    return decode_head(dec_past_(tape, concat(zfeat, h_prev)));
  }

  BiGaussianParams decode_prediction(Tape& tape, const Var& z, const std::optional<Var>& z_last, const Var& h_prev) const {
    if (!z_last) throw ContractError("decode_prediction: latent of the last observed step is required");
    return decode_head(dec_future_(tape, concat(future_z_features(tape, z, *z_last), h_prev)));
  }
  BiGaussianParams decode_prediction_features(Tape& tape, const Var& zfeat, const Var& h_prev) const {
    return decode_head(dec_future_(tape, concat(zfeat, h_prev)));
  }

  /// Unrolled teacher-forced pass over both windows and the loss terms.
  ForwardTrace forward(Tape& tape, const Batch& batch, const StepNoise& noise) const {
    const std::size_t R = batch.rows();
    const std::size_t N = batch.agents;
    const std::size_t tp = batch.t_past(), tf = batch.t_future();
    check_stream_lengths(tp, tf);
    ForwardTrace tr;
    Var h = tape.constant(Tensor::zeros(R, cfg_.hidden));
    std::vector<double> lag(R, 0.0);
    std::optional<Var> z_last;

    for (std::size_t t = 0; t < tp; ++t) {
      const Tensor& m = batch.mask[t];
      lag = temporal_lag_update(lag, t + 1, m.data(), previous_mask(batch, t));
      Var fg = graph_features(tape, batch.past[t], m, Phase::past, N);
      LatentDistribution pri = prior_params(tape, h);
      LatentDistribution post = posterior_params(tape, fg, h);
      Var z = sample_latent(post, noise.past.at(t));
      Var zf = past_z_features(tape, z);
      BiGaussianParams dec = decode_imputation_features(tape, zf, h);
      tr.nll_past.push_back(bigauss_nll(tape.constant(batch.past[t]), dec));
      tr.kl_past.push_back(gauss_kl(post, pri));
      tr.decoded_past.push_back(dec);
      Var h_dec = decay_hidden(h, decay(tape, Tensor({R, 1}, lag)), cfg_.use_td);
      h = recurrence_impute_features(tape, fg, zf, h_dec);
      z_last = z;
    }

    if (tf > 0) {
      if (!cfg_.share_streams && z_last) {
        // streams disconnected: information flows forward, gradients do not
        h = tape.constant(h.value());
        z_last = tape.constant(z_last->value());
      }
      const Tensor ones = Tensor::filled(R, 1, 1.0);
      for (std::size_t t = 0; t < tf; ++t) {
        Var fg = graph_features(tape, batch.future[t], ones, Phase::future, N);
        LatentDistribution pri = prior_params(tape, h);
        LatentDistribution post = posterior_params(tape, fg, h);
        Var z = sample_latent(post, noise.future.at(t));
        if (!z_last) throw ContractError("prediction stream requires at least one past step");
        Var zf = future_z_features(tape, z, *z_last);
        BiGaussianParams dec = decode_prediction_features(tape, zf, h);
        tr.nll_future.push_back(bigauss_nll(tape.constant(batch.future[t]), dec));
        tr.kl_future.push_back(gauss_kl(post, pri));
        tr.decoded_future.push_back(dec);
        h = recurrence_predict_features(tape, fg, zf, h);
      }
    }

    if (tp > 0) tr.imputation_loss = stream_loss(tr.nll_past, tr.kl_past, cfg_.lambda1, batch.scenes);
    if (tf > 0) tr.prediction_loss = stream_loss(tr.nll_future, tr.kl_future, cfg_.lambda2, batch.scenes);
    tr.total = loss_total(tr);
    return tr;
  }

  /// L_imp + λ3 L_pre, or a single stream in the impute-only / predict-only modes.
  Var loss_total(const ForwardTrace& tr) const {
    switch (cfg_.mode) {
      case TrainingMode::impute_only:
        if (!tr.imputation_loss) throw ConfigError("impute-only mode without a past window");
        return *tr.imputation_loss;
      case TrainingMode::predict_only:
        if (!tr.prediction_loss) throw ConfigError("predict-only mode without a future window");
        return *tr.prediction_loss;
      case TrainingMode::joint:
        if (!tr.imputation_loss || !tr.prediction_loss) throw ConfigError("joint mode requires both windows");
        if (cfg_.lambda3 == 0.0) return *tr.imputation_loss;
        return add(*tr.imputation_loss, scale(*tr.prediction_loss, cfg_.lambda3));
    }
    throw ConfigError("unknown mode");
  }

  /// Imputation and prediction without future inputs. Past latents come from
  /// the prior; observed positions are copied through, missing ones take the
  /// decoded mean. The future is rolled out autoregressively on decoded means.
  ///
  /// `past`/`mask` are stacked per step as in Batch (network units); noise
  /// must cover the same rows. Returns network-unit tensors per step.
  struct RawInference {
    std::vector<Tensor> imputed;
    std::vector<Tensor> predicted;
  };

  RawInference infer_stacked(const std::vector<Tensor>& past, const std::vector<Tensor>& mask, std::size_t agents,
                             std::size_t t_future, const StepNoise& noise) const {
    RawInference out;
    if (past.empty()) throw ContractError("run_inference: empty past window");
    const std::size_t R = past[0].rows();
    Tensor h = Tensor::zeros(R, cfg_.hidden);
    std::vector<double> lag(R, 0.0);
    Tensor z_last;
    for (std::size_t t = 0; t < past.size(); ++t) {
      Tape tape;
      tape.set_grad_enabled(false);
      const Tensor& m = mask[t];
      std::span<const double> prev = (cfg_.lag_uses_previous_mask && t > 0) ? mask[t - 1].data() : std::span<const double>{};
      lag = temporal_lag_update(lag, t + 1, m.data(), prev);
      Var hv = tape.constant(h);
      LatentDistribution pri = prior_params(tape, hv);
      Var z = sample_latent(pri, noise.past.at(t));
      Var zf = past_z_features(tape, z);
      BiGaussianParams dec = decode_imputation_features(tape, zf, hv);
      const Tensor& mu = dec.mu.value();
      Tensor imp = past[t];
      for (std::size_t r = 0; r < R; ++r) {
        if (m[r] == 0.0) {
          imp(r, 0) = mu(r, 0);
          imp(r, 1) = mu(r, 1);
        }
      }
      Var fg;
      if (cfg_.impute_feedback) {
        Tensor raw = embedding_input(past[t], m);
        for (std::size_t r = 0; r < R; ++r) {
          if (m[r] == 0.0) {
            raw(r, 0) = mu(r, 0);
            raw(r, 1) = mu(r, 1);
          }
        }
        fg = graph_features(tape, past[t], m, Phase::past, agents, &raw);
      } else {
        fg = graph_features(tape, past[t], m, Phase::past, agents);
      }
      Var h_dec = decay_hidden(hv, decay(tape, Tensor({R, 1}, lag)), cfg_.use_td);
      h = recurrence_impute_features(tape, fg, zf, h_dec).value();
      z_last = z.value();
      out.imputed.push_back(std::move(imp));
    }
    const Tensor ones = Tensor::filled(R, 1, 1.0);
    for (std::size_t t = 0; t < t_future; ++t) {
      Tape tape;
      tape.set_grad_enabled(false);
      Var hv = tape.constant(h);
      LatentDistribution pri = prior_params(tape, hv);
      Var z = sample_latent(pri, noise.future.at(t));
      Var zf = future_z_features(tape, z, tape.constant(z_last));
      BiGaussianParams dec = decode_prediction_features(tape, zf, hv);
      Tensor y = dec.mu.value();
      Var fg = graph_features(tape, y, ones, Phase::future, agents);
      h = recurrence_predict_features(tape, fg, zf, hv).value();
      out.predicted.push_back(std::move(y));
    }
    return out;
  }

  /// Single-scene inference in scene units. `past` is t_past x N x 2 and
  /// `mask` the matching visibility; coordinates of hidden entries are ignored.
  InferenceResult run_inference(const TrajectorySequence& seq, const MaskMatrix& mask, std::uint64_t seed,
                                std::uint64_t scene_key = 0) const {
    return run_inference_batch({&seq}, {&mask}, seed, {scene_key}).front();
  }

  std::vector<InferenceResult> run_inference_batch(std::vector<const TrajectorySequence*> seqs,
                                                   std::vector<const MaskMatrix*> masks, std::uint64_t seed,
                                                   std::vector<std::uint64_t> scene_keys) const {
    if (seqs.empty()) return {};
    const std::size_t N = seqs[0]->agents;
    const std::size_t tp = seqs[0]->t_past, tf = seqs[0]->t_future;
    const std::size_t R = seqs.size() * N;
    std::vector<Tensor> past, mk;
    for (std::size_t t = 0; t < tp; ++t) {
      Tensor xy = Tensor::zeros(R, 2), m = Tensor::zeros(R, 1);
      for (std::size_t k = 0; k < seqs.size(); ++k) {
        if (seqs[k]->agents != N || seqs[k]->t_past != tp || seqs[k]->t_future != tf) {
          throw DimensionError("run_inference: mixed scene shapes in one batch");
        }
        for (std::size_t i = 0; i < N; ++i) {
          const bool vis = masks[k]->visible(t, i);
          const Vec2 p = seqs[k]->at(t, i);
          xy(k * N + i, 0) = vis ? p.x * cfg_.coord_scale : 0.0;
          xy(k * N + i, 1) = vis ? p.y * cfg_.coord_scale : 0.0;
          m[k * N + i] = vis ? 1.0 : 0.0;
        }
      }
      past.push_back(std::move(xy));
      mk.push_back(std::move(m));
    }
    StepNoise noise = make_noise(seed, scene_keys, N, cfg_.latent, tp, tf);
    RawInference raw = infer_stacked(past, mk, N, tf, noise);
    std::vector<InferenceResult> out(seqs.size());
    const double inv = 1.0 / cfg_.coord_scale;
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      auto& r = out[k];
      r.agents = N;
      r.imputed.resize(tp * N * 2);
      r.predicted.resize(tf * N * 2);
      for (std::size_t t = 0; t < tp; ++t) {
        for (std::size_t i = 0; i < N; ++i) {
          if (masks[k]->visible(t, i)) {
            // copy-through in scene units, bit-exact
            const Vec2 p = seqs[k]->at(t, i);
            r.imputed[(t * N + i) * 2] = p.x;
            r.imputed[(t * N + i) * 2 + 1] = p.y;
          } else {
            r.imputed[(t * N + i) * 2] = raw.imputed[t](k * N + i, 0) * inv;
            r.imputed[(t * N + i) * 2 + 1] = raw.imputed[t](k * N + i, 1) * inv;
          }
        }
      }
      for (std::size_t t = 0; t < tf; ++t) {
        for (std::size_t i = 0; i < N; ++i) {
          r.predicted[(t * N + i) * 2] = raw.predicted[t](k * N + i, 0) * inv;
          r.predicted[(t * N + i) * 2 + 1] = raw.predicted[t](k * N + i, 1) * inv;
        }
      }
    }
    return out;
  }

 private:
  LatentDistribution split_latent(const Var& out) const {
    const std::size_t Z = cfg_.latent;
    return {slice_cols(out, 0, Z), clamp(slice_cols(out, Z, 2 * Z), -cfg_.logvar_clamp, cfg_.logvar_clamp)};
  }

  static BiGaussianParams decode_head(const Var& out) {
    // the clamp keeps tanh below 1 in floating point, so |ρ| < 0.999 strictly
    return {slice_cols(out, 0, 2), slice_cols(out, 2, 4), scale(tanh(clamp(slice_cols(out, 4, 5), -15.0, 15.0)), 0.999)};
  }

  std::span<const double> previous_mask(const Batch& b, std::size_t t) const {
    if (!cfg_.lag_uses_previous_mask || t == 0) return {};
    return b.mask[t - 1].data();
  }

  void check_stream_lengths(std::size_t tp, std::size_t tf) const {
    if (cfg_.mode == TrainingMode::joint && (tp == 0 || tf == 0)) throw ConfigError("joint mode requires both windows");
    if (cfg_.mode == TrainingMode::predict_only && tf == 0) throw ConfigError("predict-only mode requires a future window");
    if (cfg_.mode == TrainingMode::impute_only && tp == 0) throw ConfigError("impute-only mode requires a past window");
  }

  ModelConfig cfg_;
  ParameterStore params_;
  MsGnn msgnn_;
  Mlp2 prior_, encoder_, dec_past_, dec_future_;
  Linear z_past_, z_future_;
  Parameter* td_weight_ = nullptr;
  Parameter* td_bias_ = nullptr;
  GruCell cell_impute_, cell_predict_;
};

}  // namespace gcvrnn

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcvrnn/model.hpp"
#include "gcvrnn/optim.hpp"

namespace gcvrnn {

struct StepLosses {
  double total = 0.0;
  double imputation = 0.0;
  double prediction = 0.0;
};

/// One sequence and its mask, as fed to training.
struct TrainingExample {
  const TrajectorySequence* sequence = nullptr;
  const MaskMatrix* mask = nullptr;
};

struct EpochStats {
  std::uint64_t epoch = 0;  // 1-based index of the completed epoch
  StepLosses mean;          // averaged over batches
  std::size_t batches = 0;
};

/// Forward, backward and one Adam update. Returns the pre-update losses.
inline StepLosses train_step(GcVrnn& model, Adam& opt, const Batch& batch, const StepNoise& noise) {
  StepLosses out;
  auto& params = model.parameters();
  params.zero_grad();
  try {
    Tape tape;
    ForwardTrace tr = model.forward(tape, batch, noise);
    out.total = tr.total.value().item();
    out.imputation = tr.imputation_loss ? tr.imputation_loss->value().item() : 0.0;
    out.prediction = tr.prediction_loss ? tr.prediction_loss->value().item() : 0.0;
    if (!std::isfinite(out.total)) throw NumericError("loss is non-finite");
    tape.backward(tr.total);
  } catch (const NumericError& e) {
    throw NumericError(std::string("train_step aborted: ") + e.what());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad.all_finite()) throw NumericError("train_step aborted: non-finite gradient for " + params[i].name);
  }
  opt.step();
  return out;
}

/// Epoch loop with deterministic per-epoch shuffling and per-scene noise.
/// Everything is derived from (seed, epoch), so a run resumed from a
/// checkpoint continues exactly like an uninterrupted one.
class Trainer {
 public:
  Trainer(GcVrnn& model, AdamOptions opts, std::size_t batch_size, std::uint64_t seed)
      : model_(&model), opt_(model.parameters(), opts), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  }

  Adam& optimizer() { return opt_; }
  const Adam& optimizer() const { return opt_; }
  std::uint64_t epochs_done() const { return epochs_done_; }
  void set_epochs_done(std::uint64_t e) { epochs_done_ = e; }

  EpochStats run_epoch(std::span<const TrainingExample> data) {
    if (data.empty()) throw ConfigError("training set is empty");
    const std::uint64_t epoch = epochs_done_;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed_, epoch, 0x73687566ull));
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    const double scale = model_->config().coord_scale;
    const auto& cfg = model_->config();
    for (std::size_t start = 0; start < order.size(); start += batch_size_) {
      const std::size_t end = std::min(order.size(), start + batch_size_);
      std::vector<const TrajectorySequence*> seqs;
      std::vector<const MaskMatrix*> masks;
      std::vector<std::uint64_t> keys;
      for (std::size_t k = start; k < end; ++k) {
        seqs.push_back(data[order[k]].sequence);
        masks.push_back(data[order[k]].mask);
        keys.push_back(order[k]);
      }
      Batch b = make_batch(seqs, masks, scale);
      StepNoise noise = make_noise(derive_seed(seed_, epoch, 0x747261696eull), keys, b.agents, cfg.latent,
                                   b.t_past(), b.t_future());
      StepLosses l = train_step(*model_, opt_, b, noise);
      stats.mean.total += l.total;
      stats.mean.imputation += l.imputation;
      stats.mean.prediction += l.prediction;
      ++stats.batches;
    }
    const double inv = 1.0 / static_cast<double>(stats.batches);
    stats.mean.total *= inv;
    stats.mean.imputation *= inv;
    stats.mean.prediction *= inv;
    ++epochs_done_;
    stats.epoch = epochs_done_;
    opt_.epoch_tick(epochs_done_);
    return stats;
  }

 private:
  GcVrnn* model_;
  Adam opt_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epochs_done_ = 0;
};

}  // namespace gcvrnn

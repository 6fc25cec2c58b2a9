#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gcvrnn/parameters.hpp"

namespace gcvrnn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_factor = 0.9;
  std::uint64_t decay_interval = 20;  // epochs
};

/// Adam with a multiplicative step schedule on epoch boundaries.
class Adam {
 public:
  explicit Adam(ParameterStore& params, AdamOptions opts = {}) : params_(&params), opts_(opts), lr_(opts.learning_rate) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.shape());
      v_.emplace_back(params[i].value.shape());
    }
  }

  void step() {
    ++step_;
    const double b1 = opts_.beta1, b2 = opts_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      Parameter& p = (*params_)[i];
      if (p.grad.size() != p.value.size()) throw ContractError("missing gradient for parameter " + p.name);
      auto& w = p.value.storage();
      const auto& g = p.grad.storage();
      auto& m = m_[i].storage();
      auto& v = v_[i].storage();
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        w[k] -= lr_ * mhat / (std::sqrt(vhat) + opts_.epsilon);
      }
    }
  }

  /// Signals that `epochs_done` epochs have completed; decays the rate on
  /// every multiple of the decay interval.
  void epoch_tick(std::uint64_t epochs_done) {
    if (opts_.decay_interval > 0 && epochs_done > 0 && epochs_done % opts_.decay_interval == 0) {
      lr_ *= opts_.decay_factor;
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t s) { step_ = s; }
  const AdamOptions& options() const { return opts_; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  ParameterStore* params_;
  AdamOptions opts_;
  double lr_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace gcvrnn

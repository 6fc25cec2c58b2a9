#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gcvrnn/autodiff.hpp"

namespace gcvrnn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference check of `loss` against reverse-mode gradients for every
/// coordinate of `params`. `loss` must build a fresh tape on each call and be
/// deterministic (noise frozen by the caller). Error per coordinate is
/// |a - n| / max(1, |a|, |n|).
inline GradCheckResult grad_check(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                  double h = 1e-5) {
  for (auto* p : params) p->grad.fill(0.0);
  {
    Tape tape;
    Var root = loss(tape);
    tape.backward(root);
  }
  auto eval = [&]() {
    Tape tape;
    tape.set_grad_enabled(false);
    const double v = loss(tape).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss at perturbed point");
    return v;
  };
  GradCheckResult res;
  for (auto* p : params) {
    auto& w = p->value.storage();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double orig = w[k];
      w[k] = orig + h;
      const double fp = eval();
      w[k] = orig - h;
      const double fm = eval();
      w[k] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad[k];
      const double err =
          std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      if (res.worst_parameter.empty() || err > res.max_relative_error) {
        res.max_relative_error = err;
        res.worst_parameter = p->name;
        res.worst_index = k;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

/// Convenience overload for every parameter in a store.
inline GradCheckResult grad_check(const std::function<Var(Tape&)>& loss, ParameterStore& store, double h = 1e-5) {
  std::vector<Parameter*> ps;
  for (std::size_t i = 0; i < store.size(); ++i) ps.push_back(&store[i]);
  return grad_check(loss, ps, h);
}

}  // namespace gcvrnn

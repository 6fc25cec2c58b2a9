#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gcvrnn/data.hpp"

namespace gcvrnn {

// Classical imputers and a constant-velocity predictor. Imputed pasts are
// flat t_past x N x 2 arrays in scene units; observed entries are always
// copied through unchanged.

namespace detail {

inline std::vector<double> copy_past(const TrajectorySequence& seq) {
  return std::vector<double>(seq.coords.begin(), seq.coords.begin() + static_cast<std::ptrdiff_t>(seq.t_past * seq.agents * 2));
}

inline void check_mask(const TrajectorySequence& seq, const MaskMatrix& mask) {
  if (mask.t_past != seq.t_past || mask.agents != seq.agents) {
    throw DimensionError("mask is " + std::to_string(mask.t_past) + "x" + std::to_string(mask.agents) + ", sequence " +
                         seq.id + " needs " + std::to_string(seq.t_past) + "x" + std::to_string(seq.agents));
  }
}

template <class Fill>
std::vector<double> impute_with(const TrajectorySequence& seq, const MaskMatrix& mask, Fill fill) {
  check_mask(seq, mask);
  std::vector<double> out = copy_past(seq);
  const std::size_t N = seq.agents;
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<std::size_t> seen;
    for (std::size_t t = 0; t < seq.t_past; ++t)
      if (mask.visible(t, i)) seen.push_back(t);
    for (std::size_t t = 0; t < seq.t_past; ++t) {
      if (mask.visible(t, i)) continue;
      const Vec2 v = fill(i, t, seen);
      out[(t * N + i) * 2] = v.x;
      out[(t * N + i) * 2 + 1] = v.y;
    }
  }
  return out;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Missing steps take the mean of the agent's observed positions; agents never
/// observed take `scene_center`.
inline std::vector<double> impute_mean(const TrajectorySequence& seq, const MaskMatrix& mask, Vec2 scene_center = {}) {
  return detail::impute_with(seq, mask, [&](std::size_t i, std::size_t, const std::vector<std::size_t>& seen) {
    if (seen.empty()) return scene_center;
    Vec2 m;
    for (auto t : seen) {
      m.x += seq.at(t, i).x;
      m.y += seq.at(t, i).y;
    }
    return Vec2{m.x / static_cast<double>(seen.size()), m.y / static_cast<double>(seen.size())};
  });
}

/// Per-coordinate median of observed positions (mean of the middle pair for even counts).
inline std::vector<double> impute_median(const TrajectorySequence& seq, const MaskMatrix& mask, Vec2 scene_center = {}) {
  return detail::impute_with(seq, mask, [&](std::size_t i, std::size_t, const std::vector<std::size_t>& seen) {
    if (seen.empty()) return scene_center;
    std::vector<double> xs, ys;
    for (auto t : seen) {
      xs.push_back(seq.at(t, i).x);
      ys.push_back(seq.at(t, i).y);
    }
    return Vec2{detail::median_of(xs), detail::median_of(ys)};
  });
}

/// Linear interpolation between the nearest observed neighbours in time; flat
/// (nearest observed value) outside the observed span.
inline std::vector<double> impute_linear_fit(const TrajectorySequence& seq, const MaskMatrix& mask,
                                             Vec2 scene_center = {}) {
  return detail::impute_with(seq, mask, [&](std::size_t i, std::size_t t, const std::vector<std::size_t>& seen) {
    if (seen.empty()) return scene_center;
    auto hi = std::lower_bound(seen.begin(), seen.end(), t);
    if (hi == seen.begin()) return seq.at(*hi, i);
    if (hi == seen.end()) return seq.at(seen.back(), i);
    const std::size_t t1 = *(hi - 1), t2 = *hi;
    const Vec2 a = seq.at(t1, i), b = seq.at(t2, i);
    const double w = static_cast<double>(t - t1) / static_cast<double>(t2 - t1);
    return Vec2{a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)};
  });
}

/// Extrapolates the last step's velocity; zero velocity for a one-step past.
inline std::vector<double> predict_constant_velocity(const std::vector<double>& past, std::size_t agents,
                                                     std::size_t t_past, std::size_t t_future) {
  if (past.size() != t_past * agents * 2) throw DimensionError("predict_constant_velocity: past has wrong size");
  if (t_past == 0) throw ContractError("predict_constant_velocity: empty past");
  std::vector<double> out(t_future * agents * 2);
  for (std::size_t i = 0; i < agents; ++i) {
    const double lx = past[((t_past - 1) * agents + i) * 2], ly = past[((t_past - 1) * agents + i) * 2 + 1];
    double vx = 0.0, vy = 0.0;
    if (t_past >= 2) {
      vx = lx - past[((t_past - 2) * agents + i) * 2];
      vy = ly - past[((t_past - 2) * agents + i) * 2 + 1];
    }
    for (std::size_t k = 0; k < t_future; ++k) {
      const double s = static_cast<double>(k + 1);
      out[(k * agents + i) * 2] = lx + s * vx;
      out[(k * agents + i) * 2 + 1] = ly + s * vy;
    }
  }
  return out;
}

}  // namespace gcvrnn

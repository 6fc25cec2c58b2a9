#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gcvrnn/tensor.hpp"

namespace gcvrnn {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Ground-truth tracks of N agents over T = t_past + t_future steps, plus the
/// reference entity (the "ball") that drives the masking.
struct TrajectorySequence {
  std::string id;
  std::size_t agents = 0;
  std::size_t t_past = 0;
  std::size_t t_future = 0;
  std::vector<double> coords;     // T x N x 2
  std::vector<double> reference;  // T x 2

  std::size_t steps() const { return t_past + t_future; }
  Vec2 at(std::size_t t, std::size_t i) const { return {coords[(t * agents + i) * 2], coords[(t * agents + i) * 2 + 1]}; }
  void set(std::size_t t, std::size_t i, Vec2 v) {
    coords[(t * agents + i) * 2] = v.x;
    coords[(t * agents + i) * 2 + 1] = v.y;
  }
  Vec2 ref(std::size_t t) const { return {reference[t * 2], reference[t * 2 + 1]}; }

  void validate() const {
    if (agents == 0) throw DataError("sequence " + id + ": no agents");
    if (coords.size() != steps() * agents * 2) throw DataError("sequence " + id + ": coordinate count mismatch");
    if (reference.size() != steps() * 2) throw DataError("sequence " + id + ": reference length mismatch");
    for (double v : coords)
      if (!std::isfinite(v)) throw DataError("sequence " + id + ": non-finite coordinate");
    for (double v : reference)
      if (!std::isfinite(v)) throw DataError("sequence " + id + ": non-finite reference");
  }

  friend bool operator==(const TrajectorySequence&, const TrajectorySequence&) = default;
};

/// Visibility over the past window: t_past x N, 1 = observed.
struct MaskMatrix {
  std::size_t t_past = 0;
  std::size_t agents = 0;
  std::vector<std::uint8_t> bits;

  MaskMatrix() = default;
  MaskMatrix(std::size_t t, std::size_t n, std::uint8_t fill = 1) : t_past(t), agents(n), bits(t * n, fill) {}

  bool visible(std::size_t t, std::size_t i) const { return bits[t * agents + i] != 0; }
  void set(std::size_t t, std::size_t i, bool v) { bits[t * agents + i] = v ? 1 : 0; }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{0}));
  }
  double missing_rate() const { return bits.empty() ? 0.0 : static_cast<double>(missing_count()) / bits.size(); }

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;
};

enum class MaskMode { circle, camera };

inline std::string to_string(MaskMode m) { return m == MaskMode::circle ? "circle" : "camera"; }

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "circle") return MaskMode::circle;
  if (s == "camera") return MaskMode::camera;
  throw ConfigError("unknown masking mode '" + s + "' (expected circle|camera)");
}

/// Masking scenario: radius r (circle) or half-aperture θ in degrees (camera).
struct MaskingSpec {
  MaskMode mode = MaskMode::circle;
  double parameter = 5.0;
  Vec2 camera{0.0, -35.0};

  void validate() const {
    if (mode == MaskMode::circle && !(parameter > 0.0)) throw ConfigError("circle radius must be > 0");
    if (mode == MaskMode::camera && !(parameter > 0.0 && parameter < 180.0)) {
      throw ConfigError("camera angle must lie in (0, 180) degrees");
    }
  }

  friend bool operator==(const MaskingSpec&, const MaskingSpec&) = default;
};

/// Visible iff |agent - reference| <= r, per past step.
inline MaskMatrix apply_circle_mask(const TrajectorySequence& seq, double radius) {
  if (!(radius > 0.0)) throw ConfigError("circle radius must be > 0");
  MaskMatrix m(seq.t_past, seq.agents, 0);
  const double r2 = radius * radius;
  for (std::size_t t = 0; t < seq.t_past; ++t) {
    const Vec2 c = seq.ref(t);
    for (std::size_t i = 0; i < seq.agents; ++i) {
      const Vec2 p = seq.at(t, i);
      const double dx = p.x - c.x, dy = p.y - c.y;
      m.set(t, i, dx * dx + dy * dy <= r2);
    }
  }
  return m;
}

/// Visible iff the angle at the camera between the agent and the reference is
/// <= θ degrees. An agent standing on the camera counts as visible.
inline MaskMatrix apply_camera_mask(const TrajectorySequence& seq, double theta_degrees, Vec2 camera) {
  if (!(theta_degrees > 0.0 && theta_degrees < 180.0)) throw ConfigError("camera angle must lie in (0, 180) degrees");
  const double theta = theta_degrees * std::numbers::pi / 180.0;
  MaskMatrix m(seq.t_past, seq.agents, 0);
  for (std::size_t t = 0; t < seq.t_past; ++t) {
    const Vec2 b = seq.ref(t);
    const double dx = b.x - camera.x, dy = b.y - camera.y;
    if (dx == 0.0 && dy == 0.0) throw DataError("reference coincides with camera position in sequence " + seq.id);
    for (std::size_t i = 0; i < seq.agents; ++i) {
      const Vec2 p = seq.at(t, i);
      const double ax = p.x - camera.x, ay = p.y - camera.y;
      if (ax == 0.0 && ay == 0.0) {
        m.set(t, i, true);
        continue;
      }
      const double angle = std::atan2(std::abs(ax * dy - ay * dx), ax * dx + ay * dy);
      m.set(t, i, angle <= theta);
    }
  }
  return m;
}

inline MaskMatrix apply_mask(const TrajectorySequence& seq, const MaskingSpec& spec) {
  spec.validate();
  return spec.mode == MaskMode::circle ? apply_circle_mask(seq, spec.parameter)
                                       : apply_camera_mask(seq, spec.parameter, spec.camera);
}

// ---- synthetic generator -----------------------------------------------------

/// Interacting-agent dynamics. Each agent tracks a slot that orbits the
/// reference at its own radius and rate, with damping, soft pairwise
/// repulsion, a soft wall at the field boundary and a per-step speed cap.
struct DynamicsParams {
  double field_half = 25.0;
  double v_max = 1.5;
  double ref_speed = 0.8;
  double ref_waypoint_margin = 5.0;
  double attraction = 0.08;
  double damping = 0.25;
  double repulsion = 1.0;
  double repulsion_range = 3.0;
  double formation_min = 2.0;
  double formation_max = 10.0;
  double orbit_rate = 0.06;
  double noise = 0.03;
  double wall = 0.2;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(a)) + b);
}

inline TrajectorySequence generate_sequence(std::string id, std::size_t agents, std::size_t t_past,
                                            std::size_t t_future, std::uint64_t seed, const DynamicsParams& p) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double L = p.field_half;
  const double inner = std::max(L - p.ref_waypoint_margin, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  TrajectorySequence s;
  s.id = std::move(id);
  s.agents = agents;
  s.t_past = t_past;
  s.t_future = t_future;
  const std::size_t T = t_past + t_future;
  s.coords.assign(T * agents * 2, 0.0);
  s.reference.assign(T * 2, 0.0);

  Vec2 ref{uniform(-inner, inner), uniform(-inner, inner)};
  Vec2 way{uniform(-inner, inner), uniform(-inner, inner)};
  Vec2 ref_v{0.0, 0.0};

  std::vector<double> radius(agents), phase(agents), rate(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    radius[i] = uniform(p.formation_min, p.formation_max);
    phase[i] = uniform(0.0, 2.0 * std::numbers::pi);
    rate[i] = uniform(-p.orbit_rate, p.orbit_rate);
  }
  auto slot = [&](std::size_t i, std::size_t t, Vec2 r) {
    const double a = phase[i] + rate[i] * static_cast<double>(t);
    return Vec2{r.x + radius[i] * std::cos(a), r.y + radius[i] * std::sin(a)};
  };

  std::vector<Vec2> pos(agents), vel(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    const Vec2 q = slot(i, 0, ref);
    pos[i] = {std::clamp(q.x, -L, L), std::clamp(q.y, -L, L)};
  }

  const double bound = 10.0 * L;
  for (std::size_t t = 0; t < T; ++t) {
    s.reference[t * 2] = ref.x;
    s.reference[t * 2 + 1] = ref.y;
    for (std::size_t i = 0; i < agents; ++i) s.set(t, i, pos[i]);
    if (t + 1 == T) break;

    // reference: steer toward the waypoint at constant speed with smoothed turns
    {
      double dx = way.x - ref.x, dy = way.y - ref.y;
      double d = std::hypot(dx, dy);
      if (d < 2.0) {
        way = {uniform(-inner, inner), uniform(-inner, inner)};
        dx = way.x - ref.x;
        dy = way.y - ref.y;
        d = std::max(std::hypot(dx, dy), 1e-9);
      }
      const Vec2 desired{p.ref_speed * dx / d, p.ref_speed * dy / d};
      ref_v.x += 0.3 * (desired.x - ref_v.x);
      ref_v.y += 0.3 * (desired.y - ref_v.y);
      ref.x += ref_v.x;
      ref.y += ref_v.y;
    }

    std::vector<Vec2> acc(agents);
    for (std::size_t i = 0; i < agents; ++i) {
      const Vec2 q = slot(i, t + 1, ref);
      Vec2 a{p.attraction * (q.x - pos[i].x) - p.damping * vel[i].x,
             p.attraction * (q.y - pos[i].y) - p.damping * vel[i].y};
      if (p.repulsion != 0.0) {
        for (std::size_t j = 0; j < agents; ++j) {
          if (j == i) continue;
          const double dx = pos[i].x - pos[j].x, dy = pos[i].y - pos[j].y;
          const double d = std::hypot(dx, dy);
          if (d < p.repulsion_range && d > 1e-9) {
            const double f = p.repulsion * (p.repulsion_range - d) / (p.repulsion_range * d);
            a.x += f * dx;
            a.y += f * dy;
          }
        }
      }
      if (pos[i].x > L) a.x -= p.wall * (pos[i].x - L);
      if (pos[i].x < -L) a.x -= p.wall * (pos[i].x + L);
      if (pos[i].y > L) a.y -= p.wall * (pos[i].y - L);
      if (pos[i].y < -L) a.y -= p.wall * (pos[i].y + L);
      if (p.noise > 0.0) {
        a.x += p.noise * gauss(rng);
        a.y += p.noise * gauss(rng);
      }
      acc[i] = a;
    }
    for (std::size_t i = 0; i < agents; ++i) {
      vel[i].x += acc[i].x;
      vel[i].y += acc[i].y;
      const double sp = std::hypot(vel[i].x, vel[i].y);
      if (sp > p.v_max) {
        vel[i].x *= p.v_max / sp;
        vel[i].y *= p.v_max / sp;
      }
      pos[i].x += vel[i].x;
      pos[i].y += vel[i].y;
      if (!(std::abs(pos[i].x) <= bound && std::abs(pos[i].y) <= bound)) {
        throw DataError("generator diverged in sequence " + s.id + " at step " + std::to_string(t + 1));
      }
    }
  }
  return s;
}

/// `count` sequences; sequence k uses a seed derived from (seed, k) so the
/// result does not depend on generation order.
inline std::vector<TrajectorySequence> generate_sequences(std::size_t count, std::size_t agents, std::size_t t_past,
                                                          std::size_t t_future, std::uint64_t seed,
                                                          const DynamicsParams& params = {}) {
  if (count == 0) throw ConfigError("generate_sequences: count must be >= 1");
  if (agents == 0) throw ConfigError("generate_sequences: need at least one agent");
  std::vector<TrajectorySequence> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(generate_sequence("seq" + std::to_string(k), agents, t_past, t_future, derive_seed(seed, k), params));
  }
  return out;
}

/// Deterministic shuffled split; returns (train, test) index lists.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t count,
                                                                                    double train_fraction,
                                                                                    std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
  if (n_train == 0 || n_train >= count) throw ConfigError("split leaves one side empty");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return {std::move(train), std::move(test)};
}

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& items, double train_fraction,
                                                        std::uint64_t seed) {
  auto [tr, te] = split_indices(items.size(), train_fraction, seed);
  std::vector<T> a, b;
  for (auto i : tr) a.push_back(items[i]);
  for (auto i : te) b.push_back(items[i]);
  return {std::move(a), std::move(b)};
}

}  // namespace gcvrnn

#pragma once

// White-box L-infinity evasion attacks on the feature network's softmax
// cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rails/dataset.hpp"
#include "rails/error.hpp"
#include "rails/featmap.hpp"
#include "rails/random.hpp"

namespace rails {

enum class AttackKind { fgsm, pgd };

struct AttackConfig {
  AttackKind kind = AttackKind::pgd;
  double epsilon = 60.0 / 255.0;
  int steps = 20;
  double step_size = 0.0;  // 0: 2.5 * epsilon / steps
  bool random_start = true;

  double effective_step() const { return step_size > 0.0 ? step_size : 2.5 * epsilon / std::max(steps, 1); }

  void validate() const {
    detail::require_config(epsilon >= 0.0 && std::isfinite(epsilon), "attack epsilon must be >= 0");
    if (kind == AttackKind::pgd) {
      detail::require_config(steps >= 1, "PGD needs at least one step");
      detail::require_config(step_size >= 0.0, "PGD step size must be positive");
    }
  }
};

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline FeatureVector fgsm(const FeatureVector& x, int y, const FeatureNetwork& net, double epsilon) {
  const auto g = net.loss_gradient(x, y);
  FeatureVector adv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) adv[i] = std::clamp(x[i] + epsilon * sign(g[i]), 0.0, 1.0);
  return adv;
}

// Projection onto {|v - x0|_inf <= eps} intersected with [0,1]^d.
inline void project(FeatureVector& v, const FeatureVector& x0, double epsilon) {
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::clamp(std::clamp(v[i], x0[i] - epsilon, x0[i] + epsilon), 0.0, 1.0);
}

inline FeatureVector pgd(const FeatureVector& x0, int y, const FeatureNetwork& net, double epsilon, int steps,
                         double step_size, RandomStream* start) {
  FeatureVector v = x0;
  if (start) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += start->uniform(-epsilon, epsilon);
    project(v, x0, epsilon);
  }
  for (int s = 0; s < steps; ++s) {
    const auto g = net.loss_gradient(v, y);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += step_size * sign(g[i]);
    project(v, x0, epsilon);
  }
  return v;
}

// Attacks one example; PGD's random start draws from the (seed, query) attack stream.
inline FeatureVector attack(const FeatureVector& x, int y, const FeatureNetwork& net, const AttackConfig& cfg,
                            std::uint64_t seed, std::uint64_t query) {
  cfg.validate();
  if (cfg.kind == AttackKind::fgsm) return fgsm(x, y, net, cfg.epsilon);
  auto rng = derive_stream(seed, query, Purpose::attack);
  return pgd(x, y, net, cfg.epsilon, cfg.steps, cfg.effective_step(), cfg.random_start ? &rng : nullptr);
}

// Attacked counterpart of every example, labels unchanged. Query ids are
// first_query + position.
inline Dataset attack_batch(const Dataset& clean, const FeatureNetwork& net, const AttackConfig& cfg,
                            std::uint64_t seed, std::uint64_t first_query = 0) {
  std::vector<LabeledExample> out;
  out.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i)
    out.push_back({attack(clean[i].x, clean[i].label, net, cfg, seed, first_query + i), clean[i].label});
  return Dataset(std::move(out), clean.class_count());
}

inline AttackKind parse_attack_kind(const std::string& s) {
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "pgd") return AttackKind::pgd;
  throw ConfigError("unknown attack kind '" + s + "' (expected fgsm or pgd)");
}

inline const char* to_string(AttackKind k) { return k == AttackKind::fgsm ? "fgsm" : "pgd"; }

}  // namespace rails

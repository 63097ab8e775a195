#pragma once

#include <cstdint>
#include <vector>

#include "rails/dataset.hpp"
#include "rails/error.hpp"
#include "rails/random.hpp"

namespace rails {

struct SynthSpec {
  int classes = 3;
  std::size_t per_class = 100;
  std::size_t dim = 16;
  double spread = 0.8;  // class centres uniform in 0.5 +- spread/2 per coordinate
  double noise = 0.05;  // isotropic Gaussian std-dev around the centre
  std::uint64_t seed = 0;
};

inline std::vector<FeatureVector> synth_centers(const SynthSpec& s) {
  const auto root = derive_stream(s.seed, 0, Purpose::synth);
  std::vector<FeatureVector> centers(static_cast<std::size_t>(s.classes), FeatureVector(s.dim));
  for (std::size_t c = 0; c < centers.size(); ++c) {
    auto rng = root.fork({0, c});
    for (auto& v : centers[c]) v = 0.5 + s.spread * (rng.uniform() - 0.5);
  }
  return centers;
}

// Gaussian blobs clipped to [0,1]^d. Example i has label i mod C.
inline Dataset synth_dataset(const SynthSpec& s) {
  detail::require_config(s.classes >= 1 && s.per_class >= 1 && s.dim >= 1, "synthetic sizes must be positive");
  detail::require_config(s.spread >= 0.0 && s.spread <= 1.0, "synthetic spread must lie in [0, 1]");
  detail::require_config(s.noise >= 0.0, "synthetic noise must be >= 0");
  const auto centers = synth_centers(s);
  const auto root = derive_stream(s.seed, 0, Purpose::synth);
  const std::size_t n = s.per_class * static_cast<std::size_t>(s.classes);
  std::vector<LabeledExample> ex(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = root.fork({1, i});
    ex[i].label = static_cast<int>(i % static_cast<std::size_t>(s.classes));
    ex[i].x = centers[static_cast<std::size_t>(ex[i].label)];
    if (s.noise > 0.0) {
      for (auto& v : ex[i].x) v += s.noise * rng.normal();
      clip_unit(ex[i].x);
    }
  }
  return Dataset(std::move(ex), s.classes);
}

}  // namespace rails

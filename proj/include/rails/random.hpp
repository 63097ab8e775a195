#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (seed, query, purpose, fork path, draw
// index), so results do not depend on evaluation order or thread layout.
// The block function is Philox4x32-10 (Salmon et al., SC'11). Distribution
// transforms are written out by hand because the std:: distributions are not
// specified bit-for-bit across standard library implementations.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>

namespace rails {

enum class Purpose : std::uint32_t {
  mutation = 1,
  selection = 2,
  crossover = 3,
  attack = 4,
  init = 5,      // weight initialisation
  shuffle = 6,   // minibatch order, dataset splits
  synth = 7,     // synthetic data generation
};

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ splitmix64(v + 0x632BE59BD9B4E019ull));
}

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

}  // namespace detail

// A reproducible stream of random draws. Cheap to copy; copies replay the
// same sequence from the point of copy.
class RandomStream {
 public:
  RandomStream(std::uint64_t key, std::uint64_t lane) : key_(key), lane_(lane) {}

  // Child stream addressed by an index path, e.g. fork({layer, generation, t}).
  // Independent of how many draws the parent has made.
  [[nodiscard]] RandomStream fork(std::initializer_list<std::uint64_t> path) const {
    std::uint64_t lane = lane_;
    for (auto v : path) lane = detail::hash_combine(lane, v);
    return RandomStream(key_, lane);
  }

  std::uint32_t next_u32() {
    if (buffered_ == 0) refill();
    return block_[4 - buffered_--];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // Box-Muller; the second variate is discarded so every call consumes a
  // fixed number of words.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Index drawn proportionally to `weights` (need not be normalised).
  // Returns weights.size() if the total weight is not positive.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) return weights.size();
    const double r = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = i;
      if (r < acc) return i;
    }
    return last_positive;  // r landed in the rounding slack at the top
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  std::uint64_t draws() const { return counter_; }

 private:
  void refill() {
    const detail::PhiloxCounter ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                    static_cast<std::uint32_t>(lane_), static_cast<std::uint32_t>(lane_ >> 32)};
    const detail::PhiloxKey key{static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)};
    block_ = detail::philox4x32_10(ctr, key);
    ++counter_;
    buffered_ = 4;
  }

  std::uint64_t key_;
  std::uint64_t lane_;
  std::uint64_t counter_ = 0;
  detail::PhiloxCounter block_{};
  int buffered_ = 0;
};

// Stream for one (seed, query, purpose) triple. Distinct purposes never share
// a lane, so e.g. extra mutation draws cannot shift the selection sequence.
inline RandomStream derive_stream(std::uint64_t seed, std::uint64_t query, Purpose purpose) {
  const std::uint64_t key = detail::hash_combine(detail::splitmix64(seed), query);
  const std::uint64_t lane = detail::hash_combine(0x5241494C53ull, static_cast<std::uint64_t>(purpose));
  return RandomStream(key, lane);
}

}  // namespace rails

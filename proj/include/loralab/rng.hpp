#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace loralab {

/// Counter-based deterministic generator. The i-th draw is a pure function
/// of (seed, stream label, i), so identically keyed streams yield identical
/// sequences regardless of when they are created.
///
/// Stream labels used by the lab: "init" (weight initialization), "data"
/// (dataset generation and splits), "batch" (mini-batch order), "pseudo"
/// (pseudo-feature sampling during recalibration).
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();
  /// Uniform in [0, 1), 53-bit resolution.
  double next_double();
  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double next_gaussian();
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t next_below(std::uint64_t bound);

  /// Independent child stream, deterministic in (parent key, index).
  Rng substream(std::uint64_t index) const;

  /// Deterministic Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const { return key_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace loralab

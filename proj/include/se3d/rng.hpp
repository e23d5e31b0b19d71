#pragma once

#include <cstdint>
#include <string_view>

namespace se3d {

/// Named splittable pseudo-random stream (xoshiro256** seeded through
/// splitmix64). split() derives an independent child stream from this
/// stream's identity seed, so splitting never disturbs draw positions.
/// All distributions are generated portably from raw 64-bit draws.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  Rng split(std::string_view name) const;
  Rng split(uint64_t index) const;
  uint64_t seed() const { return seed_; }

  uint64_t next_u64();
  double uniform();                     // [0, 1)
  double uniform(double a, double b);   // [a, b)
  double gaussian();                    // standard normal
  bool bernoulli(double p);
  int64_t next_below(int64_t n);        // [0, n), unbiased

  template <typename Vec>
  void shuffle(Vec& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = next_below(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  uint64_t seed_;
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace se3d

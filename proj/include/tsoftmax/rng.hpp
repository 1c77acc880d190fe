#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace tsoftmax {

/// xoshiro256++ (Blackman & Vigna). Satisfies UniformRandomBitGenerator.
class Xoshiro256pp {
public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed = 0) { seed_with(seed); }

  /// Expands a 64-bit seed into the 256-bit state with SplitMix64.
  void seed_with(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  bool operator==(const Xoshiro256pp&) const = default;

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

/// SplitMix64 finalizer; used to derive stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Identifies an independent random stream.
///
/// Streams are split by hashing (master_seed, purpose, replicate) through
/// SplitMix64 into the seed of a xoshiro256++ generator. Identical labels
/// replay identically; distinct labels give decorrelated sequences.
struct RngStream {
  std::uint64_t master_seed = 0;
  std::string purpose;
  std::uint64_t replicate = 0;

  RngStream child(std::string_view sub_purpose, std::uint64_t index = 0) const;
  std::uint64_t derived_seed() const;
};

/// Generator bound to one stream, with the draws the simulators need.
class Rng {
public:
  explicit Rng(const RngStream& stream) : engine_(stream.derived_seed()) {}
  explicit Rng(std::uint64_t raw_seed) : engine_(raw_seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>& out) {
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal();
  }

  Xoshiro256pp& engine() { return engine_; }

private:
  Xoshiro256pp engine_;
  boost::random::normal_distribution<double> normal_;
  boost::random::uniform_01<double> uniform_;
};

}  // namespace tsoftmax

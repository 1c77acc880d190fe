#include "tsoftmax/rng.hpp"

namespace tsoftmax {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void Xoshiro256pp::seed_with(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) {
    word = splitmix64(x);
    x += 0x9e3779b97f4a7c15ULL;
  }
  if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) s_[0] = 1;
}

namespace {

// FNV-1a; fixed so that stream labels hash identically across builds.
std::uint64_t hash_label(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream RngStream::child(std::string_view sub_purpose, std::uint64_t index) const {
  RngStream out = *this;
  out.purpose = purpose.empty() ? std::string(sub_purpose) : purpose + "/" + std::string(sub_purpose);
  out.replicate = splitmix64(replicate ^ splitmix64(index + 1));
  return out;
}

std::uint64_t RngStream::derived_seed() const {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ hash_label(purpose));
  h = splitmix64(h ^ replicate);
  return h;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Lemire's nearly divisionless method.
  std::uint64_t x = engine_();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = -n % n;
    while (low < threshold) {
      x = engine_();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace tsoftmax

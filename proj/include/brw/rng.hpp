#pragma once

// Deterministic random number streams.
//
// Every stochastic routine in this project draws from an explicit RngStream.
// Streams are derived from (master seed, module id, replicate index) through
// a counter-based key construction, so replicate k always sees the same
// stream no matter which worker thread runs it or in which order.  Forward
// tree simulation additionally derives one key per tree node, which makes a
// sampled tree a pure function of its root key (see forward_sim.cpp).

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace brw {

// Finalizer of the splitmix64 generator; also used as a 64-bit mixing step.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Key for stream `index` of module `module_id` under `master_seed`.
inline constexpr std::uint64_t derive_key(std::uint64_t master_seed,
                                          std::string_view module_id,
                                          std::uint64_t index) {
  std::uint64_t k = mix64(master_seed);
  k = mix64(k ^ fnv1a64(module_id));
  k = mix64(k ^ index);
  return k;
}

// Key of child `child_index` of a tree node with key `parent`.
inline constexpr std::uint64_t child_key(std::uint64_t parent, std::uint64_t child_index) {
  return mix64(parent ^ (0x9E3779B97F4A7C15ULL * (child_index + 1)));
}

// xoshiro256++ with helper draws.  State is seeded via splitmix64 from a
// single 64-bit key, so streams are cheap to construct per replicate.
class RngStream {
 public:
  RngStream() : RngStream(0) {}

  explicit RngStream(std::uint64_t key) {
    std::uint64_t sm = key;
    for (auto& w : s_) {
      sm += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = sm;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      w = z ^ (z >> 31);
    }
    if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) s_[0] = 1;
  }

  std::uint64_t next_u64() {
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

  // Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]; safe as a log argument.
  double uniform01_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  double exponential() { return -std::log(uniform01_pos()); }

  // Standard normal via Box-Muller; the spare draw is cached in the stream.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform01_pos();
    const double v = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline RngStream make_stream(std::uint64_t master_seed, std::string_view module_id,
                             std::uint64_t index) {
  return RngStream(derive_key(master_seed, module_id, index));
}

}  // namespace brw

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "jala/common.hpp"

namespace jala {

// Deterministic xoshiro256++ stream with named substream derivation.
// There is no global RNG anywhere in the library; every stochastic operation
// takes an Rng handle so runs are reproducible from a single seed.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256++";

  explicit Rng(std::uint64_t seed) : root_seed_(seed) { reseed(seed); }

  std::uint64_t root_seed() const { return root_seed_; }

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

  // [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    check(n > 0, "Rng::below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller, cosine branch only. Stateless apart from the counter, which
  // keeps serialization exact.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Derives an independent stream from the root seed and a label. Substreams
  // do not depend on how many draws were taken from the parent.
  Rng substream(std::string_view name) const {
    return Rng(splitmix(root_seed_ ^ fnv1a64(name)));
  }

  void save(std::ostream& os) const {
    write_u64(os, root_seed_);
    for (std::uint64_t w : s_) write_u64(os, w);
  }

  static Rng load(std::istream& is) {
    Rng r(0);
    r.root_seed_ = read_u64(is);
    for (auto& w : r.s_) w = read_u64(is);
    return r;
  }

  bool operator==(const Rng& o) const {
    return root_seed_ == o.root_seed_ && s_[0] == o.s_[0] && s_[1] == o.s_[1] &&
           s_[2] == o.s_[2] && s_[3] == o.s_[3];
  }

 private:
  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ull;
      w = splitmix(x);
    }
  }

  static std::uint64_t splitmix(std::uint64_t x) {
    std::uint64_t z = x + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  static void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
  }

  static std::uint64_t read_u64(std::istream& is) {
    char b[8];
    is.read(b, 8);
    check(is.good(), "Rng::load: truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::uint64_t root_seed_;
  std::uint64_t s_[4];
};

}  // namespace jala

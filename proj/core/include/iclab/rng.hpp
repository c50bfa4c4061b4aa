#pragma once

#include "iclab/common.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace iclab {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, used to turn stream names into tags.
constexpr std::uint64_t tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based seed derivation.
///
/// A sub-stream is addressed by the master seed followed by a path of
/// integer tags, e.g. (master, tag("risk"), trial). Each tag is folded in
/// with one splitmix64 round, so the seed of a stream depends only on its
/// address and never on how many other streams were opened before it.
/// This is what lets serial and multi-threaded runs produce the same data.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (std::uint64_t t : path) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(master, path));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return unit_(engine_); }
  double uniform(double a, double b) { return a + (b - a) * unit_(engine_); }
  bool coin() { return (engine_() >> 63) != 0; }

  Vec normal_vector(Eigen::Index d) {
    Vec v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace iclab

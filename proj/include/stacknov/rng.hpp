#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

namespace stacknov {

// Seeded RNG used everywhere. One instance per component so streams stay
// independent and runs are reproducible from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
  }

  bool coin() { return index(2) == 1; }

  // Uniformly distributed unit vector on S^2.
  Eigen::Vector3d unit_sphere() {
    Eigen::Vector3d v;
    do {
      v = Eigen::Vector3d(normal(0, 1), normal(0, 1), normal(0, 1));
    } while (v.norm() < 1e-12);
    return v.normalized();
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive keyed sub-seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed for a counter-keyed draw: deterministic in (seed, keys...), independent
// of consumption history. Lets paired evaluations of different objects see
// aligned random schedules at the same (episode, attempt) coordinates.
template <typename... Keys>
std::uint64_t keyed_seed(std::uint64_t seed, Keys... keys) {
  std::uint64_t h = mix64(seed);
  ((h = mix64(h ^ static_cast<std::uint64_t>(keys))), ...);
  return h;
}

}  // namespace stacknov

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "unlimitd/linalg.hpp"

namespace unlimitd {

/// Seeded 64-bit Mersenne Twister with the draws this library needs.
///
/// Distribution objects are created per call so the engine state alone fixes
/// every future draw; `state()` / `restore()` therefore capture the stream
/// completely.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  Vector normal_vector(Eigen::Index n, double stddev = 1.0);
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);
  Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi);

  std::mt19937_64& engine() { return engine_; }

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent child seed from (seed, stream, index) via splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

/// The three sampling streams used for task generation: which task, where its
/// inputs fall, and the observation noise. Keeping them apart means changing
/// e.g. the noise level does not perturb which tasks are drawn.
struct TaskStreams {
  Rng task;
  Rng input;
  Rng noise;

  explicit TaskStreams(std::uint64_t seed)
      : task(derive_seed(seed, 1)), input(derive_seed(seed, 2)), noise(derive_seed(seed, 3)) {}
};

}  // namespace unlimitd

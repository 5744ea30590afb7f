#pragma once

#include "codiff/types.hpp"

#include <cstdint>
#include <limits>
#include <random>

namespace codiff {

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t combine_keys(std::uint64_t a, std::uint64_t b) noexcept;

/// Counter-based generator: output n is a hash of (key, n). Copies are independent
/// replays of the same stream. A frozen generator returns zero normals and
/// mid-interval uniforms, which turns stochastic updates into their drift.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key, bool frozen = false) : key_(key), frozen_(frozen) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform draw strictly inside (0, 1).
  double uniform();
  double normal();
  Vec normal_vec(Eigen::Index n);
  bool frozen() const { return frozen_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool frozen_;
  std::normal_distribution<double> normal_{};
};

/// Purposes that get disjoint stream families.
enum class Stream : std::uint64_t {
  prior_init = 1,
  joint,
  contrastive,
  inner,
  resample,
  design_init,
  outcome,
  refresh,
  digs,
  evaluation,
  diffusion,
  observation_path,
  diagnostics,
};

/// Streams for one (purpose, step) pair; each particle id gets its own generator.
class StepRng {
 public:
  StepRng(std::uint64_t base_key, bool frozen) : base_(base_key), frozen_(frozen) {}

  /// Generator that yields zero noise for every particle.
  static StepRng frozen_noise() { return StepRng(0, true); }

  CounterRng particle(std::uint64_t id) const { return CounterRng(combine_keys(base_, id), frozen_); }
  bool frozen() const { return frozen_; }

 private:
  std::uint64_t base_;
  bool frozen_;
};

/// Root of all randomness in a run: every draw is a function of (seed, purpose, step, particle).
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  RngStreams derive(std::uint64_t salt) const { return RngStreams(combine_keys(mix64(seed_), salt)); }
  StepRng step(Stream purpose, std::uint64_t step) const;
  CounterRng stream(Stream purpose, std::uint64_t step, std::uint64_t id) const { return this->step(purpose, step).particle(id); }

 private:
  std::uint64_t seed_;
};

}  // namespace codiff

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedpoison {

using Rng = std::mt19937_64;

// Purpose tags keep independent random streams from colliding when they are
// derived from the same run seed.
enum class Stream : std::uint64_t {
  kInit = 1,
  kCorpus,
  kTestCorpus,
  kValidationCorpus,
  kPartition,
  kClientSampling,
  kSchedule,
  kClientTraining,
  kAttack,
  kDefenseNoise,
  kBackdoorTest,
};

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Deterministic seed derived from a run seed, a stream tag and any number of
// indices (round, client id, ...).
std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                          std::initializer_list<std::uint64_t> indices = {}) noexcept;

Rng make_rng(std::uint64_t seed, Stream stream,
             std::initializer_list<std::uint64_t> indices = {});

// Uniform in [0, 1) with 53 random bits.
double uniform01(Rng& rng) noexcept;

// Uniform in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

}  // namespace fedpoison

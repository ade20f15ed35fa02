#pragma once

// Robust aggregation rules and upload filters applied by the server.

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedpoison/metrics.hpp"
#include "fedpoison/model.hpp"
#include "fedpoison/rng.hpp"

namespace fedpoison {

struct NoDefense {};

struct NormClip {
  double bound = 0.5;
  // Rescale every update to norm `bound`, including small ones, instead of
  // projecting onto the L2 ball.
  bool literal = false;
};

struct WeakDp {
  double clip = 0.5;
  double sigma = 5e-4;  // noise standard deviation
};

struct CoordMedian {
  bool embedding_only = false;  // mean for the head parameters
};

struct MultiKrum {
  std::size_t byzantine = 1;  // f
  std::size_t select = 1;     // k, number of averaged updates
};

struct AccuracyCheck {
  double tolerance = 0.05;  // tau
};

using DefenseConfig =
    std::variant<NoDefense, NormClip, WeakDp, CoordMedian, MultiKrum, AccuracyCheck>;

std::string defense_name(const DefenseConfig& defense);

// Throws ConfigError. `clients_per_round` bounds the Krum parameters.
void validate_defense(const DefenseConfig& defense, std::size_t clients_per_round);

// Scales by min(1, bound / ||r||); literal mode scales by bound / ||r||.
// A zero residual is returned unchanged.
ParamVector norm_clip(ParamVector residual, double bound, bool literal = false);

// norm_clip followed by i.i.d. N(0, sigma^2) noise on every coordinate.
ParamVector weak_dp(ParamVector residual, double clip, double sigma, Rng& rng);

ParamVector mean_aggregate(std::span<const ParamVector> residuals);

// Per-coordinate median; an even count takes the mean of the middle two.
ParamVector coord_median(std::span<const ParamVector> residuals, bool embedding_only = false);

struct KrumResult {
  ParamVector aggregate;
  std::vector<double> scores;         // per input
  std::vector<std::size_t> selected;  // ascending input indices
};

// score(i) = sum of squared distances to the (n - f - 2) nearest other
// residuals; averages the k lowest-scoring residuals (ties by index).
KrumResult multi_krum(std::span<const ParamVector> residuals, std::size_t byzantine,
                      std::size_t select);

// True when accuracy(local) >= accuracy(global) - tolerance.
bool accuracy_check(const ModelParams& local, const ModelParams& global,
                    std::span<const Example> validation, double tolerance);

}  // namespace fedpoison

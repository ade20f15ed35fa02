#pragma once

// The server round loop: client sampling, adversary scheduling, local
// training, defended aggregation and the momentum-SGD server step.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedpoison/attack.hpp"
#include "fedpoison/data.hpp"
#include "fedpoison/defense.hpp"
#include "fedpoison/metrics.hpp"
#include "fedpoison/model.hpp"
#include "fedpoison/rng.hpp"
#include "fedpoison/training.hpp"

namespace fedpoison {

// Clients selected in `round`, ascending. Depends only on (seed, round).
std::vector<ClientId> sample_clients(std::size_t round, const FederationConfig& config);

enum class AdversarySampling {
  // One adversary every round(1 / (ratio * m)) rounds.
  kFixedFrequency,
  // Every sampled slot is adversarial with probability `ratio`.
  kRandom,
};

struct AdversarySchedule {
  AdversarySampling mode = AdversarySampling::kFixedFrequency;
  double ratio = 0.0;         // epsilon
  std::size_t interval = 0;   // f, fixed-frequency only; 0 when disabled
  std::vector<std::size_t> rounds;                // 1-based rounds with an adversary
  std::vector<std::vector<std::size_t>> slots;    // per round (index t-1): adversarial slots

  // Adversarial slot indices into the sorted sample of `round`.
  std::span<const std::size_t> slots_for(std::size_t round) const;
  std::size_t total_slots() const;
};

// Rounds are 1-based. Throws UnsupportedScheduleError when fixed-frequency
// sampling would need more than one adversary per round.
AdversarySchedule schedule_adversary(AdversarySampling mode, double ratio,
                                     std::size_t clients_per_round, std::size_t rounds, Rng& rng);

struct AggregationContext {
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::span<const Example> validation;  // used by accuracy checking
};

struct AggregationResult {
  ParamVector pseudo_gradient;
  std::vector<ClientId> rejected;  // ascending
};

// Applies per-residual filters and transforms, then combines the survivors
// in ascending client-id order. Throws AggregationEmptyError when every
// residual is rejected.
AggregationResult aggregate(const ModelParams& global, std::span<const Residual> residuals,
                            const DefenseConfig& defense, const AggregationContext& context);

struct ServerState {
  ParamVector momentum;
};

// momentum <- mu * momentum + pseudo_gradient; G <- G + eta * momentum.
ModelParams server_step(const ModelParams& global, const ParamVector& pseudo_gradient,
                        ServerState& state, double server_lr, double server_momentum);

struct FederationSetup {
  FederationConfig config;
  std::vector<ClientDataset> clients;
  ModelParams initial;
  std::vector<Example> validation;
  std::vector<Example> clean_test;
  std::vector<Example> backdoor_test;
  AttackConfig attack;
  AdversarySchedule schedule;
  DefenseConfig defense;
};

struct FederationResult {
  std::vector<RoundRecord> records;
  ModelParams final_model;
};

using RoundObserver = std::function<void(const RoundRecord&, const ModelParams& global)>;

// Runs config.rounds rounds. Throws NumericError if the global model stops
// being finite.
FederationResult run_federation(const FederationSetup& setup, const RoundObserver& observer = {});

}  // namespace fedpoison

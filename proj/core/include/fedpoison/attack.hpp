#pragma once

// Adversary-side local training: rare-embedding poisoning, Gradient
// Ensembling over past global models, and the baseline attacks it is
// compared against.

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "fedpoison/data.hpp"
#include "fedpoison/model.hpp"
#include "fedpoison/rng.hpp"
#include "fedpoison/training.hpp"

namespace fedpoison {

enum class AttackStrategy {
  kNone,
  kRareEmbedding,
  kRareEmbeddingEnsemble,  // rare embedding + Gradient Ensembling
  kEntireEmbedding,
  kDataPoisoning,
  kModelReplacement,
  kDistributed,  // DBA: disjoint trigger subsets per adversary
};

std::string strategy_name(AttackStrategy strategy);
AttackStrategy parse_strategy(const std::string& name);  // throws ConfigError

struct AttackConfig {
  AttackStrategy strategy = AttackStrategy::kNone;
  TriggerSpec trigger;
  std::size_t backdoor_steps = 400;
  double backdoor_lr = 50.0;
  std::size_t ensemble_size = 3;  // h
  double decay = 0.5;             // lambda
  double early_stop_acc = 0.99;
  double mix_ratio = 0.5;  // data poisoning share of each batch
  double scale = 10.0;     // model replacement gamma
  std::size_t dba_parts = 2;

  bool embedding_attack() const noexcept {
    return strategy == AttackStrategy::kRareEmbedding ||
           strategy == AttackStrategy::kRareEmbeddingEnsemble ||
           strategy == AttackStrategy::kEntireEmbedding;
  }

  void validate(std::size_t vocab_size = 0, std::size_t classes = 0) const;
};

// Bounded FIFO of parameter snapshots, oldest first. Pushing into a full
// queue drops the oldest entry.
class ModelQueue {
 public:
  explicit ModelQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(ModelParams snapshot);
  ModelParams& newest() { return snapshots_.back(); }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return snapshots_.size(); }
  bool empty() const noexcept { return snapshots_.empty(); }
  const ModelParams& operator[](std::size_t i) const { return snapshots_[i]; }

 private:
  std::size_t capacity_;
  std::deque<ModelParams> snapshots_;
};

// Weights of `count` ensembled gradients, newest first:
// decay, decay(1-decay), ..., decay(1-decay)^(k-1), (1-decay)^k with
// k = count - 1. They sum to 1.
std::vector<double> ensemble_weights(double decay, std::size_t count);

// Trigger-row gradient averaged over the newest min(h, |queue|) snapshots.
// Each snapshot contributes the gradient it would have with `current`'s
// trigger rows substituted in.
Gradient gradient_ensemble(const ModelQueue& queue, const ModelParams& current,
                           std::span<const Example> batch, std::span<const TokenId> triggers,
                           double decay, std::size_t h);

struct AdversaryOutcome {
  Residual residual;
  std::size_t backdoor_steps_taken = 0;
  double backdoor_batch_acc = 0.0;  // triggered-batch accuracy when phase 2 ended
};

// Main-task training exactly like a benign client (same `train_rng` draws),
// then backdoor training on triggered batches drawn with `attack_rng`.
// `past_globals` holds global models received at earlier adversary rounds.
AdversaryOutcome adversary_local_train(const ModelParams& global, const ClientDataset& data,
                                       const AttackConfig& attack,
                                       const FederationConfig& config,
                                       const ModelQueue& past_globals, Rng& train_rng,
                                       Rng& attack_rng);

// Single-phase training where ceil(mix_ratio * b) examples of every batch are
// triggered. Batch draws match benign training.
Residual data_poison_train(const ModelParams& global, const ClientDataset& data,
                           const AttackConfig& attack, const FederationConfig& config,
                           Rng& train_rng, Rng& attack_rng);

Residual model_replacement(Residual residual, double scale);

struct DistributedTriggers {
  std::vector<TriggerSpec> per_adversary;
  TriggerSpec global;  // union, used for evaluation
};

// Splits `pool` into disjoint trigger sets of base.count ids each.
DistributedTriggers dba_assign(std::size_t adversaries, std::span<const TokenId> pool,
                               const TriggerSpec& base);

}  // namespace fedpoison

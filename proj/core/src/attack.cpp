#include "fedpoison/attack.hpp"

#include <algorithm>
#include <cmath>

#include "fedpoison/error.hpp"
#include "fedpoison/metrics.hpp"

namespace fedpoison {

std::string strategy_name(AttackStrategy strategy) {
  switch (strategy) {
    case AttackStrategy::kNone: return "none";
    case AttackStrategy::kRareEmbedding: return "rare-embedding";
    case AttackStrategy::kRareEmbeddingEnsemble: return "rare-embedding-ge";
    case AttackStrategy::kEntireEmbedding: return "entire-embedding";
    case AttackStrategy::kDataPoisoning: return "data-poisoning";
    case AttackStrategy::kModelReplacement: return "model-replacement";
    case AttackStrategy::kDistributed: return "dba";
  }
  return "unknown";
}

AttackStrategy parse_strategy(const std::string& name) {
  for (AttackStrategy s :
       {AttackStrategy::kNone, AttackStrategy::kRareEmbedding,
        AttackStrategy::kRareEmbeddingEnsemble, AttackStrategy::kEntireEmbedding,
        AttackStrategy::kDataPoisoning, AttackStrategy::kModelReplacement,
        AttackStrategy::kDistributed}) {
    if (strategy_name(s) == name) return s;
  }
  throw ConfigError("unknown attack strategy '" + name + "'");
}

void AttackConfig::validate(std::size_t vocab_size, std::size_t classes) const {
  if (strategy == AttackStrategy::kNone) return;
  trigger.validate(vocab_size, classes);
  if (ensemble_size < 1) throw ConfigError("ensemble size must be at least 1");
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must lie in (0, 1)");
  if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) throw ConfigError("mix ratio must lie in (0, 1]");
  if (!(scale > 0.0)) throw ConfigError("model replacement scale must be positive");
  if (!(backdoor_lr > 0.0)) throw ConfigError("backdoor learning rate must be positive");
  if (!(early_stop_acc >= 0.0 && early_stop_acc <= 1.0)) {
    throw ConfigError("early stop accuracy must lie in [0, 1]");
  }
  if (strategy == AttackStrategy::kDistributed && dba_parts < 1) {
    throw ConfigError("dba needs at least one part");
  }
}

void ModelQueue::push(ModelParams snapshot) {
  if (capacity_ == 0) return;
  if (snapshots_.size() == capacity_) snapshots_.pop_front();
  snapshots_.push_back(std::move(snapshot));
}

std::vector<double> ensemble_weights(double decay, std::size_t count) {
  std::vector<double> weights;
  if (count == 0) return weights;
  double carry = 1.0;  // (1 - decay)^j
  for (std::size_t j = 0; j + 1 < count; ++j) {
    weights.push_back(decay * carry);
    carry *= 1.0 - decay;
  }
  weights.push_back(carry);
  return weights;
}

namespace {

void copy_rows(const ModelParams& from, ModelParams& to, std::span<const TokenId> rows) {
  for (TokenId row : rows) {
    const auto src = from.weights.embedding_row(row);
    std::copy(src.begin(), src.end(), to.weights.embedding_row(row).begin());
  }
}

void project_rows(ModelParams& params, std::span<const TokenId> rows, double bound) {
  for (TokenId row : rows) {
    auto values = params.weights.embedding_row(row);
    double sq = 0.0;
    for (double x : values) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > bound) {
      const double scale = bound / norm;
      for (double& x : values) x *= scale;
    }
  }
}

std::vector<Example> triggered_batch(std::span<const Example> data, const AttackConfig& attack,
                                     std::size_t batch_size, Rng& rng) {
  std::vector<Example> batch = sample_batch(data, batch_size, rng);
  for (Example& e : batch) e = insert_triggers(e, attack.trigger, rng);
  return batch;
}

Residual difference(const ModelParams& local, const ModelParams& global, ClientId id) {
  return Residual{local.weights - global.weights, id, false};
}

}  // namespace

Gradient gradient_ensemble(const ModelQueue& queue, const ModelParams& current,
                           std::span<const Example> batch, std::span<const TokenId> triggers,
                           double decay, std::size_t h) {
  if (queue.empty()) throw Error("gradient ensemble needs at least one snapshot");
  if (h < 1) throw ConfigError("ensemble size must be at least 1");
  const std::size_t count = std::min(h, queue.size());
  const std::vector<double> weights = ensemble_weights(decay, count);

  Gradient out(current.shape());
  for (std::size_t j = 0; j < count; ++j) {
    ModelParams snapshot = queue[queue.size() - 1 - j];
    copy_rows(current, snapshot, triggers);
    out.add_scaled(restricted_grad(snapshot, batch, triggers), weights[j]);
  }
  return out;
}

AdversaryOutcome adversary_local_train(const ModelParams& global, const ClientDataset& data,
                                       const AttackConfig& attack,
                                       const FederationConfig& config,
                                       const ModelQueue& past_globals, Rng& train_rng,
                                       Rng& attack_rng) {
  if (!attack.embedding_attack()) {
    throw ConfigError("adversary_local_train handles embedding attacks only, got " +
                      strategy_name(attack.strategy));
  }
  attack.trigger.validate(global.shape().vocab, global.shape().classes);

  AdversaryOutcome outcome;
  if (data.examples.empty()) {
    outcome.residual = Residual{ParamVector(global.shape()), data.client_id, true};
    return outcome;
  }

  ModelParams local = global;
  sgd_train(local, data.examples, config, train_rng);

  const std::span<const TokenId> triggers = attack.trigger.trigger_ids;
  const bool ensemble = attack.strategy == AttackStrategy::kRareEmbeddingEnsemble;
  ModelQueue working(attack.ensemble_size);
  if (ensemble) {
    const std::size_t keep =
        std::min(past_globals.size(), attack.ensemble_size >= 2 ? attack.ensemble_size - 2 : 0);
    for (std::size_t i = past_globals.size() - keep; i < past_globals.size(); ++i) {
      working.push(past_globals[i]);
    }
    working.push(local);  // after main-task training
    working.push(local);  // live poisoned model, refreshed every step
  }

  for (std::size_t step = 0; step < attack.backdoor_steps; ++step) {
    const std::vector<Example> batch =
        triggered_batch(data.examples, attack, config.batch_size, attack_rng);
    outcome.backdoor_batch_acc = accuracy(local, batch);
    if (outcome.backdoor_batch_acc >= attack.early_stop_acc) break;

    Gradient grad;
    switch (attack.strategy) {
      case AttackStrategy::kRareEmbedding:
        grad = restricted_grad(local, batch, triggers);
        break;
      case AttackStrategy::kRareEmbeddingEnsemble:
        copy_rows(local, working.newest(), triggers);
        grad = gradient_ensemble(working, local, batch, triggers, attack.decay,
                                 attack.ensemble_size);
        break;
      default: {
        grad = loss_and_grad(local, batch).grad;
        auto values = grad.values();
        std::fill(values.begin() + static_cast<std::ptrdiff_t>(global.shape().embedding_size()),
                  values.end(), 0.0);
        break;
      }
    }
    local.weights.add_scaled(grad, -attack.backdoor_lr);
    if (attack.trigger.norm_bound) project_rows(local, triggers, *attack.trigger.norm_bound);
    ++outcome.backdoor_steps_taken;
  }

  outcome.residual = difference(local, global, data.client_id);
  return outcome;
}

Residual data_poison_train(const ModelParams& global, const ClientDataset& data,
                           const AttackConfig& attack, const FederationConfig& config,
                           Rng& train_rng, Rng& attack_rng) {
  if (data.examples.empty()) return Residual{ParamVector(global.shape()), data.client_id, true};
  ModelParams local = global;
  for (std::size_t step = 0; step < config.local_steps; ++step) {
    std::vector<Example> batch = sample_batch(data.examples, config.batch_size, train_rng);
    const auto poisoned = static_cast<std::size_t>(
        std::ceil(attack.mix_ratio * static_cast<double>(batch.size())));
    for (std::size_t i = 0; i < std::min(poisoned, batch.size()); ++i) {
      batch[i] = insert_triggers(batch[i], attack.trigger, attack_rng);
    }
    local.weights.add_scaled(loss_and_grad(local, batch).grad, -config.client_lr);
  }
  return difference(local, global, data.client_id);
}

Residual model_replacement(Residual residual, double scale) {
  if (!(scale > 0.0)) throw ConfigError("model replacement scale must be positive");
  residual.delta *= scale;
  return residual;
}

DistributedTriggers dba_assign(std::size_t adversaries, std::span<const TokenId> pool,
                               const TriggerSpec& base) {
  if (adversaries == 0) throw ConfigError("dba needs at least one adversary");
  const std::size_t per = base.count;
  if (per == 0) throw ConfigError("dba needs a positive per-adversary trigger count");
  if (pool.size() < adversaries * per) {
    throw ConfigError("trigger pool of " + std::to_string(pool.size()) + " ids is too small for " +
                      std::to_string(adversaries) + " adversaries x " + std::to_string(per));
  }
  DistributedTriggers out;
  for (std::size_t k = 0; k < adversaries; ++k) {
    TriggerSpec spec = base;
    spec.trigger_ids.assign(pool.begin() + static_cast<std::ptrdiff_t>(k * per),
                            pool.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
    spec.count = per;
    out.per_adversary.push_back(std::move(spec));
  }
  out.global = base;
  out.global.trigger_ids.assign(pool.begin(),
                                pool.begin() + static_cast<std::ptrdiff_t>(adversaries * per));
  out.global.count = adversaries * per;
  return out;
}

}  // namespace fedpoison

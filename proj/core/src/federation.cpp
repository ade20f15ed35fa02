#include "fedpoison/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <thread>

#include "fedpoison/error.hpp"

namespace fedpoison {

void FederationConfig::validate() const {
  if (clients < 1) throw ConfigError("federation needs at least one client");
  if (clients_per_round < 1 || clients_per_round > clients) {
    throw ConfigError("clients_per_round must lie in [1, clients]");
  }
  if (!(server_lr > 0.0)) throw ConfigError("server learning rate must be positive");
  if (!(server_momentum >= 0.0 && server_momentum < 1.0)) {
    throw ConfigError("server momentum must lie in [0, 1)");
  }
  if (!(client_lr > 0.0)) throw ConfigError("client learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
}

std::vector<Example> sample_batch(std::span<const Example> data, std::size_t batch_size, Rng& rng) {
  if (batch_size >= data.size()) return {data.begin(), data.end()};
  std::vector<std::size_t> index(data.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::vector<Example> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + uniform_index(rng, index.size() - i);
    std::swap(index[i], index[j]);
    batch.push_back(data[index[i]]);
  }
  return batch;
}

void sgd_train(ModelParams& params, std::span<const Example> data, const FederationConfig& config,
               Rng& rng) {
  if (data.empty()) return;
  for (std::size_t step = 0; step < config.local_steps; ++step) {
    const std::vector<Example> batch = sample_batch(data, config.batch_size, rng);
    params.weights.add_scaled(loss_and_grad(params, batch).grad, -config.client_lr);
  }
}

Residual local_train_benign(const ModelParams& global, const ClientDataset& data,
                            const FederationConfig& config, Rng& rng) {
  if (data.examples.empty()) return Residual{ParamVector(global.shape()), data.client_id, true};
  ModelParams local = global;
  sgd_train(local, data.examples, config, rng);
  return Residual{local.weights - global.weights, data.client_id, false};
}

std::vector<ClientId> sample_clients(std::size_t round, const FederationConfig& config) {
  Rng rng = make_rng(config.seed, Stream::kClientSampling, {round});
  std::vector<ClientId> ids(config.clients);
  std::iota(ids.begin(), ids.end(), ClientId{0});
  for (std::size_t i = 0; i < config.clients_per_round; ++i) {
    const std::size_t j = i + uniform_index(rng, ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(config.clients_per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::span<const std::size_t> AdversarySchedule::slots_for(std::size_t round) const {
  if (round == 0 || round > slots.size()) return {};
  return slots[round - 1];
}

std::size_t AdversarySchedule::total_slots() const {
  std::size_t total = 0;
  for (const auto& s : slots) total += s.size();
  return total;
}

AdversarySchedule schedule_adversary(AdversarySampling mode, double ratio,
                                     std::size_t clients_per_round, std::size_t rounds, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("adversary ratio must lie in [0, 1]");
  if (clients_per_round < 1) throw ConfigError("clients_per_round must be positive");

  AdversarySchedule schedule;
  schedule.mode = mode;
  schedule.ratio = ratio;
  schedule.slots.resize(rounds);
  if (ratio == 0.0) return schedule;

  const double expected = ratio * static_cast<double>(clients_per_round);
  if (mode == AdversarySampling::kFixedFrequency) {
    if (expected > 1.0 + 1e-12) {
      throw UnsupportedScheduleError(
          "fixed-frequency sampling supports at most one adversary per round (ratio * m <= 1)");
    }
    schedule.interval = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / expected)));
    for (std::size_t t = schedule.interval; t <= rounds; t += schedule.interval) {
      schedule.rounds.push_back(t);
      schedule.slots[t - 1].push_back(uniform_index(rng, clients_per_round));
    }
    return schedule;
  }

  for (std::size_t t = 1; t <= rounds; ++t) {
    for (std::size_t slot = 0; slot < clients_per_round; ++slot) {
      if (uniform01(rng) < ratio) schedule.slots[t - 1].push_back(slot);
    }
    if (!schedule.slots[t - 1].empty()) schedule.rounds.push_back(t);
  }
  return schedule;
}

AggregationResult aggregate(const ModelParams& global, std::span<const Residual> residuals,
                            const DefenseConfig& defense, const AggregationContext& context) {
  std::vector<const Residual*> ordered;
  ordered.reserve(residuals.size());
  for (const Residual& r : residuals) {
    if (r.delta.shape() != global.shape()) throw Error("residual shape does not match the model");
    ordered.push_back(&r);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const Residual* a, const Residual* b) { return a->client_id < b->client_id; });

  AggregationResult result;
  std::vector<ParamVector> kept;
  kept.reserve(ordered.size());
  for (const Residual* r : ordered) {
    if (const auto* clip = std::get_if<NormClip>(&defense)) {
      kept.push_back(norm_clip(r->delta, clip->bound, clip->literal));
    } else if (const auto* dp = std::get_if<WeakDp>(&defense)) {
      Rng rng = make_rng(context.seed, Stream::kDefenseNoise, {context.round, r->client_id});
      kept.push_back(weak_dp(r->delta, dp->clip, dp->sigma, rng));
    } else if (const auto* check = std::get_if<AccuracyCheck>(&defense)) {
      const ModelParams local{global.weights + r->delta, global.pooling};
      if (accuracy_check(local, global, context.validation, check->tolerance)) {
        kept.push_back(r->delta);
      } else {
        result.rejected.push_back(r->client_id);
      }
    } else {
      kept.push_back(r->delta);
    }
  }
  if (kept.empty()) throw AggregationEmptyError("every residual was rejected");

  if (const auto* median = std::get_if<CoordMedian>(&defense)) {
    result.pseudo_gradient = coord_median(kept, median->embedding_only);
  } else if (const auto* krum = std::get_if<MultiKrum>(&defense)) {
    result.pseudo_gradient = multi_krum(kept, krum->byzantine, krum->select).aggregate;
  } else {
    result.pseudo_gradient = mean_aggregate(kept);
  }
  return result;
}

ModelParams server_step(const ModelParams& global, const ParamVector& pseudo_gradient,
                        ServerState& state, double server_lr, double server_momentum) {
  if (pseudo_gradient.shape() != global.shape()) throw Error("pseudo-gradient shape mismatch");
  if (state.momentum.shape() != global.shape()) state.momentum = ParamVector(global.shape());
  state.momentum *= server_momentum;
  state.momentum += pseudo_gradient;
  ModelParams next = global;
  next.weights.add_scaled(state.momentum, server_lr);
  return next;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

struct SlotJob {
  ClientId client = 0;
  bool adversary = false;
  std::size_t dba_part = 0;
};

Residual train_adversary(const FederationSetup& setup, const SlotJob& job,
                         const ModelParams& global, const ModelQueue& past_globals,
                         std::size_t round) {
  const FederationConfig& config = setup.config;
  const ClientDataset& data = setup.clients[job.client];
  Rng train_rng = make_rng(config.seed, Stream::kClientTraining, {round, job.client});
  Rng attack_rng = make_rng(config.seed, Stream::kAttack, {round, job.client});
  const AttackConfig& attack = setup.attack;
  switch (attack.strategy) {
    case AttackStrategy::kRareEmbedding:
    case AttackStrategy::kRareEmbeddingEnsemble:
    case AttackStrategy::kEntireEmbedding:
      return adversary_local_train(global, data, attack, config, past_globals, train_rng,
                                   attack_rng)
          .residual;
    case AttackStrategy::kDataPoisoning:
      return data_poison_train(global, data, attack, config, train_rng, attack_rng);
    case AttackStrategy::kModelReplacement:
      return model_replacement(
          data_poison_train(global, data, attack, config, train_rng, attack_rng), attack.scale);
    case AttackStrategy::kDistributed: {
      AttackConfig part = attack;
      const auto pool = attack.trigger.trigger_ids;
      part.trigger = dba_assign(attack.dba_parts, pool, attack.trigger).per_adversary[job.dba_part];
      return data_poison_train(global, data, part, config, train_rng, attack_rng);
    }
    case AttackStrategy::kNone:
      break;
  }
  return local_train_benign(global, data, config, train_rng);
}

}  // namespace

FederationResult run_federation(const FederationSetup& setup, const RoundObserver& observer) {
  const FederationConfig& config = setup.config;
  config.validate();
  if (setup.clients.size() != config.clients) {
    throw ConfigError("expected " + std::to_string(config.clients) + " client datasets, got " +
                      std::to_string(setup.clients.size()));
  }
  if (setup.clean_test.empty()) throw EmptyEvaluationError("clean test set is empty");
  validate_defense(setup.defense, config.clients_per_round);
  const bool attacking = setup.attack.strategy != AttackStrategy::kNone;
  if (attacking) setup.attack.validate(setup.initial.shape().vocab, setup.initial.shape().classes);

  FederationResult result;
  result.final_model = setup.initial;
  ModelParams& global = result.final_model;
  ServerState server{ParamVector(global.shape())};
  const std::size_t history =
      setup.attack.ensemble_size >= 2 ? setup.attack.ensemble_size - 2 : 0;
  ModelQueue past_globals(history);
  std::size_t adversary_appearances = 0;

  for (std::size_t t = 1; t <= config.rounds; ++t) {
    const std::vector<ClientId> sampled = sample_clients(t, config);
    std::vector<SlotJob> jobs(sampled.size());
    for (std::size_t s = 0; s < sampled.size(); ++s) jobs[s].client = sampled[s];
    bool adversary_round = false;
    if (attacking) {
      for (std::size_t slot : setup.schedule.slots_for(t)) {
        if (slot >= jobs.size()) continue;
        jobs[slot].adversary = true;
        jobs[slot].dba_part = adversary_appearances++ % std::max<std::size_t>(1, setup.attack.dba_parts);
        adversary_round = true;
      }
    }

    // Gradient Ensembling keeps the global models adversaries received.
    std::optional<ModelParams> received;
    if (adversary_round && past_globals.capacity() > 0) received = global;

    std::vector<Residual> residuals(jobs.size());
    parallel_for(jobs.size(), config.threads, [&](std::size_t s) {
      const SlotJob& job = jobs[s];
      if (job.adversary) {
        residuals[s] = train_adversary(setup, job, global, past_globals, t);
      } else {
        Rng rng = make_rng(config.seed, Stream::kClientTraining, {t, job.client});
        residuals[s] = local_train_benign(global, setup.clients[job.client], config, rng);
      }
    });

    RoundRecord record;
    record.round = t;
    record.adversary_round = adversary_round;
    try {
      const AggregationResult agg = aggregate(global, residuals, setup.defense,
                                              AggregationContext{config.seed, t, setup.validation});
      record.defense_rejections = agg.rejected.size();
      for (ClientId id : agg.rejected) {
        for (const SlotJob& job : jobs) {
          if (job.client == id && job.adversary) ++record.adversary_rejections;
        }
      }
      global = server_step(global, agg.pseudo_gradient, server, config.server_lr,
                           config.server_momentum);
    } catch (const AggregationEmptyError&) {
      record.defense_rejections = residuals.size();
      for (const SlotJob& job : jobs) record.adversary_rejections += job.adversary ? 1 : 0;
    }
    if (!global.weights.all_finite()) throw NumericError("global model is not finite", t);

    if (received) past_globals.push(std::move(*received));

    record.clean_acc = accuracy(global, setup.clean_test);
    record.backdoor_acc =
        setup.backdoor_test.empty() ? 0.0 : accuracy(global, setup.backdoor_test);
    if (observer) observer(record, global);
    result.records.push_back(record);
  }
  return result;
}

}  // namespace fedpoison

#pragma once

// Client-side pieces of the round loop shared by benign and adversarial
// clients.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedpoison/data.hpp"
#include "fedpoison/model.hpp"
#include "fedpoison/rng.hpp"

namespace fedpoison {

struct FederationConfig {
  std::size_t clients = 100;          // N
  std::size_t clients_per_round = 10; // m
  std::size_t rounds = 100;           // T
  double server_lr = 1.0;             // eta
  double server_momentum = 0.9;
  double client_lr = 1.0;
  std::size_t local_steps = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;  // throws ConfigError
};

// L_t - G_{t-1} uploaded by one client.
struct Residual {
  ParamVector delta;
  ClientId client_id = 0;
  bool empty_data = false;  // client had no examples; delta is zero
};

// The whole dataset when batch_size >= its size, otherwise batch_size
// examples drawn without replacement.
std::vector<Example> sample_batch(std::span<const Example> data, std::size_t batch_size, Rng& rng);

// Plain mini-batch SGD on all parameters, in place. No weight decay, so
// embedding rows of tokens absent from `data` are never modified.
void sgd_train(ModelParams& params, std::span<const Example> data, const FederationConfig& config,
               Rng& rng);

Residual local_train_benign(const ModelParams& global, const ClientDataset& data,
                            const FederationConfig& config, Rng& rng);

}  // namespace fedpoison

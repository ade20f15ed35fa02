#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedpoison/model.hpp"
#include "fedpoison/rng.hpp"

namespace fedpoison {

using ClientId = std::uint32_t;

struct Vocabulary {
  std::vector<std::uint64_t> counts;  // occurrences per token id

  std::size_t size() const noexcept { return counts.size(); }
};

Vocabulary count_tokens(std::size_t vocab_size, std::span<const Example> examples);

struct SynthConfig {
  std::size_t vocab = 500;
  std::size_t classes = 4;
  std::size_t examples = 4000;
  std::size_t seq_len = 20;
  // Probability that a token is drawn from its class band instead of the
  // shared background distribution.
  double skew = 0.25;
  // Background token ranks follow p(r) ~ (r + 1)^-zipf_exponent.
  double zipf_exponent = 1.5;

  void validate() const;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<Example> examples;
};

// Class-conditional synthetic corpus. The class bands depend only on
// (vocab, classes), so corpora drawn with different seeds share one task.
Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed);

// Token ids of the preferred band of `label`.
std::vector<TokenId> class_band(std::size_t vocab, std::size_t classes, Label label);

// Line format: "<label>\t<id> <id> ...". Blank lines and lines starting with
// '#' are skipped. Errors carry the 1-based line number.
std::vector<Example> load_corpus(const std::filesystem::path& path, std::size_t vocab_size,
                                 std::size_t classes, std::size_t max_length = 0);

// The k ids with the smallest counts, ties broken by ascending id.
std::vector<TokenId> select_rare_tokens(const Vocabulary& vocab, std::size_t k);

struct ClientDataset {
  ClientId client_id = 0;
  std::vector<Example> examples;
};

// Per class, shares across clients ~ Dirichlet(alpha, ..., alpha). Clients
// left empty receive one example from the currently largest client.
std::vector<ClientDataset> dirichlet_partition(std::span<const Example> examples,
                                               std::size_t clients, double alpha,
                                               std::uint64_t seed);

enum class PositionMode {
  kUniformInRange,
  kFixedStart,
};

struct TriggerSpec {
  std::vector<TokenId> trigger_ids;
  std::size_t count = 3;     // triggers inserted per input
  std::size_t range_lo = 0;  // insertion indices in [range_lo, range_hi)
  std::size_t range_hi = 30;
  PositionMode position_mode = PositionMode::kUniformInRange;
  std::size_t start = 0;  // first index for kFixedStart
  std::optional<double> norm_bound;
  Label target_label = 0;

  // Throws ConfigError. Pass vocab_size / classes to also range-check ids.
  void validate(std::size_t vocab_size = 0, std::size_t classes = 0) const;
};

Example insert_triggers(const Example& example, const TriggerSpec& spec, Rng& rng);

// Drops examples already labelled with the target class and triggers the rest.
// Throws EmptyEvaluationError when nothing survives.
std::vector<Example> make_backdoor_testset(std::span<const Example> test, const TriggerSpec& spec,
                                           Rng& rng);

}  // namespace fedpoison

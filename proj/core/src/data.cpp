#include "fedpoison/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <string_view>

#include "fedpoison/error.hpp"

namespace fedpoison {

Vocabulary count_tokens(std::size_t vocab_size, std::span<const Example> examples) {
  Vocabulary vocab{std::vector<std::uint64_t>(vocab_size, 0)};
  for (const Example& example : examples) {
    for (TokenId token : example.tokens) {
      if (token >= vocab_size) {
        throw OutOfVocabularyError("token id " + std::to_string(token) + " outside vocabulary");
      }
      ++vocab.counts[token];
    }
  }
  return vocab;
}

void SynthConfig::validate() const {
  if (classes < 2) throw ConfigError("synthetic corpus needs at least 2 classes");
  if (vocab < classes * 10) throw ConfigError("vocab size must be at least 10 * classes");
  if (seq_len == 0) throw ConfigError("sequence length must be positive");
  if (!(skew > 0.0 && skew <= 1.0)) throw ConfigError("skew must lie in (0, 1]");
  if (!(zipf_exponent > 0.0)) throw ConfigError("zipf exponent must be positive");
}

std::vector<TokenId> class_band(std::size_t vocab, std::size_t classes, Label label) {
  const std::size_t width = vocab / (10 * classes);
  const std::size_t begin = vocab / 10 + static_cast<std::size_t>(label) * width;
  std::vector<TokenId> band(width);
  std::iota(band.begin(), band.end(), static_cast<TokenId>(begin));
  return band;
}

Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.examples == 0) throw EmptyCorpusError("synthetic corpus with zero examples");

  std::vector<double> cdf(config.vocab);
  double total = 0.0;
  for (std::size_t r = 0; r < config.vocab; ++r) {
    total += std::pow(static_cast<double>(r + 1), -config.zipf_exponent);
    cdf[r] = total;
  }
  for (double& c : cdf) c /= total;
  cdf.back() = 1.0;

  std::vector<std::vector<TokenId>> bands;
  for (std::size_t c = 0; c < config.classes; ++c) {
    bands.push_back(class_band(config.vocab, config.classes, static_cast<Label>(c)));
  }

  Rng rng = make_rng(seed, Stream::kCorpus);
  Corpus corpus;
  corpus.examples.reserve(config.examples);
  for (std::size_t i = 0; i < config.examples; ++i) {
    Example example;
    example.label = static_cast<Label>(i % config.classes);
    example.tokens.reserve(config.seq_len);
    const auto& band = bands[example.label];
    for (std::size_t k = 0; k < config.seq_len; ++k) {
      if (uniform01(rng) < config.skew) {
        example.tokens.push_back(band[uniform_index(rng, band.size())]);
      } else {
        const double u = uniform01(rng);
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        example.tokens.push_back(static_cast<TokenId>(
            std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), config.vocab - 1)));
      }
    }
    corpus.examples.push_back(std::move(example));
  }
  std::shuffle(corpus.examples.begin(), corpus.examples.end(), rng);
  corpus.vocab = count_tokens(config.vocab, corpus.examples);
  return corpus;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_uint(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::vector<Example> load_corpus(const std::filesystem::path& path, std::size_t vocab_size,
                                 std::size_t classes, std::size_t max_length) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file " + path.string());

  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& message) {
    throw ConfigError(path.string() + ": " + message, line_no);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto tab = view.find('\t');
    if (tab == std::string_view::npos) fail("expected '<label>\\t<token ids>'");

    Example example;
    if (!parse_uint(trim(view.substr(0, tab)), example.label)) fail("malformed label");
    if (example.label >= classes) fail("label " + std::to_string(example.label) + " >= " +
                                       std::to_string(classes) + " classes");
    std::string_view rest = view.substr(tab + 1);
    while (!rest.empty()) {
      const auto space = rest.find(' ');
      const std::string_view field = rest.substr(0, space);
      rest = space == std::string_view::npos ? std::string_view{} : rest.substr(space + 1);
      if (field.empty()) continue;
      TokenId token = 0;
      if (!parse_uint(field, token)) fail("malformed token id '" + std::string(field) + "'");
      if (token >= vocab_size) fail("token id " + std::to_string(token) + " >= vocab size " +
                                    std::to_string(vocab_size));
      example.tokens.push_back(token);
    }
    if (example.tokens.empty()) fail("example has no tokens");
    if (max_length != 0 && example.tokens.size() > max_length) {
      fail("example longer than " + std::to_string(max_length) + " tokens");
    }
    examples.push_back(std::move(example));
  }
  if (examples.empty()) throw EmptyCorpusError("corpus file " + path.string() + " is empty");
  return examples;
}

std::vector<TokenId> select_rare_tokens(const Vocabulary& vocab, std::size_t k) {
  std::vector<TokenId> ids(vocab.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](TokenId a, TokenId b) {
                      return vocab.counts[a] != vocab.counts[b] ? vocab.counts[a] < vocab.counts[b]
                                                                : a < b;
                    });
  ids.resize(k);
  return ids;
}

std::vector<ClientDataset> dirichlet_partition(std::span<const Example> examples,
                                               std::size_t clients, double alpha,
                                               std::uint64_t seed) {
  if (clients == 0) throw ConfigError("partition needs at least one client");
  if (!(alpha > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  if (examples.size() < clients) {
    throw InfeasiblePartitionError(std::to_string(examples.size()) + " examples cannot cover " +
                                   std::to_string(clients) + " clients");
  }

  Rng rng = make_rng(seed, Stream::kPartition);
  Label max_label = 0;
  for (const Example& e : examples) max_label = std::max(max_label, e.label);

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < examples.size(); ++i) by_class[examples[i].label].push_back(i);

  std::vector<std::vector<std::size_t>> assigned(clients);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> shares(clients);
  for (auto& indices : by_class) {
    if (indices.empty()) continue;
    std::shuffle(indices.begin(), indices.end(), rng);
    double total = 0.0;
    for (double& s : shares) {
      s = gamma(rng);
      total += s;
    }
    if (!(total > 0.0)) {
      // Every gamma draw underflowed (tiny alpha): all mass on one client.
      std::fill(shares.begin(), shares.end(), 0.0);
      shares[uniform_index(rng, clients)] = 1.0;
      total = 1.0;
    }
    const std::size_t n = indices.size();
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      cumulative += shares[k] / total;
      std::size_t end = k + 1 == clients
                            ? n
                            : std::min(n, static_cast<std::size_t>(std::floor(cumulative * n)));
      end = std::max(end, begin);
      for (std::size_t i = begin; i < end; ++i) assigned[k].push_back(indices[i]);
      begin = end;
    }
  }

  for (std::size_t k = 0; k < clients; ++k) {
    if (!assigned[k].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t j = 1; j < clients; ++j) {
      if (assigned[j].size() > assigned[donor].size()) donor = j;
    }
    assigned[k].push_back(assigned[donor].back());
    assigned[donor].pop_back();
  }

  std::vector<ClientDataset> out(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    out[k].client_id = static_cast<ClientId>(k);
    out[k].examples.reserve(assigned[k].size());
    for (std::size_t i : assigned[k]) out[k].examples.push_back(examples[i]);
  }
  return out;
}

void TriggerSpec::validate(std::size_t vocab_size, std::size_t classes) const {
  if (trigger_ids.empty()) throw ConfigError("trigger set is empty");
  const std::set<TokenId> unique(trigger_ids.begin(), trigger_ids.end());
  if (unique.size() != trigger_ids.size()) throw ConfigError("trigger ids must be distinct");
  if (vocab_size != 0 && *unique.rbegin() >= vocab_size) {
    throw ConfigError("trigger id " + std::to_string(*unique.rbegin()) + " outside vocabulary");
  }
  if (range_lo >= range_hi) throw ConfigError("trigger range must satisfy lo < hi");
  if (count > range_hi - range_lo) throw ConfigError("trigger count exceeds the insertion range");
  if (norm_bound && !(*norm_bound > 0.0)) throw ConfigError("trigger norm bound must be positive");
  if (classes != 0 && target_label >= classes) throw ConfigError("target label outside classes");
}

Example insert_triggers(const Example& example, const TriggerSpec& spec, Rng& rng) {
  Example out;
  out.label = spec.target_label;
  if (spec.count == 0) {
    out.tokens = example.tokens;
    return out;
  }

  std::vector<TokenId> pool = spec.trigger_ids;
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<TokenId> chosen(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) chosen[i] = pool[i % pool.size()];

  const std::size_t length = example.tokens.size() + spec.count;
  std::vector<std::size_t> positions;
  positions.reserve(spec.count);
  if (spec.position_mode == PositionMode::kFixedStart) {
    const std::size_t first = std::min(spec.start, length - spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) positions.push_back(first + i);
  } else {
    const std::size_t hi = std::min(spec.range_hi, length);
    const std::size_t lo = std::min(spec.range_lo, hi - spec.count);
    std::vector<std::size_t> slots(hi - lo);
    std::iota(slots.begin(), slots.end(), lo);
    for (std::size_t i = 0; i < spec.count; ++i) {
      const std::size_t j = i + uniform_index(rng, slots.size() - i);
      std::swap(slots[i], slots[j]);
      positions.push_back(slots[i]);
    }
    std::sort(positions.begin(), positions.end());
  }

  out.tokens.reserve(length);
  std::size_t next_trigger = 0;
  std::size_t next_original = 0;
  for (std::size_t i = 0; i < length; ++i) {
    if (next_trigger < positions.size() && positions[next_trigger] == i) {
      out.tokens.push_back(chosen[next_trigger++]);
    } else {
      out.tokens.push_back(example.tokens[next_original++]);
    }
  }
  return out;
}

std::vector<Example> make_backdoor_testset(std::span<const Example> test, const TriggerSpec& spec,
                                           Rng& rng) {
  if (test.empty()) throw EmptyEvaluationError("empty test set");
  std::vector<Example> out;
  for (const Example& example : test) {
    if (example.label == spec.target_label) continue;
    out.push_back(insert_triggers(example, spec, rng));
  }
  if (out.empty()) throw EmptyEvaluationError("every test example already has the target label");
  return out;
}

}  // namespace fedpoison

#include "fedpoison/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string_view>

#include "fedpoison/error.hpp"
#include "fedpoison/rng.hpp"

namespace fedpoison {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    items.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (items.size() == 1 && items.front().empty()) items.clear();
  return items;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError(key + ": invalid value '" + value + "' (expected " + expected + ")");
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty() ||
      !std::isfinite(out)) {
    bad_value(key, value, "a finite number");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Get>
Field size_field(Get member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_size(k, v);
          },
          [member](const ExperimentConfig& c) {
            return std::to_string(member(const_cast<ExperimentConfig&>(c)));
          }};
}

template <typename Get>
Field double_field(Get member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_double(k, v);
          },
          [member](const ExperimentConfig& c) {
            return format_double(member(const_cast<ExperimentConfig&>(c)));
          }};
}

template <typename Get>
Field bool_field(Get member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_bool(k, v);
          },
          [member](const ExperimentConfig& c) {
            return bool_text(member(const_cast<ExperimentConfig&>(c)));
          }};
}

template <typename Get>
Field string_field(Get member) {
  return {[member](ExperimentConfig& c, const std::string&, const std::string& v) {
            member(c) = v;
          },
          [member](const ExperimentConfig& c) { return member(const_cast<ExperimentConfig&>(c)); }};
}

Field choice_field(std::function<std::string&(ExperimentConfig&)> member,
                   std::vector<std::string> choices) {
  return {[member, choices](ExperimentConfig& c, const std::string& k, const std::string& v) {
            if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
              bad_value(k, v, "one of: " + join(choices));
            }
            member(c) = v;
          },
          [member](const ExperimentConfig& c) { return member(const_cast<ExperimentConfig&>(c)); }};
}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    // federation
    f["federation.clients"] = size_field([](ExperimentConfig& c) -> auto& { return c.federation.clients; });
    f["federation.clients_per_round"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.federation.clients_per_round; });
    f["federation.rounds"] = size_field([](ExperimentConfig& c) -> auto& { return c.federation.rounds; });
    f["federation.server_lr"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.federation.server_lr; });
    f["federation.server_momentum"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.federation.server_momentum; });
    f["federation.client_lr"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.federation.client_lr; });
    f["federation.local_steps"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.federation.local_steps; });
    f["federation.batch_size"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.federation.batch_size; });
    // data
    f["data.source"] = choice_field([](ExperimentConfig& c) -> std::string& { return c.data.source; },
                                    {"synthetic", "file"});
    f["data.vocab_size"] = size_field([](ExperimentConfig& c) -> auto& { return c.data.synth.vocab; });
    f["data.classes"] = size_field([](ExperimentConfig& c) -> auto& { return c.data.synth.classes; });
    f["data.examples"] = size_field([](ExperimentConfig& c) -> auto& { return c.data.synth.examples; });
    f["data.seq_len"] = size_field([](ExperimentConfig& c) -> auto& { return c.data.synth.seq_len; });
    f["data.skew"] = double_field([](ExperimentConfig& c) -> auto& { return c.data.synth.skew; });
    f["data.zipf_exponent"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.data.synth.zipf_exponent; });
    f["data.test_examples"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.data.test_examples; });
    f["data.validation_examples"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.data.validation_examples; });
    f["data.alpha"] = double_field([](ExperimentConfig& c) -> auto& { return c.data.alpha; });
    f["data.train_file"] = string_field([](ExperimentConfig& c) -> auto& { return c.data.train_file; });
    f["data.test_file"] = string_field([](ExperimentConfig& c) -> auto& { return c.data.test_file; });
    // model
    f["model.dim"] = size_field([](ExperimentConfig& c) -> auto& { return c.model.dim; });
    f["model.init_scale"] = double_field([](ExperimentConfig& c) -> auto& { return c.model.init_scale; });
    f["model.pooling"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "mean") c.model.pooling = Pooling::kMean;
          else if (v == "position-decay") c.model.pooling = Pooling::kPositionDecay;
          else bad_value(k, v, "mean or position-decay");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.model.pooling == Pooling::kMean ? "mean" : "position-decay");
        }};
    // attack
    f["attack.strategy"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          try {
            c.attack.config.strategy = parse_strategy(v);
          } catch (const ConfigError&) {
            bad_value(k, v,
                      "none, rare-embedding, rare-embedding-ge, entire-embedding, "
                      "data-poisoning, model-replacement or dba");
          }
        },
        [](const ExperimentConfig& c) { return strategy_name(c.attack.config.strategy); }};
    f["attack.sampling"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "fixed-frequency") c.attack.sampling = AdversarySampling::kFixedFrequency;
          else if (v == "random") c.attack.sampling = AdversarySampling::kRandom;
          else bad_value(k, v, "fixed-frequency or random");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.attack.sampling == AdversarySampling::kFixedFrequency
                                 ? "fixed-frequency"
                                 : "random");
        }};
    f["attack.ratio"] = double_field([](ExperimentConfig& c) -> auto& { return c.attack.ratio; });
    f["attack.trigger_pool"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.trigger_pool; });
    f["attack.trigger_count"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.config.trigger.count; });
    f["attack.range_lo"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.config.trigger.range_lo; });
    f["attack.range_hi"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.config.trigger.range_hi; });
    f["attack.position"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "uniform") c.attack.config.trigger.position_mode = PositionMode::kUniformInRange;
          else if (v == "fixed") c.attack.config.trigger.position_mode = PositionMode::kFixedStart;
          else bad_value(k, v, "uniform or fixed");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.attack.config.trigger.position_mode == PositionMode::kFixedStart
                                 ? "fixed"
                                 : "uniform");
        }};
    f["attack.start"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.config.trigger.start; });
    f["attack.norm_bound"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "none") c.attack.config.trigger.norm_bound.reset();
          else c.attack.config.trigger.norm_bound = to_double(k, v);
        },
        [](const ExperimentConfig& c) {
          const auto& b = c.attack.config.trigger.norm_bound;
          return b ? format_double(*b) : std::string("none");
        }};
    f["attack.target_label"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.attack.config.trigger.target_label = static_cast<Label>(to_size(k, v));
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.attack.config.trigger.target_label);
        }};
    f["attack.backdoor_steps"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.config.backdoor_steps; });
    f["attack.backdoor_lr"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.attack.config.backdoor_lr; });
    f["attack.ensemble_size"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.config.ensemble_size; });
    f["attack.decay"] = double_field([](ExperimentConfig& c) -> auto& { return c.attack.config.decay; });
    f["attack.early_stop_acc"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.attack.config.early_stop_acc; });
    f["attack.mix_ratio"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.attack.config.mix_ratio; });
    f["attack.scale"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "auto") c.attack.scale.reset();
          else c.attack.scale = to_double(k, v);
        },
        [](const ExperimentConfig& c) {
          return c.attack.scale ? format_double(*c.attack.scale) : std::string("auto");
        }};
    f["attack.dba_parts"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.attack.config.dba_parts; });
    // defense
    f["defense.kind"] = choice_field(
        [](ExperimentConfig& c) -> std::string& { return c.defense.kind; },
        {"none", "norm-clip", "weak-dp", "coord-median", "multi-krum", "accuracy-check"});
    f["defense.clip"] = double_field([](ExperimentConfig& c) -> auto& { return c.defense.clip; });
    f["defense.literal_clip"] =
        bool_field([](ExperimentConfig& c) -> auto& { return c.defense.literal_clip; });
    f["defense.sigma"] = double_field([](ExperimentConfig& c) -> auto& { return c.defense.sigma; });
    f["defense.embedding_only"] =
        bool_field([](ExperimentConfig& c) -> auto& { return c.defense.embedding_only; });
    f["defense.krum_byzantine"] =
        size_field([](ExperimentConfig& c) -> auto& { return c.defense.krum_byzantine; });
    f["defense.krum_select"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.defense.krum_select = v == "auto" ? 0 : to_size(k, v);
          if (v != "auto" && c.defense.krum_select == 0) bad_value(k, v, "auto or a positive integer");
        },
        [](const ExperimentConfig& c) {
          return c.defense.krum_select == 0 ? std::string("auto")
                                            : std::to_string(c.defense.krum_select);
        }};
    f["defense.tolerance"] =
        double_field([](ExperimentConfig& c) -> auto& { return c.defense.tolerance; });
    // metrics and run control
    f["metrics.thresholds"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.thresholds.clear();
          for (const std::string& item : split_list(v)) c.thresholds.push_back(to_double(k, item));
        },
        [](const ExperimentConfig& c) {
          std::vector<std::string> items;
          for (double t : c.thresholds) items.push_back(format_double(t));
          return join(items);
        }};
    f["seeds"] = Field{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.seeds.clear();
          for (const std::string& item : split_list(v)) c.seeds.push_back(to_u64(k, item));
        },
        [](const ExperimentConfig& c) {
          std::vector<std::string> items;
          for (auto s : c.seeds) items.push_back(std::to_string(s));
          return join(items);
        }};
    f["sweep.path"] = Field{
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          if (!c.sweep) c.sweep.emplace();
          c.sweep->path = v;
        },
        [](const ExperimentConfig& c) { return c.sweep ? c.sweep->path : std::string("none"); }};
    f["sweep.values"] = Field{
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          if (!c.sweep) c.sweep.emplace();
          c.sweep->values = split_list(v);
        },
        [](const ExperimentConfig& c) { return c.sweep ? join(c.sweep->values) : std::string("none"); }};
    return f;
  }();
  return fields;
}

std::size_t line_of(const ExperimentConfig& config, const std::string& key) {
  const auto it = config.origin.find(key);
  return it == config.origin.end() ? 0 : it->second;
}

// Throws a ConfigError anchored at the line that set `key` (if any).
void require(const ExperimentConfig& config, bool ok, const std::string& key,
             const std::string& message) {
  if (!ok) throw ConfigError(key + ": " + message, line_of(config, key));
}

void validate_point(const ExperimentConfig& c) {
  const FederationConfig& fed = c.federation;
  require(c, fed.clients >= 1, "federation.clients", "must be at least 1");
  require(c, fed.clients_per_round >= 1 && fed.clients_per_round <= fed.clients,
          "federation.clients_per_round", "must lie in [1, federation.clients]");
  require(c, fed.server_lr > 0.0, "federation.server_lr", "must be positive");
  require(c, fed.server_momentum >= 0.0 && fed.server_momentum < 1.0,
          "federation.server_momentum", "must lie in [0, 1)");
  require(c, fed.client_lr > 0.0, "federation.client_lr", "must be positive");
  require(c, fed.batch_size >= 1, "federation.batch_size", "must be at least 1");

  const SynthConfig& s = c.data.synth;
  require(c, s.classes >= 2, "data.classes", "must be at least 2");
  require(c, c.data.alpha > 0.0, "data.alpha", "must be positive");
  if (c.data.source == "synthetic") {
    require(c, s.vocab >= 10 * s.classes, "data.vocab_size", "must be at least 10 * data.classes");
    require(c, s.examples >= fed.clients, "data.examples", "must be at least federation.clients");
    require(c, s.seq_len >= 1, "data.seq_len", "must be at least 1");
    require(c, s.skew > 0.0 && s.skew <= 1.0, "data.skew", "must lie in (0, 1]");
    require(c, s.zipf_exponent > 0.0, "data.zipf_exponent", "must be positive");
    require(c, c.data.test_examples >= 1, "data.test_examples", "must be at least 1");
    require(c, c.data.validation_examples >= 1, "data.validation_examples", "must be at least 1");
  } else {
    require(c, !c.data.train_file.empty(), "data.train_file", "required when data.source = file");
    require(c, !c.data.test_file.empty(), "data.test_file", "required when data.source = file");
    require(c, s.vocab >= 1, "data.vocab_size", "must be positive");
  }

  require(c, c.model.dim >= 1, "model.dim", "must be at least 1");
  require(c, c.model.init_scale >= 0.0, "model.init_scale", "must be non-negative");

  const AttackConfig& a = c.attack.config;
  const TriggerSpec& trg = a.trigger;
  require(c, c.attack.ratio >= 0.0 && c.attack.ratio <= 1.0, "attack.ratio", "must lie in [0, 1]");
  if (c.attack.sampling == AdversarySampling::kFixedFrequency) {
    require(c, c.attack.ratio * static_cast<double>(fed.clients_per_round) <= 1.0 + 1e-12,
            "attack.ratio",
            "fixed-frequency sampling needs attack.ratio * federation.clients_per_round <= 1");
  }
  require(c, c.attack.trigger_pool >= 1, "attack.trigger_pool", "must be at least 1");
  require(c, c.attack.trigger_pool <= s.vocab, "attack.trigger_pool", "exceeds data.vocab_size");
  require(c, trg.range_lo < trg.range_hi, "attack.range_hi", "must exceed attack.range_lo");
  require(c, trg.count <= trg.range_hi - trg.range_lo, "attack.trigger_count",
          "must not exceed attack.range_hi - attack.range_lo");
  require(c, !trg.norm_bound || *trg.norm_bound > 0.0, "attack.norm_bound", "must be positive");
  require(c, trg.target_label < s.classes, "attack.target_label", "must be below data.classes");
  require(c, a.ensemble_size >= 1, "attack.ensemble_size", "must be at least 1");
  require(c, a.decay > 0.0 && a.decay < 1.0, "attack.decay", "must lie in (0, 1)");
  require(c, a.early_stop_acc >= 0.0 && a.early_stop_acc <= 1.0, "attack.early_stop_acc",
          "must lie in [0, 1]");
  require(c, a.mix_ratio > 0.0 && a.mix_ratio <= 1.0, "attack.mix_ratio", "must lie in (0, 1]");
  require(c, a.backdoor_lr > 0.0, "attack.backdoor_lr", "must be positive");
  require(c, !c.attack.scale || *c.attack.scale > 0.0, "attack.scale", "must be positive");
  if (a.strategy == AttackStrategy::kDistributed) {
    require(c, a.dba_parts >= 1, "attack.dba_parts", "must be at least 1");
    require(c, c.attack.trigger_pool >= a.dba_parts * trg.count, "attack.trigger_pool",
            "must be at least attack.dba_parts * attack.trigger_count");
    require(c, a.dba_parts * trg.count <= trg.range_hi - trg.range_lo, "attack.dba_parts",
            "combined trigger does not fit the insertion range");
  } else {
    require(c, c.attack.trigger_pool >= 1, "attack.trigger_pool", "must be at least 1");
  }

  const DefenseSettings& d = c.defense;
  if (d.kind == "norm-clip" || d.kind == "weak-dp") {
    require(c, d.clip > 0.0, "defense.clip", "must be positive");
  }
  if (d.kind == "weak-dp") require(c, d.sigma >= 0.0, "defense.sigma", "must be non-negative");
  if (d.kind == "multi-krum") {
    const std::size_t m = fed.clients_per_round;
    require(c, m >= 3 && d.krum_byzantine <= m - 3, "defense.krum_byzantine",
            "must not exceed federation.clients_per_round - 3");
    require(c, d.krum_select <= m - d.krum_byzantine - 2, "defense.krum_select",
            "must not exceed clients_per_round - krum_byzantine - 2");
  }
  if (d.kind == "accuracy-check") {
    require(c, d.tolerance >= 0.0 && d.tolerance <= 1.0, "defense.tolerance", "must lie in [0, 1]");
  }

  for (double t : c.thresholds) {
    require(c, t >= 0.0 && t <= 1.0, "metrics.thresholds", "thresholds must lie in [0, 1]");
  }
  require(c, !c.seeds.empty(), "seeds", "at least one seed is required");
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return ec == std::errc() ? std::string(buffer, ptr) : std::to_string(value);
}

DefenseConfig DefenseSettings::resolve(std::size_t clients_per_round) const {
  if (kind == "norm-clip") return NormClip{clip, literal_clip};
  if (kind == "weak-dp") return WeakDp{clip, sigma};
  if (kind == "coord-median") return CoordMedian{embedding_only};
  if (kind == "multi-krum") {
    const std::size_t select =
        krum_select != 0 ? krum_select
                         : (clients_per_round >= krum_byzantine + 3
                                ? clients_per_round - krum_byzantine - 2
                                : 1);
    return MultiKrum{krum_byzantine, select};
  }
  if (kind == "accuracy-check") return AccuracyCheck{tolerance};
  return NoDefense{};
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& fields = schema();
  const auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown key '" + key + "'");
  it->second.set(config, key, value);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key before '='", line_no);
    if (config.origin.count(key)) {
      throw ConfigError("duplicate key '" + key + "' (first set on line " +
                            std::to_string(config.origin[key]) + ")",
                        line_no);
    }
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), line_no);
    }
    config.origin[key] = line_no;
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& config) {
  if (!config.sweep) return {config};
  const Sweep& sweep = *config.sweep;
  const std::size_t line = line_of(config, "sweep.path");
  if (sweep.path.empty()) throw ConfigError("sweep.path: missing", line);
  if (sweep.path == "seeds" || sweep.path.rfind("sweep.", 0) == 0 || !schema().count(sweep.path)) {
    throw ConfigError("sweep.path: '" + sweep.path + "' is not a sweepable key", line);
  }
  if (sweep.values.empty()) {
    throw ConfigError("sweep.values: at least one value is required", line_of(config, "sweep.values"));
  }
  std::vector<ExperimentConfig> points;
  for (const std::string& value : sweep.values) {
    ExperimentConfig point = config;
    try {
      set_config_value(point, sweep.path, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("sweep.values: ") + e.what(), line_of(config, "sweep.values"));
    }
    point.origin[sweep.path] = line_of(config, "sweep.values");
    points.push_back(std::move(point));
  }
  return points;
}

void validate_config(const ExperimentConfig& config) {
  for (const ExperimentConfig& point : expand_sweep(config)) validate_point(point);
}

std::vector<std::pair<std::string, std::string>> resolved_entries(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, field] : schema()) out.emplace_back(key, field.get(config));
  return out;
}

FederationSetup build_setup(const ExperimentConfig& config, std::uint64_t seed) {
  validate_point(config);
  FederationSetup setup;
  setup.config = config.federation;
  setup.config.seed = seed;

  const std::size_t classes = config.data.synth.classes;
  std::vector<Example> train;
  Vocabulary vocab;
  std::size_t vocab_size = config.data.synth.vocab;
  if (config.data.source == "synthetic") {
    Corpus corpus = synth_corpus(config.data.synth, derive_seed(seed, Stream::kCorpus));
    train = std::move(corpus.examples);
    vocab = std::move(corpus.vocab);
    SynthConfig held_out = config.data.synth;
    held_out.examples = config.data.test_examples;
    setup.clean_test = synth_corpus(held_out, derive_seed(seed, Stream::kTestCorpus)).examples;
    held_out.examples = config.data.validation_examples;
    setup.validation =
        synth_corpus(held_out, derive_seed(seed, Stream::kValidationCorpus)).examples;
  } else {
    train = load_corpus(config.data.train_file, vocab_size, classes);
    setup.clean_test = load_corpus(config.data.test_file, vocab_size, classes);
    setup.validation = setup.clean_test;
    vocab = count_tokens(vocab_size, train);
  }

  setup.clients = dirichlet_partition(train, config.federation.clients, config.data.alpha, seed);

  const ModelShape shape{vocab_size, config.model.dim, classes};
  Rng init_rng = make_rng(seed, Stream::kInit);
  setup.initial = ModelParams::random(shape, config.model.pooling, init_rng, config.model.init_scale);

  setup.attack = config.attack.config;
  setup.attack.scale =
      config.attack.scale.value_or(static_cast<double>(config.federation.clients_per_round));
  setup.attack.trigger.trigger_ids = select_rare_tokens(vocab, config.attack.trigger_pool);

  TriggerSpec evaluation = setup.attack.trigger;
  if (setup.attack.strategy == AttackStrategy::kDistributed) {
    evaluation = dba_assign(setup.attack.dba_parts, setup.attack.trigger.trigger_ids,
                            setup.attack.trigger)
                     .global;
  }
  Rng backdoor_rng = make_rng(seed, Stream::kBackdoorTest);
  setup.backdoor_test = make_backdoor_testset(setup.clean_test, evaluation, backdoor_rng);

  if (setup.attack.strategy != AttackStrategy::kNone) {
    Rng schedule_rng = make_rng(seed, Stream::kSchedule);
    setup.schedule = schedule_adversary(config.attack.sampling, config.attack.ratio,
                                        config.federation.clients_per_round,
                                        config.federation.rounds, schedule_rng);
  } else {
    setup.schedule.slots.resize(config.federation.rounds);
  }
  setup.defense = config.defense.resolve(config.federation.clients_per_round);
  return setup;
}

void write_rounds_csv(std::ostream& out, const std::vector<RoundRecord>& records) {
  out << "round,adversary_round,clean_acc,backdoor_acc,defense_rejections\n";
  char buffer[128];
  for (const RoundRecord& r : records) {
    std::snprintf(buffer, sizeof buffer, "%zu,%d,%.6f,%.6f,%zu\n", r.round,
                  r.adversary_round ? 1 : 0, r.clean_acc, r.backdoor_acc, r.defense_rejections);
    out << buffer;
  }
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

namespace {

std::string fixed6(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.6f", v);
  return buffer;
}

void write_summary(std::ostream& out, const RunSummary& summary,
                   const std::vector<RoundRecord>& records) {
  std::size_t adversary_rounds = 0, rejections = 0, adversary_rejections = 0;
  for (const RoundRecord& r : records) {
    adversary_rounds += r.adversary_round ? 1 : 0;
    rejections += r.defense_rejections;
    adversary_rejections += r.adversary_rejections;
  }
  out << "rounds = " << summary.rounds << '\n';
  out << "final_clean_acc = " << fixed6(summary.final_clean_acc) << '\n';
  out << "final_backdoor_acc = " << fixed6(summary.final_backdoor_acc) << '\n';
  for (std::size_t k = 0; k < summary.thresholds.size(); ++k) {
    out << "success_ratio." << format_double(summary.thresholds[k]) << " = "
        << fixed6(summary.success_ratios[k]) << '\n';
  }
  out << "adversary_rounds = " << adversary_rounds << '\n';
  out << "defense_rejections = " << rejections << '\n';
  out << "adversary_rejections = " << adversary_rejections << '\n';
}

void write_statistic(std::ostream& out, const std::string& key, const Statistic& s) {
  out << key << ".mean = " << fixed6(s.mean) << '\n';
  out << key << ".std = " << fixed6(s.stddev) << '\n';
  out << key << ".stderr = " << fixed6(s.std_error) << '\n';
}

}  // namespace

ExperimentOutputs run_experiment(const std::string& config_text, const RunOptions& options,
                                 std::ostream& log) {
  const ExperimentConfig config = parse_config(config_text);
  validate_config(config);
  const std::vector<ExperimentConfig> points = expand_sweep(config);
  const std::string hash = config_hash(config_text);

  ExperimentOutputs outputs;
  std::filesystem::create_directories(options.out_dir);
  outputs.summary_file = options.out_dir / (hash + "-summary.txt");
  std::ofstream aggregate(outputs.summary_file, std::ios::binary);
  aggregate << "config_hash = " << hash << '\n';

  for (std::size_t p = 0; p < points.size(); ++p) {
    const ExperimentConfig& point = points[p];
    std::vector<RunSummary> summaries;
    for (std::uint64_t seed : point.seeds) {
      std::string name = hash;
      if (config.sweep) name += "-sweep" + std::to_string(p);
      name += "-seed" + std::to_string(seed);
      const std::filesystem::path dir = options.out_dir / name;
      std::filesystem::create_directories(dir);

      FederationSetup setup = build_setup(point, seed);
      setup.config.threads = options.threads;
      if (!options.quiet) log << "running " << name << '\n';
      const FederationResult result = run_federation(setup);

      std::ofstream csv(dir / "rounds.csv", std::ios::binary);
      write_rounds_csv(csv, result.records);
      const RunSummary summary = summarize(result.records, point.thresholds);
      summaries.push_back(summary);

      std::ofstream text(dir / "summary.txt", std::ios::binary);
      text << "config_hash = " << hash << '\n';
      text << "seed = " << seed << '\n';
      if (config.sweep) {
        text << "sweep.path = " << config.sweep->path << '\n';
        text << "sweep.value = " << config.sweep->values[p] << '\n';
      }
      write_summary(text, summary, result.records);
      for (const auto& [key, value] : resolved_entries(point)) {
        text << "config." << key << " = " << value << '\n';
      }
      outputs.run_dirs.push_back(dir);
      if (!options.quiet) {
        log << "  final clean " << fixed6(summary.final_clean_acc) << ", backdoor "
            << fixed6(summary.final_backdoor_acc) << '\n';
      }
    }

    const MultiRunSummary multi = summarize_runs(summaries);
    const std::string prefix =
        config.sweep ? "sweep" + std::to_string(p) + "." : std::string("all.");
    if (config.sweep) aggregate << prefix << "value = " << config.sweep->values[p] << '\n';
    aggregate << prefix << "runs = " << multi.runs << '\n';
    write_statistic(aggregate, prefix + "final_clean_acc", multi.final_clean_acc);
    write_statistic(aggregate, prefix + "final_backdoor_acc", multi.final_backdoor_acc);
    for (std::size_t k = 0; k < multi.thresholds.size(); ++k) {
      write_statistic(aggregate, prefix + "success_ratio." + format_double(multi.thresholds[k]),
                      multi.success_ratios[k]);
    }
  }
  return outputs;
}

}  // namespace fedpoison

#pragma once

// Experiment configuration files, scenario assembly and run outputs used by
// the fedpoison command-line tool.
//
// Config files are line oriented: `section.key = value`, `#` starts a
// comment. docs/config.md lists every key.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedpoison/attack.hpp"
#include "fedpoison/data.hpp"
#include "fedpoison/defense.hpp"
#include "fedpoison/federation.hpp"
#include "fedpoison/metrics.hpp"
#include "fedpoison/model.hpp"

namespace fedpoison {

struct DataSettings {
  std::string source = "synthetic";  // synthetic | file
  SynthConfig synth;
  std::size_t test_examples = 1000;
  std::size_t validation_examples = 500;
  double alpha = 1.0;
  std::string train_file;
  std::string test_file;
};

struct ModelSettings {
  std::size_t dim = 16;
  Pooling pooling = Pooling::kMean;
  double init_scale = 0.1;
};

struct AttackSettings {
  AttackConfig config;  // trigger ids are filled in from the vocabulary
  AdversarySampling sampling = AdversarySampling::kFixedFrequency;
  double ratio = 0.0;
  std::size_t trigger_pool = 3;  // rare tokens selected as triggers
  std::optional<double> scale;   // model replacement; defaults to m
};

struct DefenseSettings {
  std::string kind = "none";
  double clip = 0.5;
  bool literal_clip = false;
  double sigma = 5e-4;
  bool embedding_only = true;
  std::size_t krum_byzantine = 1;
  std::size_t krum_select = 0;  // 0: m - f - 2
  double tolerance = 0.05;

  DefenseConfig resolve(std::size_t clients_per_round) const;
};

struct Sweep {
  std::string path;
  std::vector<std::string> values;
};

struct ExperimentConfig {
  FederationConfig federation;
  DataSettings data;
  ModelSettings model;
  AttackSettings attack;
  DefenseSettings defense;
  std::vector<double> thresholds{0.5, 0.8, 0.9};
  std::vector<std::uint64_t> seeds{0};
  std::optional<Sweep> sweep;

  // Config file line of every explicitly set key, for error messages.
  std::map<std::string, std::size_t> origin;
};

// Throws ConfigError carrying the offending line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Sets one dotted key; throws ConfigError for unknown keys or bad values.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

// Checks every invariant (including each sweep value) without running.
void validate_config(const ExperimentConfig& config);

// All keys with resolved values, sorted by key.
std::vector<std::pair<std::string, std::string>> resolved_entries(const ExperimentConfig& config);

// The configurations of every sweep point (one entry without a sweep).
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& config);

// Data, trigger, schedule and defense for one seed, ready for run_federation.
FederationSetup build_setup(const ExperimentConfig& config, std::uint64_t seed);

// Header plus one line per round, floats with 6 decimals.
void write_rounds_csv(std::ostream& out, const std::vector<RoundRecord>& records);

std::string format_double(double value);

struct RunOptions {
  std::filesystem::path out_dir = "runs";
  std::size_t threads = 1;
  bool quiet = false;
};

struct ExperimentOutputs {
  std::vector<std::filesystem::path> run_dirs;
  std::filesystem::path summary_file;
};

// 64-bit FNV-1a of the config text, as 16 hex digits.
std::string config_hash(const std::string& text);

// Runs every (sweep value, seed) pair and writes per-run CSV and summary
// files plus an aggregate summary.
ExperimentOutputs run_experiment(const std::string& config_text, const RunOptions& options,
                                 std::ostream& log);

}  // namespace fedpoison

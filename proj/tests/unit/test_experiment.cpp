#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedpoison/error.hpp"
#include "fedpoison/experiment.hpp"

namespace fedpoison {
namespace {

namespace fs = std::filesystem;

std::string read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t error_line(const std::string& text) {
  try {
    validate_config(parse_config(text));
  } catch (const ConfigError& e) {
    return e.line();
  }
  ADD_FAILURE() << "config accepted: " << text;
  return 0;
}

std::string error_message(const std::string& text) {
  try {
    validate_config(parse_config(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Config, DefaultsAndOverrides) {
  const ExperimentConfig c = parse_config(
      "# comment\n"
      "federation.rounds = 7   # trailing comment\n"
      "\n"
      "attack.strategy = rare-embedding\n"
      "attack.norm_bound = 2.5\n"
      "defense.kind = coord-median\n"
      "metrics.thresholds = 0.25, 0.75\n"
      "seeds = 4, 5, 6\n");
  EXPECT_EQ(c.federation.rounds, 7u);
  EXPECT_EQ(c.federation.clients, 100u);
  EXPECT_EQ(c.attack.config.strategy, AttackStrategy::kRareEmbedding);
  EXPECT_EQ(c.attack.config.trigger.norm_bound, 2.5);
  EXPECT_EQ(c.thresholds, (std::vector<double>{0.25, 0.75}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5, 6}));
  EXPECT_EQ(c.origin.at("attack.strategy"), 4u);
  EXPECT_NO_THROW(validate_config(c));
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("federation.rounds = 3\nfederation.colour = blue\n"), 2u);
  EXPECT_EQ(error_line("\n\nfederation.rounds = three\n"), 3u);
  EXPECT_EQ(error_line("federation.rounds 3\n"), 1u);
  EXPECT_EQ(error_line("seeds = 1\nseeds = 2\n"), 2u);
  EXPECT_EQ(error_line("attack.decay = 1.5\n"), 1u);
}

TEST(Config, RejectionsNameTheField) {
  EXPECT_NE(error_message("attack.decay = 1.5\n").find("attack.decay"), std::string::npos);
  EXPECT_NE(error_message("federation.clients = 5\nfederation.clients_per_round = 10\n")
                .find("federation.clients_per_round"),
            std::string::npos);
  EXPECT_NE(error_message("attack.ratio = 0.5\n").find("attack.ratio"), std::string::npos);
  EXPECT_NE(error_message("defense.kind = fortress\n").find("defense.kind"), std::string::npos);
  EXPECT_NE(error_message("sweep.path = seeds\nsweep.values = 1\n").find("sweep.path"),
            std::string::npos);
  EXPECT_NE(error_message("sweep.path = attack.decay\nsweep.values = 0.5, 2\n").find("attack.decay"),
            std::string::npos);
}

TEST(Config, ResolvedEntriesAreSortedAndRoundTrip) {
  const ExperimentConfig c = parse_config("attack.decay = 0.25\nattack.scale = 3\n");
  const auto entries = resolved_entries(c);
  ASSERT_FALSE(entries.empty());
  for (std::size_t i = 1; i < entries.size(); ++i) EXPECT_LT(entries[i - 1].first, entries[i].first);
  std::string text;
  for (const auto& [k, v] : entries) {
    if (k.rfind("sweep.", 0) == 0) continue;
    text += k + " = " + v + "\n";
  }
  const ExperimentConfig again = parse_config(text);
  const auto second = resolved_entries(again);
  EXPECT_EQ(entries, second);
}

TEST(Config, SweepExpansion) {
  const ExperimentConfig c =
      parse_config("sweep.path = attack.ratio\nsweep.values = 0.001, 0.003, 0.01\n");
  const auto points = expand_sweep(c);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[0].attack.ratio, 0.001);
  EXPECT_EQ(points[2].attack.ratio, 0.01);
}

TEST(Setup, BuildsConsistentScenario) {
  ExperimentConfig c = parse_config(
      "federation.clients = 10\nfederation.clients_per_round = 5\ndata.examples = 300\n"
      "attack.strategy = rare-embedding\nattack.ratio = 0.2\n");
  const FederationSetup s = build_setup(c, 4);
  EXPECT_EQ(s.clients.size(), 10u);
  EXPECT_EQ(s.attack.trigger.trigger_ids.size(), 3u);
  EXPECT_EQ(s.attack.scale, 5.0);
  EXPECT_EQ(s.schedule.interval, 1u);
  for (const Example& e : s.backdoor_test) EXPECT_EQ(e.label, s.attack.trigger.target_label);
  const FederationSetup again = build_setup(c, 4);
  EXPECT_EQ(again.initial, s.initial);
  EXPECT_EQ(again.backdoor_test, s.backdoor_test);
}

TEST(Csv, ExactFormat) {
  std::vector<RoundRecord> rs(2);
  rs[0] = {1, 0.5, 0.125, false, 0, 0};
  rs[1] = {2, 1.0 / 3.0, 1.0, true, 2, 1};
  std::ostringstream out;
  write_rounds_csv(out, rs);
  EXPECT_EQ(out.str(),
            "round,adversary_round,clean_acc,backdoor_acc,defense_rejections\n"
            "1,0,0.500000,0.125000,0\n"
            "2,1,0.333333,1.000000,2\n");
}

TEST(Hash, Fnv1a) {
  EXPECT_EQ(config_hash(""), "cbf29ce484222325");
  EXPECT_EQ(config_hash("a"), "af63dc4c8601ec8c");
}

TEST(Run, MinimalConfigWritesTwoRows) {
  TempDir dir("fedpoison_run_minimal");
  const std::string text = read(fs::path(FEDPOISON_TEST_DATA_DIR) / "minimal.cfg");
  std::ostringstream log;
  const ExperimentOutputs out = run_experiment(text, {dir.path(), 1, true}, log);
  ASSERT_EQ(out.run_dirs.size(), 1u);
  EXPECT_EQ(out.run_dirs[0].filename().string(), config_hash(text) + "-seed3");
  std::istringstream csv(read(out.run_dirs[0] / "rounds.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 3);
  const std::string summary = read(out.run_dirs[0] / "summary.txt");
  EXPECT_NE(summary.find("final_clean_acc = "), std::string::npos);
  EXPECT_NE(summary.find("success_ratio.0.5 = "), std::string::npos);
  EXPECT_NE(summary.find("config.federation.rounds = 2"), std::string::npos);
  EXPECT_TRUE(fs::exists(out.summary_file));
}

TEST(Run, SweepProducesOneEntryPerValue) {
  TempDir dir("fedpoison_run_sweep");
  const std::string text = read(fs::path(FEDPOISON_TEST_DATA_DIR) / "attacked.cfg");
  std::ostringstream log;
  const ExperimentOutputs out = run_experiment(text, {dir.path(), 1, true}, log);
  EXPECT_EQ(out.run_dirs.size(), 4u);
  const std::string summary = read(out.summary_file);
  EXPECT_NE(summary.find("sweep0.value = 0.3"), std::string::npos);
  EXPECT_NE(summary.find("sweep1.value = 0.7"), std::string::npos);
  EXPECT_NE(summary.find("sweep1.final_backdoor_acc.stderr = "), std::string::npos);
}

TEST(Run, RepeatAndThreadsGiveIdenticalCsv) {
  TempDir a("fedpoison_run_det_a"), b("fedpoison_run_det_b");
  const std::string text = read(fs::path(FEDPOISON_TEST_DATA_DIR) / "attacked.cfg");
  std::ostringstream log;
  const auto first = run_experiment(text, {a.path(), 1, true}, log);
  const auto second = run_experiment(text, {b.path(), 4, true}, log);
  ASSERT_EQ(first.run_dirs.size(), second.run_dirs.size());
  for (std::size_t i = 0; i < first.run_dirs.size(); ++i) {
    EXPECT_EQ(read(first.run_dirs[i] / "rounds.csv"), read(second.run_dirs[i] / "rounds.csv"));
    EXPECT_EQ(read(first.run_dirs[i] / "summary.txt"), read(second.run_dirs[i] / "summary.txt"));
  }
}

}  // namespace
}  // namespace fedpoison

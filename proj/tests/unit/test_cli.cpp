#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const fs::path kData = FEDPOISON_TEST_DATA_DIR;

std::string read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with stdout and stderr captured to files under `dir`.
Outcome run_cli(const std::string& args, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string command = std::string("\"") + FEDPOISON_CLI + "\" " + args + " > \"" +
                              out.string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(command.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = read(out);
  o.err = read(err);
  return o;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("fedpoison_cli_") + info->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string config(const std::string& name) const { return "\"" + (kData / name).string() + "\""; }

  fs::path dir_;
};

TEST_F(Cli, ValidatePrintsResolvedConfig) {
  const Outcome o = run_cli("validate " + config("minimal.cfg"), dir_ / "log");
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out, read(kData / "minimal.validate.expected"));
}

TEST_F(Cli, UnknownKeyReportsLine) {
  const Outcome o = run_cli("validate " + config("unknown_key.cfg"), dir_ / "log");
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("line 2"), std::string::npos) << o.err;
  EXPECT_NE(o.err.find("federation.colour"), std::string::npos) << o.err;
}

TEST_F(Cli, InvalidValuesExitOne) {
  for (const char* name : {"bad_decay.cfg", "bad_clients.cfg"}) {
    const Outcome v = run_cli(std::string("validate ") + config(name), dir_ / "log");
    EXPECT_EQ(v.code, 1) << name;
    const Outcome r = run_cli(std::string("run ") + config(name) + " --out \"" +
                                  (dir_ / "runs").string() + "\"",
                              dir_ / "log");
    EXPECT_EQ(r.code, 1) << name;
    EXPECT_FALSE(fs::exists(dir_ / "runs")) << name;
  }
  const Outcome decay = run_cli("validate " + config("bad_decay.cfg"), dir_ / "log");
  EXPECT_NE(decay.err.find("attack.decay"), std::string::npos) << decay.err;
}

TEST_F(Cli, MissingFileExitsOne) {
  const Outcome o = run_cli("validate \"" + (dir_ / "absent.cfg").string() + "\"", dir_ / "log");
  EXPECT_EQ(o.code, 1);
}

TEST_F(Cli, DivergenceExitsTwo) {
  const Outcome o = run_cli("run " + config("diverges.cfg") + " --quiet --out \"" +
                                (dir_ / "runs").string() + "\"",
                            dir_ / "log");
  EXPECT_EQ(o.code, 2) << o.err;
  EXPECT_NE(o.err.find("numeric"), std::string::npos) << o.err;
}

TEST_F(Cli, RunWritesPerRunDirectories) {
  const fs::path runs = dir_ / "runs";
  const Outcome o =
      run_cli("run " + config("minimal.cfg") + " --quiet --out \"" + runs.string() + "\"",
              dir_ / "log");
  ASSERT_EQ(o.code, 0) << o.err;
  std::size_t run_dirs = 0, summaries = 0;
  for (const auto& entry : fs::directory_iterator(runs)) {
    if (entry.is_directory()) {
      ++run_dirs;
      EXPECT_TRUE(fs::exists(entry.path() / "rounds.csv"));
      EXPECT_TRUE(fs::exists(entry.path() / "summary.txt"));
      EXPECT_NE(entry.path().filename().string().find("-seed3"), std::string::npos);
    } else {
      ++summaries;
      EXPECT_NE(entry.path().filename().string().find("-summary.txt"), std::string::npos);
    }
  }
  EXPECT_EQ(run_dirs, 1u);
  EXPECT_EQ(summaries, 1u);
}

TEST_F(Cli, ThreadCountDoesNotChangeOutputs) {
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run_cli("run " + config("attacked.cfg") + " --quiet --threads 1 --out \"" +
                        a.string() + "\"",
                    dir_ / "log")
                .code,
            0);
  ASSERT_EQ(run_cli("run " + config("attacked.cfg") + " --quiet --threads 3 --out \"" +
                        b.string() + "\"",
                    dir_ / "log")
                .code,
            0);
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path other = b / fs::relative(entry.path(), a);
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(read(entry.path()), read(other)) << other;
    ++compared;
  }
  EXPECT_EQ(compared, 9u);  // 4 runs x 2 files + aggregate summary
}

TEST_F(Cli, NoArgumentsIsAnError) {
  EXPECT_NE(run_cli("", dir_ / "log").code, 0);
}

}  // namespace

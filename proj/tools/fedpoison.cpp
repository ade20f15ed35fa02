// Command-line front end: `fedpoison run <config>` and `fedpoison validate <config>`.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fedpoison/error.hpp"
#include "fedpoison/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kNumericFailure = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fedpoison::ConfigError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated backdoor poisoning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  fedpoison::RunOptions options;
  std::string out_dir = options.out_dir.string();

  CLI::App* run = app.add_subcommand("run", "Run every seed and sweep point of a config");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--threads", options.threads, "Client training threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  run->add_flag("--quiet", options.quiet, "Suppress progress output");

  CLI::App* validate = app.add_subcommand("validate", "Check a config and print resolved values");
  validate->add_option("config", config_path, "Config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string text = read_file(config_path);
    if (*validate) {
      const fedpoison::ExperimentConfig config = fedpoison::parse_config(text);
      fedpoison::validate_config(config);
      std::cout << "ok\n";
      for (const auto& [key, value] : fedpoison::resolved_entries(config)) {
        std::cout << key << " = " << value << '\n';
      }
      return kOk;
    }
    options.out_dir = out_dir;
    const fedpoison::ExperimentOutputs outputs =
        fedpoison::run_experiment(text, options, std::cerr);
    if (!options.quiet) std::cerr << "summary: " << outputs.summary_file.string() << '\n';
    return kOk;
  } catch (const fedpoison::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const fedpoison::Error& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kConfigFailure;
  }
}

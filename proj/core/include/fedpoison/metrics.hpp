#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedpoison/model.hpp"

namespace fedpoison {

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  double clean_acc = 0.0;
  double backdoor_acc = 0.0;
  bool adversary_round = false;
  std::size_t defense_rejections = 0;
  // Rejected uploads that came from adversaries; not part of the CSV.
  std::size_t adversary_rejections = 0;
};

// Fraction of examples whose argmax prediction (ties to the lowest class)
// equals the label. Throws EmptyEvaluationError on an empty set.
double accuracy(const ModelParams& params, std::span<const Example> examples);

// Fraction of rounds with backdoor accuracy strictly above `threshold`.
double success_ratio(std::span<const RoundRecord> records, double threshold);

struct RunSummary {
  std::size_t rounds = 0;
  double final_clean_acc = 0.0;
  double final_backdoor_acc = 0.0;
  std::vector<double> thresholds;
  std::vector<double> success_ratios;  // parallel to thresholds
};

RunSummary summarize(std::span<const RoundRecord> records, std::span<const double> thresholds);

struct Statistic {
  double mean = 0.0;
  double stddev = 0.0;      // sample standard deviation (n - 1)
  double std_error = 0.0;   // stddev / sqrt(n)
};

Statistic describe(std::span<const double> values);

struct MultiRunSummary {
  std::size_t runs = 0;
  Statistic final_clean_acc;
  Statistic final_backdoor_acc;
  std::vector<double> thresholds;
  std::vector<Statistic> success_ratios;
};

// Mean, standard deviation and standard error across runs (e.g. seeds).
MultiRunSummary summarize_runs(std::span<const RunSummary> runs);

}  // namespace fedpoison

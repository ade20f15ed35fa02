#include "fedpoison/metrics.hpp"

#include <cmath>

#include "fedpoison/error.hpp"

namespace fedpoison {

double accuracy(const ModelParams& params, std::span<const Example> examples) {
  if (examples.empty()) throw EmptyEvaluationError("accuracy on an empty example set");
  std::size_t correct = 0;
  for (const Example& example : examples) {
    if (predict(params, example.tokens) == example.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double success_ratio(std::span<const RoundRecord> records, double threshold) {
  if (records.empty()) throw EmptyEvaluationError("success ratio over zero rounds");
  std::size_t hits = 0;
  for (const RoundRecord& r : records) {
    if (r.backdoor_acc > threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

RunSummary summarize(std::span<const RoundRecord> records, std::span<const double> thresholds) {
  RunSummary summary;
  summary.rounds = records.size();
  summary.thresholds.assign(thresholds.begin(), thresholds.end());
  if (records.empty()) {
    summary.success_ratios.assign(thresholds.size(), 0.0);
    return summary;
  }
  summary.final_clean_acc = records.back().clean_acc;
  summary.final_backdoor_acc = records.back().backdoor_acc;
  for (double t : thresholds) summary.success_ratios.push_back(success_ratio(records, t));
  return summary;
}

Statistic describe(std::span<const double> values) {
  Statistic s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
    s.std_error = s.stddev / std::sqrt(n);
  }
  return s;
}

MultiRunSummary summarize_runs(std::span<const RunSummary> runs) {
  MultiRunSummary out;
  out.runs = runs.size();
  if (runs.empty()) return out;
  out.thresholds = runs.front().thresholds;
  std::vector<double> clean, backdoor;
  for (const RunSummary& r : runs) {
    if (r.thresholds != out.thresholds) throw Error("runs summarized with different thresholds");
    clean.push_back(r.final_clean_acc);
    backdoor.push_back(r.final_backdoor_acc);
  }
  out.final_clean_acc = describe(clean);
  out.final_backdoor_acc = describe(backdoor);
  for (std::size_t k = 0; k < out.thresholds.size(); ++k) {
    std::vector<double> ratios;
    for (const RunSummary& r : runs) ratios.push_back(r.success_ratios[k]);
    out.success_ratios.push_back(describe(ratios));
  }
  return out;
}

}  // namespace fedpoison

#include "fedpoison/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedpoison/error.hpp"

namespace fedpoison {

std::string defense_name(const DefenseConfig& defense) {
  struct Visitor {
    std::string operator()(const NoDefense&) const { return "none"; }
    std::string operator()(const NormClip&) const { return "norm-clip"; }
    std::string operator()(const WeakDp&) const { return "weak-dp"; }
    std::string operator()(const CoordMedian&) const { return "coord-median"; }
    std::string operator()(const MultiKrum&) const { return "multi-krum"; }
    std::string operator()(const AccuracyCheck&) const { return "accuracy-check"; }
  };
  return std::visit(Visitor{}, defense);
}

void validate_defense(const DefenseConfig& defense, std::size_t clients_per_round) {
  if (const auto* clip = std::get_if<NormClip>(&defense)) {
    if (!(clip->bound > 0.0)) throw ConfigError("norm-clip bound must be positive");
  } else if (const auto* dp = std::get_if<WeakDp>(&defense)) {
    if (!(dp->clip > 0.0)) throw ConfigError("weak-dp clip bound must be positive");
    if (!(dp->sigma >= 0.0)) throw ConfigError("weak-dp sigma must be non-negative");
  } else if (const auto* krum = std::get_if<MultiKrum>(&defense)) {
    if (clients_per_round < 3 || krum->byzantine > clients_per_round - 3) {
      throw ConfigError("multi-krum needs byzantine <= clients_per_round - 3");
    }
    if (krum->select < 1 || krum->select > clients_per_round - krum->byzantine - 2) {
      throw ConfigError("multi-krum needs 1 <= select <= clients_per_round - byzantine - 2");
    }
  } else if (const auto* check = std::get_if<AccuracyCheck>(&defense)) {
    if (!(check->tolerance >= 0.0 && check->tolerance <= 1.0)) {
      throw ConfigError("accuracy-check tolerance must lie in [0, 1]");
    }
  }
}

ParamVector norm_clip(ParamVector residual, double bound, bool literal) {
  if (!(bound > 0.0)) throw ConfigError("norm-clip bound must be positive");
  const double norm = residual.norm();
  if (norm == 0.0) return residual;
  if (literal) {
    residual *= bound / norm;
    return residual;
  }
  if (norm <= bound) return residual;
  // Rounding can leave the scaled norm a few ulp above the bound. Shrink the
  // factor until it is not, so the output lies in the ball and a second clip
  // is the identity.
  double scale = bound / norm;
  ParamVector out = residual;
  out *= scale;
  while (out.norm() > bound) {
    scale = std::nextafter(scale, 0.0);
    out = residual;
    out *= scale;
  }
  return out;
}

ParamVector weak_dp(ParamVector residual, double clip, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("weak-dp sigma must be non-negative");
  residual = norm_clip(std::move(residual), clip);
  if (sigma == 0.0) return residual;
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& x : residual.values()) x += noise(rng);
  return residual;
}

ParamVector mean_aggregate(std::span<const ParamVector> residuals) {
  if (residuals.empty()) throw AggregationEmptyError("mean of zero residuals");
  ParamVector out(residuals.front().shape());
  for (const ParamVector& r : residuals) out += r;
  out *= 1.0 / static_cast<double>(residuals.size());
  return out;
}

ParamVector coord_median(std::span<const ParamVector> residuals, bool embedding_only) {
  if (residuals.empty()) throw AggregationEmptyError("median of zero residuals");
  const ModelShape shape = residuals.front().shape();
  for (const ParamVector& r : residuals) {
    if (r.shape() != shape) throw Error("parameter shape mismatch");
  }
  ParamVector out = embedding_only ? mean_aggregate(residuals) : ParamVector(shape);
  const std::size_t limit = embedding_only ? shape.embedding_size() : shape.size();
  const std::size_t n = residuals.size();
  std::vector<double> column(n);
  auto values = out.values();
  for (std::size_t i = 0; i < limit; ++i) {
    for (std::size_t k = 0; k < n; ++k) column[k] = residuals[k].values()[i];
    const auto mid = column.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(column.begin(), mid, column.end());
    if (n % 2 == 1) {
      values[i] = *mid;
    } else {
      const double below = *std::max_element(column.begin(), mid);
      values[i] = (below + *mid) / 2.0;
    }
  }
  return out;
}

KrumResult multi_krum(std::span<const ParamVector> residuals, std::size_t byzantine,
                      std::size_t select) {
  const std::size_t n = residuals.size();
  if (n < byzantine + 3) {
    throw ConfigError("multi-krum needs at least byzantine + 3 residuals");
  }
  if (select < 1 || select > n) throw ConfigError("multi-krum select must lie in [1, n]");

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i][j] = dist[j][i] = squared_distance(residuals[i], residuals[j]);
    }
  }

  const std::size_t neighbours = n - byzantine - 2;
  KrumResult result;
  result.scores.resize(n);
  std::vector<double> others;
  for (std::size_t i = 0; i < n; ++i) {
    others.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(dist[i][j]);
    }
    std::sort(others.begin(), others.end());
    result.scores[i] = std::accumulate(others.begin(),
                                       others.begin() + static_cast<std::ptrdiff_t>(neighbours), 0.0);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.scores[a] < result.scores[b];
  });
  result.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(select));
  std::sort(result.selected.begin(), result.selected.end());

  std::vector<ParamVector> chosen;
  chosen.reserve(select);
  for (std::size_t i : result.selected) chosen.push_back(residuals[i]);
  result.aggregate = mean_aggregate(chosen);
  return result;
}

bool accuracy_check(const ModelParams& local, const ModelParams& global,
                    std::span<const Example> validation, double tolerance) {
  return !(accuracy(local, validation) < accuracy(global, validation) - tolerance);
}

}  // namespace fedpoison

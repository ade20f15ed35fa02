#include "fedpoison/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedpoison/error.hpp"

namespace fedpoison {

ParamVector::ParamVector(const ModelShape& shape) : shape_(shape), values_(shape.size(), 0.0) {}

void ParamVector::fill(double value) noexcept { std::fill(values_.begin(), values_.end(), value); }

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  add_scaled(other, 1.0);
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  if (other.shape_ != shape_) throw Error("parameter shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double scale) noexcept {
  for (double& x : values_) x *= scale;
  return *this;
}

void ParamVector::add_scaled(const ParamVector& other, double scale) {
  if (other.shape_ != shape_) throw Error("parameter shape mismatch");
  if (scale == 1.0) {
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  } else {
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
  }
}

double ParamVector::squared_norm() const noexcept {
  double sum = 0.0;
  for (double x : values_) sum += x * x;
  return sum;
}

double ParamVector::norm() const noexcept { return std::sqrt(squared_norm()); }

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

ParamVector operator+(ParamVector lhs, const ParamVector& rhs) {
  lhs += rhs;
  return lhs;
}

ParamVector operator-(ParamVector lhs, const ParamVector& rhs) {
  lhs -= rhs;
  return lhs;
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
  if (a.shape() != b.shape()) throw Error("parameter shape mismatch");
  const auto x = a.values();
  const auto y = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return sum;
}

ModelParams ModelParams::zeros(const ModelShape& shape, Pooling pooling) {
  return ModelParams{ParamVector(shape), pooling};
}

ModelParams ModelParams::random(const ModelShape& shape, Pooling pooling, Rng& rng,
                                double scale) {
  ModelParams params = zeros(shape, pooling);
  for (double& x : params.weights.values()) x = scale * (2.0 * uniform01(rng) - 1.0);
  return params;
}

std::vector<double> pooling_weights(Pooling pooling, std::size_t length) {
  std::vector<double> weights(length);
  if (length == 0) return weights;
  if (pooling == Pooling::kMean) {
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(length));
    return weights;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    weights[i] = 1.0 / static_cast<double>(i + 1);
    total += weights[i];
  }
  for (double& w : weights) w /= total;
  return weights;
}

namespace {

void check_tokens(const ModelShape& shape, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw EmptyInputError("empty token sequence");
  for (TokenId token : tokens) {
    if (token >= shape.vocab) {
      throw OutOfVocabularyError("token id " + std::to_string(token) +
                                 " outside vocabulary of size " + std::to_string(shape.vocab));
    }
  }
}

// Scratch buffers reused across the examples of one batch.
struct Workspace {
  std::vector<double> weights;
  std::vector<double> pooled;
  std::vector<double> logits;
  std::vector<double> dpooled;
};

void pool(const ModelParams& params, std::span<const TokenId> tokens, Workspace& ws) {
  const std::size_t dim = params.shape().dim;
  ws.weights = pooling_weights(params.pooling, tokens.size());
  ws.pooled.assign(dim, 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = params.weights.embedding_row(tokens[i]);
    const double w = ws.weights[i];
    for (std::size_t j = 0; j < dim; ++j) ws.pooled[j] += w * row[j];
  }
}

void compute_logits(const ModelParams& params, Workspace& ws) {
  const ModelShape& shape = params.shape();
  ws.logits.resize(shape.classes);
  for (std::size_t c = 0; c < shape.classes; ++c) {
    double z = params.weights.bias(c);
    for (std::size_t j = 0; j < shape.dim; ++j) z += ws.pooled[j] * params.weights.head(j, c);
    ws.logits[c] = z;
  }
}

// Softmax in place; returns log-sum-exp of the input logits.
double softmax_inplace(std::vector<double>& logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - top);
    total += z;
  }
  for (double& z : logits) z /= total;
  return top + std::log(total);
}

enum class GradScope { kFull, kRows };

// Adds scale * d(loss of one example)/d(params) into grad and returns the
// example's loss. With kRows only the embedding rows flagged in row_mask
// receive gradient.
double accumulate_example(const ModelParams& params, const Example& example, double scale,
                          Gradient& grad, GradScope scope, const std::vector<char>& row_mask,
                          Workspace& ws) {
  const ModelShape& shape = params.shape();
  pool(params, example.tokens, ws);
  compute_logits(params, ws);
  const double label_logit = ws.logits[example.label];
  const double lse = softmax_inplace(ws.logits);
  std::vector<double>& delta = ws.logits;  // p - onehot(y)
  delta[example.label] -= 1.0;

  if (scope == GradScope::kFull) {
    for (std::size_t j = 0; j < shape.dim; ++j) {
      const double pj = scale * ws.pooled[j];
      for (std::size_t c = 0; c < shape.classes; ++c) grad.head(j, c) += pj * delta[c];
    }
    for (std::size_t c = 0; c < shape.classes; ++c) grad.bias(c) += scale * delta[c];
  }

  ws.dpooled.assign(shape.dim, 0.0);
  for (std::size_t j = 0; j < shape.dim; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < shape.classes; ++c) s += params.weights.head(j, c) * delta[c];
    ws.dpooled[j] = scale * s;
  }
  for (std::size_t i = 0; i < example.tokens.size(); ++i) {
    const TokenId token = example.tokens[i];
    if (scope == GradScope::kRows && !row_mask[token]) continue;
    auto row = grad.embedding_row(token);
    const double w = ws.weights[i];
    for (std::size_t j = 0; j < shape.dim; ++j) row[j] += w * ws.dpooled[j];
  }
  return lse - label_logit;
}

void check_batch(const ModelParams& params, std::span<const Example> batch) {
  if (batch.empty()) throw EmptyInputError("empty batch");
  for (const Example& example : batch) {
    check_tokens(params.shape(), example.tokens);
    if (example.label >= params.shape().classes) {
      throw InvalidLabelError("label " + std::to_string(example.label) + " outside " +
                              std::to_string(params.shape().classes) + " classes");
    }
  }
}

}  // namespace

std::vector<double> forward(const ModelParams& params, std::span<const TokenId> tokens) {
  check_tokens(params.shape(), tokens);
  Workspace ws;
  pool(params, tokens, ws);
  compute_logits(params, ws);
  softmax_inplace(ws.logits);
  return ws.logits;
}

Label predict(const ModelParams& params, std::span<const TokenId> tokens) {
  check_tokens(params.shape(), tokens);
  Workspace ws;
  pool(params, tokens, ws);
  compute_logits(params, ws);
  // max_element returns the first maximum.
  return static_cast<Label>(std::max_element(ws.logits.begin(), ws.logits.end()) -
                            ws.logits.begin());
}

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const Example> batch) {
  check_batch(params, batch);
  LossAndGrad out{0.0, Gradient(params.shape())};
  const double scale = 1.0 / static_cast<double>(batch.size());
  Workspace ws;
  const std::vector<char> no_mask;
  for (const Example& example : batch) {
    out.loss += accumulate_example(params, example, scale, out.grad, GradScope::kFull, no_mask, ws);
  }
  out.loss *= scale;
  return out;
}

Gradient restricted_grad(const ModelParams& params, std::span<const Example> batch,
                         std::span<const TokenId> rows) {
  check_batch(params, batch);
  std::vector<char> mask(params.shape().vocab, 0);
  for (TokenId row : rows) {
    if (row >= params.shape().vocab) {
      throw OutOfVocabularyError("restricted row " + std::to_string(row) + " outside vocabulary");
    }
    mask[row] = 1;
  }
  Gradient grad(params.shape());
  if (rows.empty()) return grad;
  const double scale = 1.0 / static_cast<double>(batch.size());
  Workspace ws;
  for (const Example& example : batch) {
    accumulate_example(params, example, scale, grad, GradScope::kRows, mask, ws);
  }
  return grad;
}

}  // namespace fedpoison

#pragma once

// Embedding-bag text classifier: embedding lookup, pooling over the
// sequence, and a linear softmax head. Forward pass, cross-entropy loss and
// its gradient are all closed form.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedpoison/rng.hpp"

namespace fedpoison {

using TokenId = std::uint32_t;
using Label = std::uint32_t;

enum class Pooling {
  kMean,
  // Token at index i is weighted by 1/(i+1), normalized over the sequence.
  kPositionDecay,
};

struct ModelShape {
  std::size_t vocab = 0;    // v
  std::size_t dim = 0;      // h
  std::size_t classes = 0;  // C

  std::size_t embedding_size() const noexcept { return vocab * dim; }
  std::size_t head_size() const noexcept { return dim * classes; }
  std::size_t size() const noexcept { return embedding_size() + head_size() + classes; }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Flat parameter storage shared by models, gradients and residuals. Layout:
// embedding (v x h, row-major), head weights (h x C, row-major), head bias (C).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(const ModelShape& shape);

  const ModelShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<double> embedding() noexcept { return values().first(shape_.embedding_size()); }
  std::span<const double> embedding() const noexcept {
    return values().first(shape_.embedding_size());
  }
  std::span<double> embedding_row(TokenId token) noexcept {
    return values().subspan(static_cast<std::size_t>(token) * shape_.dim, shape_.dim);
  }
  std::span<const double> embedding_row(TokenId token) const noexcept {
    return values().subspan(static_cast<std::size_t>(token) * shape_.dim, shape_.dim);
  }

  double& head(std::size_t j, std::size_t c) noexcept {
    return values_[shape_.embedding_size() + j * shape_.classes + c];
  }
  double head(std::size_t j, std::size_t c) const noexcept {
    return values_[shape_.embedding_size() + j * shape_.classes + c];
  }
  double& bias(std::size_t c) noexcept {
    return values_[shape_.embedding_size() + shape_.head_size() + c];
  }
  double bias(std::size_t c) const noexcept {
    return values_[shape_.embedding_size() + shape_.head_size() + c];
  }

  void fill(double value) noexcept;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double scale) noexcept;
  // this += scale * other
  void add_scaled(const ParamVector& other, double scale);

  double squared_norm() const noexcept;
  double norm() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  ModelShape shape_;
  std::vector<double> values_;
};

ParamVector operator+(ParamVector lhs, const ParamVector& rhs);
ParamVector operator-(ParamVector lhs, const ParamVector& rhs);

double squared_distance(const ParamVector& a, const ParamVector& b);

using Gradient = ParamVector;

struct ModelParams {
  ParamVector weights;
  Pooling pooling = Pooling::kMean;

  const ModelShape& shape() const noexcept { return weights.shape(); }

  static ModelParams zeros(const ModelShape& shape, Pooling pooling = Pooling::kMean);
  // Entries uniform in [-scale, scale].
  static ModelParams random(const ModelShape& shape, Pooling pooling, Rng& rng,
                            double scale = 0.1);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Example {
  std::vector<TokenId> tokens;
  Label label = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

// Pooling weights for a sequence of the given length; they sum to 1.
std::vector<double> pooling_weights(Pooling pooling, std::size_t length);

// Class probabilities. Throws EmptyInputError / OutOfVocabularyError.
std::vector<double> forward(const ModelParams& params, std::span<const TokenId> tokens);

// Argmax of the logits, ties resolved to the lowest class id.
Label predict(const ModelParams& params, std::span<const TokenId> tokens);

struct LossAndGrad {
  double loss = 0.0;  // mean cross-entropy over the batch
  Gradient grad;
};

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const Example> batch);

// Embedding gradient for the listed rows only; every other coordinate,
// including the head, is zero. Bitwise equal to the matching slice of
// loss_and_grad.
Gradient restricted_grad(const ModelParams& params, std::span<const Example> batch,
                         std::span<const TokenId> rows);

}  // namespace fedpoison

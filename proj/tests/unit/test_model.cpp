#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fedpoison/error.hpp"
#include "fedpoison/model.hpp"
#include "support.hpp"

namespace fedpoison {
namespace {

using testing::random_batch;

// Straight-line reimplementation: pooled vector, logits, stable softmax.
std::vector<double> naive_forward(const ModelParams& p, const std::vector<TokenId>& tokens) {
  const ModelShape& s = p.shape();
  std::vector<double> w(tokens.size());
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    w[i] = p.pooling == Pooling::kMean ? 1.0 : 1.0 / static_cast<double>(i + 1);
    total += w[i];
  }
  std::vector<double> pooled(s.dim, 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = 0; j < s.dim; ++j) {
      pooled[j] += (w[i] / total) * p.weights.embedding_row(tokens[i])[j];
    }
  }
  std::vector<double> z(s.classes);
  for (std::size_t c = 0; c < s.classes; ++c) {
    z[c] = p.weights.bias(c);
    for (std::size_t j = 0; j < s.dim; ++j) z[c] += pooled[j] * p.weights.head(j, c);
  }
  const double top = *std::max_element(z.begin(), z.end());
  double norm = 0.0;
  for (double& v : z) norm += (v = std::exp(v - top));
  for (double& v : z) v /= norm;
  return z;
}

double naive_loss(const ModelParams& p, const std::vector<Example>& batch) {
  double loss = 0.0;
  for (const Example& e : batch) loss -= std::log(naive_forward(p, e.tokens)[e.label]);
  return loss / static_cast<double>(batch.size());
}

TEST(Model, SingleTokenMeanPoolingIsSoftmaxOfRow) {
  Rng rng = make_rng(1, Stream::kInit);
  const ModelShape shape{6, 3, 4};
  const ModelParams p = ModelParams::random(shape, Pooling::kMean, rng, 1.0);
  const std::vector<TokenId> tokens{4};
  const auto probs = forward(p, tokens);
  std::vector<double> z(4);
  double norm = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    z[c] = p.weights.bias(c);
    for (std::size_t j = 0; j < 3; ++j) z[c] += p.weights.embedding_row(4)[j] * p.weights.head(j, c);
    norm += std::exp(z[c]);
  }
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(probs[c], std::exp(z[c]) / norm, 1e-12);
}

TEST(Model, ForwardMatchesNaiveOracle) {
  Rng rng = make_rng(2, Stream::kInit);
  const ModelShape shape{30, 5, 3};
  for (Pooling pooling : {Pooling::kMean, Pooling::kPositionDecay}) {
    for (int trial = 0; trial < 50; ++trial) {
      const ModelParams p = ModelParams::random(shape, pooling, rng, 2.0);
      const auto batch = random_batch(shape, 1, 12, rng);
      const auto got = forward(p, batch[0].tokens);
      const auto want = naive_forward(p, batch[0].tokens);
      double sum = 0.0;
      for (std::size_t c = 0; c < shape.classes; ++c) {
        EXPECT_NEAR(got[c], want[c], 1e-12);
        EXPECT_GT(got[c], 0.0);
        sum += got[c];
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Model, PositionDecayWeights) {
  const auto w = pooling_weights(Pooling::kPositionDecay, 3);
  const double total = 1.0 + 0.5 + 1.0 / 3.0;
  EXPECT_DOUBLE_EQ(w[0], 1.0 / total);
  EXPECT_DOUBLE_EQ(w[1], 0.5 / total);
  EXPECT_DOUBLE_EQ(w[2], (1.0 / 3.0) / total);
  const auto m = pooling_weights(Pooling::kMean, 4);
  for (double x : m) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(Model, RejectsBadInput) {
  const ModelParams p = ModelParams::zeros({5, 2, 2});
  EXPECT_THROW(forward(p, std::vector<TokenId>{5}), OutOfVocabularyError);
  EXPECT_THROW(forward(p, std::vector<TokenId>{}), EmptyInputError);
  EXPECT_THROW(loss_and_grad(p, std::vector<Example>{{{1}, 2}}), InvalidLabelError);
}

TEST(Model, TiesGoToLowestClass) {
  const ModelParams p = ModelParams::zeros({5, 2, 3});
  EXPECT_EQ(predict(p, std::vector<TokenId>{1, 2}), 0u);
}

TEST(Model, LossMatchesNaiveCrossEntropy) {
  Rng rng = make_rng(3, Stream::kInit);
  const ModelShape shape{20, 4, 3};
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams p = ModelParams::random(shape, Pooling::kPositionDecay, rng, 1.5);
    const auto batch = random_batch(shape, 5, 8, rng);
    EXPECT_NEAR(loss_and_grad(p, batch).loss, naive_loss(p, batch), 1e-12);
  }
}

TEST(Model, GradientMatchesCentralDifferences) {
  Rng rng = make_rng(4, Stream::kInit);
  const ModelShape shape{10, 3, 3};
  const double step = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams p = ModelParams::random(shape, trial % 2 ? Pooling::kMean : Pooling::kPositionDecay,
                                        rng, 1.0);
    const auto batch = random_batch(shape, 4, 6, rng);
    const Gradient g = loss_and_grad(p, batch).grad;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      const double saved = p.weights.values()[i];
      p.weights.values()[i] = saved + step;
      const double up = naive_loss(p, batch);
      p.weights.values()[i] = saved - step;
      const double down = naive_loss(p, batch);
      p.weights.values()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      EXPECT_NEAR(g.values()[i], fd, 1e-4 * std::max(std::abs(fd), 1e-4)) << "coordinate " << i;
    }
  }
}

TEST(Model, UnusedEmbeddingRowsHaveExactlyZeroGradient) {
  Rng rng = make_rng(5, Stream::kInit);
  const ModelShape shape{40, 4, 3};
  const ModelParams p = ModelParams::random(shape, Pooling::kMean, rng);
  const auto batch = random_batch(shape, 6, 5, rng);
  std::set<TokenId> used;
  for (const Example& e : batch) used.insert(e.tokens.begin(), e.tokens.end());
  const Gradient g = loss_and_grad(p, batch).grad;
  for (TokenId t = 0; t < shape.vocab; ++t) {
    if (used.count(t)) continue;
    for (double x : g.embedding_row(t)) EXPECT_EQ(x, 0.0);
  }
}

TEST(Model, RestrictedGradientIsBitwiseSliceOfFullGradient) {
  Rng rng = make_rng(6, Stream::kInit);
  const ModelShape shape{25, 4, 3};
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = ModelParams::random(shape, Pooling::kPositionDecay, rng);
    const auto batch = random_batch(shape, 8, 7, rng);
    const std::vector<TokenId> rows{batch[0].tokens[0], 24, 3};
    const Gradient full = loss_and_grad(p, batch).grad;
    const Gradient part = restricted_grad(p, batch, rows);
    const std::set<TokenId> keep(rows.begin(), rows.end());
    for (TokenId t = 0; t < shape.vocab; ++t) {
      for (std::size_t j = 0; j < shape.dim; ++j) {
        const double want = keep.count(t) ? full.embedding_row(t)[j] : 0.0;
        EXPECT_EQ(part.embedding_row(t)[j], want);
      }
    }
    for (std::size_t i = shape.embedding_size(); i < shape.size(); ++i) {
      EXPECT_EQ(part.values()[i], 0.0);
    }
  }
}

TEST(Model, ParamVectorArithmetic) {
  const ModelShape shape{2, 1, 1};
  ParamVector a(shape), b(shape);
  a.fill(1.0);
  b.fill(2.0);
  EXPECT_DOUBLE_EQ((a + b).values()[0], 3.0);
  EXPECT_DOUBLE_EQ((a - b).values()[1], -1.0);
  a.add_scaled(b, 0.5);
  EXPECT_DOUBLE_EQ(a.values()[3], 2.0);
  EXPECT_DOUBLE_EQ(squared_distance(a, b), 0.0);
  EXPECT_DOUBLE_EQ(b.squared_norm(), 16.0);
  EXPECT_DOUBLE_EQ(b.norm(), 4.0);
  b.values()[0] = std::nan("");
  EXPECT_FALSE(b.all_finite());
}

}  // namespace
}  // namespace fedpoison

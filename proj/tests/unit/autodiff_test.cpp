#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gradcheck.hpp"
#include "simplexlm/autodiff.hpp"
#include "simplexlm/errors.hpp"

namespace simplexlm {
namespace {

using testing::check_gradients;
using testing::random_tensor;

constexpr double kTolerance = 1e-6;

void expect_near_tensor(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape tape;
  Var i = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b = tape.constant(Tensor::matrix({{2, 3}, {4, 5}}));
  EXPECT_EQ(matmul(i, b).value(), Tensor::matrix({{2, 3}, {4, 5}}));
}

TEST(Matmul, RowTimesColumn) {
  Tape tape;
  Var out = matmul(tape.constant(Tensor::matrix({{1, 2}})), tape.constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(out.value().item(), 11.0);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  Tape tape;
  EXPECT_THROW(matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), ShapeError);
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(1);
  const auto r = check_gradients(
      [](Tape&, std::span<const Var> x) { return sum(matmul(x[0], x[1])); },
      {random_tensor({5, 7}, rng), random_tensor({7, 3}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(Softmax, UniformRow) {
  Tape tape;
  const Tensor out = softmax_rows(tape.constant(Tensor::matrix({{0, 0, 0}}))).value();
  for (double v : out.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, AlmostOneHotRow) {
  Tape tape;
  const Tensor out = softmax_rows(tape.constant(Tensor::matrix({{5, -5, -5}}))).value();
  // e^10 / (e^10 + 2)
  EXPECT_NEAR(out[0], 0.99990920838434097818, 1e-15);
}

TEST(Softmax, StableForHugeLogits) {
  Tape tape;
  const Tensor out = softmax_rows(tape.constant(Tensor::matrix({{1000, 999, -1000}}))).value();
  EXPECT_TRUE(out.all_finite());
  EXPECT_NEAR(out[0] + out[1] + out[2], 1.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAndArePositive) {
  Rng rng(2);
  Tape tape;
  const Tensor out = softmax_rows(tape.constant(random_tensor({20, 33}, rng, 10.0))).value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      EXPECT_GT(out.at(r, c), 0.0);
      total += out.at(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const Tensor w = random_tensor({4, 6}, rng);
  const auto r = check_gradients(
      [&](Tape& t, std::span<const Var> x) { return sum(mul(softmax_rows(x[0]), t.constant(w))); },
      {random_tensor({4, 6}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(LogSoftmax, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  const Tensor w = random_tensor({3, 5}, rng);
  const auto r = check_gradients(
      [&](Tape& t, std::span<const Var> x) { return sum(mul(log_softmax_rows(x[0]), t.constant(w))); },
      {random_tensor({3, 5}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(LayerNorm, ConstantRowMapsToBias) {
  Tape tape;
  const Tensor out = layer_norm(tape.constant(Tensor::matrix({{3, 3, 3}})),
                                tape.constant(Tensor::matrix({{2, 2, 2}})),
                                tape.constant(Tensor::matrix({{0.5, -1, 4}})))
                         .value();
  expect_near_tensor(out, Tensor::matrix({{0.5, -1, 4}}), 1e-12);
}

TEST(LayerNorm, TwoEntryRowWithEpsilon) {
  Tape tape;
  const Tensor out = layer_norm(tape.constant(Tensor::matrix({{1, -1}})),
                                tape.constant(Tensor::matrix({{1, 1}})),
                                tape.constant(Tensor::matrix({{0, 0}})))
                         .value();
  // 1 / sqrt(1 + 1e-5)
  EXPECT_NEAR(out[0], 0.9999950000374996875, 1e-15);
  EXPECT_NEAR(out[1], -0.9999950000374996875, 1e-15);
}

TEST(LayerNorm, GainShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(layer_norm(tape.constant(Tensor({2, 3})), tape.constant(Tensor({1, 2})),
                          tape.constant(Tensor({1, 3}))),
               ShapeError);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const Tensor w = random_tensor({4, 8}, rng);
  const auto r = check_gradients(
      [&](Tape& t, std::span<const Var> x) { return sum(mul(layer_norm(x[0], x[1], x[2]), t.constant(w))); },
      {random_tensor({4, 8}, rng), random_tensor({1, 8}, rng), random_tensor({1, 8}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, 1e-5);
}

TEST(CrossEntropy, AlmostOneHotTarget) {
  Tape tape;
  const int target = 0;
  const double loss =
      cross_entropy_rows(tape.constant(Tensor::matrix({{5, -5, -5}})), std::span(&target, 1)).value().item();
  // -log(e^10 / (e^10 + 2))
  EXPECT_NEAR(loss, 9.0795737467244446275e-05, 1e-14);
}

TEST(CrossEntropy, UniformLogitsGiveLogV) {
  Tape tape;
  const std::vector<int> targets{3, 7};
  EXPECT_NEAR(cross_entropy_rows(tape.constant(Tensor({2, 8})), targets).value().item(),
              std::log(8.0), 1e-15);
}

TEST(CrossEntropy, OutOfRangeTargetThrows) {
  Tape tape;
  const std::vector<int> targets{8};
  EXPECT_THROW(cross_entropy_rows(tape.constant(Tensor({1, 8})), targets), DataError);
  const std::vector<int> negative{-1};
  EXPECT_THROW(cross_entropy_rows(tape.constant(Tensor({1, 8})), negative), DataError);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHotOverRows) {
  Rng rng(6);
  const Tensor logits = random_tensor({3, 4}, rng);
  const std::vector<int> targets{1, 0, 3};
  Tape tape;
  Var x = tape.variable(logits);
  tape.backward(cross_entropy_rows(x, targets));
  Tape ref;
  const Tensor p = softmax_rows(ref.constant(logits)).value();
  const Tensor g = tape.grad(x);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double expected = (p.at(r, c) - (static_cast<int>(c) == targets[r] ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(g.at(r, c), expected, 1e-15);
    }
  }
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  const std::vector<int> targets{2, 2, 0, 5};
  const auto r = check_gradients(
      [&](Tape&, std::span<const Var> x) { return cross_entropy_rows(x[0], targets); },
      {random_tensor({4, 6}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(Backward, IdentityHasUnitGradient) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  tape.backward(x);
  EXPECT_EQ(tape.grad(x).item(), 1.0);
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Tape tape;
  const Tensor xv({4}, {1, -2, 0.5, 3});
  Var x = tape.variable(xv);
  tape.backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(tape.grad(x)[i], 2.0 * xv[i]);
}

TEST(Backward, NonScalarRootThrows) {
  Tape tape;
  Var x = tape.variable(Tensor({2, 2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, UsedTwiceAccumulates) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(2.0));
  tape.backward(add(mul(x, x), scale(x, 3.0)));
  EXPECT_EQ(tape.grad(x).item(), 7.0);
}

TEST(Backward, RepeatedRunsAreBitIdentical) {
  Rng rng(8);
  const Tensor a = random_tensor({6, 5}, rng);
  const Tensor b = random_tensor({5, 6}, rng);
  auto run = [&] {
    Tape tape;
    Var x = tape.variable(a);
    Var y = tape.variable(b);
    Var h = gelu(matmul(x, y));
    tape.backward(sum(mul(softmax_rows(h), h)));
    return std::make_pair(tape.grad(x), tape.grad(y));
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, GradSinkAccumulatesAcrossTapes) {
  Tensor w = Tensor::filled({1, 2}, 1.5);
  Tensor sink({1, 2});
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    Var p = tape.parameter(w, sink);
    tape.backward(sum(p));
  }
  EXPECT_EQ(sink, Tensor::filled({1, 2}, 3.0));
}

TEST(Tape, CheckFiniteRejectsNan) {
  Tape tape(/*check_finite=*/true);
  Tensor bad = Tensor::filled({1, 2}, 1.0);
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tape.variable(bad), NumericError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  const auto r = check_gradients(
      [](Tape&, std::span<const Var> x) {
        return sum(mul(sub(add(x[0], x[1]), scale(x[1], 0.3)), x[0]));
      },
      {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(AddRow, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  const Tensor w = random_tensor({5, 3}, rng);
  const auto r = check_gradients(
      [&](Tape& t, std::span<const Var> x) { return sum(mul(add_row(x[0], x[1]), t.constant(w))); },
      {random_tensor({5, 3}, rng), random_tensor({1, 3}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(Gelu, KnownValues) {
  Tape tape;
  const Tensor out = gelu(tape.constant(Tensor({3}, {0.0, 1.0, -1.0}))).value();
  EXPECT_EQ(out[0], 0.0);
  // x * Phi(x) with Phi(1) = 0.841344746068542948...
  EXPECT_NEAR(out[1], 0.8413447460685429, 1e-15);
  EXPECT_NEAR(out[2], -0.15865525393145707, 1e-15);
}

TEST(Gelu, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  const Tensor w = random_tensor({4, 5}, rng);
  const auto r = check_gradients(
      [&](Tape& t, std::span<const Var> x) { return sum(mul(gelu(x[0]), t.constant(w))); },
      {random_tensor({4, 5}, rng, 2.0)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(GatherRows, SelectsRowsAndScattersGradient) {
  Tape tape;
  Var table = tape.variable(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  const std::vector<int> ids{2, 0, 2};
  Var g = gather_rows(table, ids);
  EXPECT_EQ(g.value(), Tensor::matrix({{5, 6}, {1, 2}, {5, 6}}));
  tape.backward(sum(g));
  EXPECT_EQ(tape.grad(table), Tensor::matrix({{1, 1}, {0, 0}, {2, 2}}));
}

TEST(GatherRows, OutOfRangeIdThrows) {
  Tape tape;
  const std::vector<int> ids{3};
  EXPECT_THROW(gather_rows(tape.constant(Tensor({3, 2})), ids), DataError);
}

TEST(WeightedEmbedding, OneHotSimplexEqualsGather) {
  Tape tape;
  const Tensor table = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const Tensor simplex = Tensor::matrix({{0, 1, 0}, {1, 0, 0}});
  const Tensor out = weighted_embedding(tape.constant(simplex), tape.constant(table)).value();
  EXPECT_EQ(out, Tensor::matrix({{3, 4}, {1, 2}}));
}

TEST(WeightedEmbedding, VocabMismatchThrows) {
  Tape tape;
  EXPECT_THROW(weighted_embedding(tape.constant(Tensor({2, 4})), tape.constant(Tensor({3, 2}))),
               ShapeError);
}

TEST(WeightedEmbedding, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  const Tensor w = random_tensor({3, 4}, rng);
  const auto r = check_gradients(
      [&](Tape& t, std::span<const Var> x) {
        return sum(mul(weighted_embedding(softmax_rows(x[0]), x[1]), t.constant(w)));
      },
      {random_tensor({3, 6}, rng), random_tensor({6, 4}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(RowOps, ConcatSliceMeanTransposeGradients) {
  Rng rng(13);
  const Tensor w = random_tensor({3, 5}, rng);
  const auto r = check_gradients(
      [&](Tape& t, std::span<const Var> x) {
        Var c = concat_rows(x[0], x[1]);
        Var s = slice_rows(c, 1, 3);
        Var m = mean_rows(transpose(transpose(s)));
        return add(sum(mul(s, t.constant(w))), mean(mul(m, m)));
      },
      {random_tensor({2, 5}, rng), random_tensor({3, 5}, rng)}, rng);
  EXPECT_LT(r.max_relative_error, kTolerance);
}

TEST(RowOps, SliceOutOfRangeThrows) {
  Tape tape;
  EXPECT_THROW(slice_rows(tape.constant(Tensor({3, 2})), 2, 2), ShapeError);
}

TEST(Element, PicksSingleEntry) {
  Tape tape;
  Var x = tape.variable(Tensor::matrix({{1, 2}, {3, 4}}));
  Var e = element(x, 1, 0);
  EXPECT_EQ(e.value().item(), 3.0);
  tape.backward(e);
  EXPECT_EQ(tape.grad(x), Tensor::matrix({{0, 0}, {1, 0}}));
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  Rng rng(14);
  const Tensor w = random_tensor({5, 8}, rng);
  for (bool causal : {false, true}) {
    const auto r = check_gradients(
        [&](Tape& t, std::span<const Var> x) {
          return sum(mul(attention(x[0], x[1], x[2], 2, causal), t.constant(w)));
        },
        {random_tensor({5, 8}, rng), random_tensor({5, 8}, rng), random_tensor({5, 8}, rng)}, rng);
    EXPECT_LT(r.max_relative_error, kTolerance) << "causal=" << causal;
  }
}

TEST(Attention, CausalMaskZeroesFutureWeights) {
  Rng rng(15);
  Tape tape;
  std::vector<Tensor> weights;
  Var q = tape.constant(random_tensor({4, 6}, rng));
  attention(q, q, q, 3, /*causal=*/true, &weights);
  ASSERT_EQ(weights.size(), 3u);
  for (const Tensor& p : weights) {
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        if (j > i) EXPECT_EQ(p.at(i, j), 0.0);
        total += p.at(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Attention, HeadCountMustDivideWidth) {
  Tape tape;
  Var q = tape.constant(Tensor({2, 6}));
  EXPECT_THROW(attention(q, q, q, 4, false), ShapeError);
}

}  // namespace
}  // namespace simplexlm

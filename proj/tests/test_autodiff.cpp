#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ptnet/gradcheck.hpp"
#include "ptnet/ops.hpp"
#include "test_util.hpp"

using namespace ptnet;
using testutil::bits_equal;
using testutil::max_err;
using testutil::random_tensor;

namespace {

constexpr double kTol = 1e-4;

// Fixed random projection so every output element contributes to the scalar.
Var project(Var y, std::uint64_t seed) {
  Tape& t = *y.tape;
  return ops::sum(ops::mul(y, t.constant(random_tensor(y.shape(), seed))));
}

GradCheckResult check(const std::function<Var(Tape&, std::span<const Var>)>& fn, const std::vector<Tensor>& point) {
  return grad_check(fn, point, GradCheckOptions{});
}

}  // namespace

TEST(Ops, ScalarExamples) {
  Tape t;
  const Var x = t.constant(Tensor({3}, std::vector<double>{-2.0, 3.0, 0.0}));
  const Var r = ops::relu(x);
  EXPECT_EQ(r.value()[0], 0.0);
  EXPECT_EQ(r.value()[1], 3.0);
  EXPECT_EQ(ops::sigmoid(x).value()[2], 0.5);
}

TEST(Ops, GradOfSumOfSquares) {
  Tape t;
  const Var x = t.leaf(Tensor({3}, std::vector<double>{1, 2, 3}));
  t.backward(ops::sum(ops::mul(x, x)));
  const Tensor* g = t.grad(x);
  ASSERT_NE(g, nullptr);
  EXPECT_EQ((*g)[0], 2.0);
  EXPECT_EQ((*g)[1], 4.0);
  EXPECT_EQ((*g)[2], 6.0);
}

TEST(Ops, SumGradIsOnes) {
  Tape t;
  const Var x = t.leaf(random_tensor({2, 3, 4}, 1));
  t.backward(ops::sum(x));
  for (double v : t.grad(x)->data()) EXPECT_EQ(v, 1.0);
}

TEST(Ops, MatmulHandAndIdentity) {
  Tape t;
  const Var a = t.constant(Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
  const Var b = t.constant(Tensor({2, 1}, std::vector<double>{1, 1}));
  const Tensor c = ops::matmul(a, b).value();
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[1], 7.0);
  const Tensor m = random_tensor({3, 4}, 2);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  EXPECT_TRUE(bits_equal(ops::matmul(t.constant(eye), t.constant(m)).value(), m));
}

TEST(Ops, ShapeErrorsAreRaised) {
  Tape t;
  const Var a = t.constant(Tensor({2, 3}));
  const Var b = t.constant(Tensor({2, 3}));
  EXPECT_THROW(ops::matmul(a, b), ShapeError);
  EXPECT_THROW(ops::add(a, t.constant(Tensor({3, 2}))), ShapeError);
}

TEST(Ops, NonFiniteValuesAreRejected) {
  Tape t;
  const Var a = t.constant(Tensor({1}, std::vector<double>{1e308}));
  EXPECT_THROW(ops::scale(a, 10.0), NonFiniteError);
}

TEST(Ops, ReduceMaxArgTieBreakAndRowScan) {
  Tape t;
  const Var r = t.leaf(Tensor({1, 3}, std::vector<double>{0.1, 0.9, 0.9}));
  ops::MaxArg m = ops::reduce_max_arg(r);
  EXPECT_EQ(m.indices[0], 1u);
  EXPECT_EQ(m.values.value()[0], 0.9);
  t.backward(ops::sum(m.values));
  const Tensor* g = t.grad(r);
  EXPECT_EQ((*g)[0], 0.0);
  EXPECT_EQ((*g)[1], 1.0);
  EXPECT_EQ((*g)[2], 0.0);

  const Tensor x = random_tensor({5, 7}, 3);
  ops::MaxArg mx = ops::reduce_max_arg(t.constant(x));
  for (std::size_t i = 0; i < 5; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 7; ++j)
      if (x[i * 7 + j] > x[i * 7 + best]) best = j;
    EXPECT_EQ(mx.indices[i], best);
    EXPECT_EQ(mx.values.value()[i], x[i * 7 + best]);
  }
}

TEST(Ops, PoolUnfoldFoldExamples) {
  Tape t;
  const Var x = t.constant(Tensor({1, 1, 2, 2}, std::vector<double>{1, 3, 5, 7}));
  EXPECT_EQ(ops::avg_pool(x, 2).value()[0], 4.0);

  const Tensor img = random_tensor({1, 2, 8, 8}, 4);
  const Var v = t.constant(img);
  const ConvGeometry tile{4, 4, 0};
  EXPECT_TRUE(bits_equal(ops::fold(ops::unfold(v, tile), 2, 8, 8, tile).value(), img));
  const ConvGeometry dense{3, 1, 1};
  const Var cols = ops::unfold(v, dense);
  EXPECT_EQ(cols.shape()[1], 64u);
  EXPECT_LE(max_err(ops::fold(cols, 2, 8, 8, dense).value(), img), 1e-12);
  const Var c = t.constant(Tensor({1, 1, 16, 16}, 0.7));
  const ConvGeometry value{12, 4, 4};
  for (double e : ops::fold(ops::unfold(c, value), 1, 16, 16, value).value().data()) EXPECT_NEAR(e, 0.7, 1e-15);
}

TEST(GradCheck, QuadraticFormIsExact) {
  const Tensor a = random_tensor({4, 4}, 5);
  const auto fn = [&](Tape& t, std::span<const Var> in) {
    const Var x = in[0];
    return ops::sum(ops::mul(x, ops::matmul(t.constant(a), x)));
  };
  const GradCheckResult r = check(fn, {random_tensor({4, 1}, 6)});
  EXPECT_LE(r.max_rel_error, 1e-10);
  EXPECT_EQ(r.checked, 4u);
}

TEST(GradCheck, ElementwiseOps) {
  const Tensor a0 = random_tensor({2, 3, 4, 4}, 7), b0 = random_tensor({2, 3, 4, 4}, 8, 0.5, 1.5);
  const auto fn = [](Tape&, std::span<const Var> in) {
    const Var a = in[0], b = in[1];
    Var y = ops::add(ops::mul(ops::sigmoid(a), b), ops::sub(ops::scale(a, 0.3), ops::affine(b, -2.0, 0.1)));
    y = ops::add(y, ops::reciprocal(b));
    return project(y, 9);
  };
  EXPECT_TRUE(check(fn, {a0, b0}).passed(kTol));
}

TEST(GradCheck, ChannelAndSpatialOps) {
  const auto fn = [](Tape&, std::span<const Var> in) {
    const Var x = in[0], s = in[1], m = in[2];
    const Var parts[] = {ops::slice_channels(x, 1, 2), ops::scale_channels(x, s)};
    const Var cat = ops::concat_channels(parts);
    const Var y = ops::scale_spatial(ops::upsample_nearest(ops::avg_pool(cat, 2), 2), m);
    return ops::add(project(y, 10), project(ops::global_avg_pool(x), 11));
  };
  EXPECT_TRUE(check(fn, {random_tensor({1, 3, 4, 6}, 12), random_tensor({1, 3, 1, 1}, 13),
                         random_tensor({1, 1, 4, 6}, 14)})
                  .passed(kTol));
}

TEST(GradCheck, TwoLayerConvReluChain) {
  const auto fn = [](Tape&, std::span<const Var> in) {
    const Var h = ops::relu(ops::conv2d(in[0], in[1], in[2], {3, 1, 1}));
    return project(ops::conv2d(h, in[3], in[4], {1, 1, 0}), 15);
  };
  const GradCheckResult r = check(fn, {random_tensor({1, 2, 5, 6}, 16), random_tensor({3, 2, 3, 3}, 17),
                                       random_tensor({3}, 18), random_tensor({2, 3, 1, 1}, 19), random_tensor({2}, 20)});
  EXPECT_TRUE(r.passed(kTol)) << r.max_rel_error;
}

TEST(GradCheck, PatchAttentionOps) {
  const auto fn = [](Tape&, std::span<const Var> in) {
    const ConvGeometry g{3, 1, 1};
    const Var q = ops::normalize_columns(ops::unfold(in[0], g), 1e-8);
    const Var k = ops::normalize_columns(ops::unfold(in[1], g), 1e-8);
    const Var r = ops::matmul(ops::transpose(q), k);
    const Var w = ops::softmax_rows(r, 0.5);
    const std::size_t idx[] = {3, 0, 0, 5, 1, 2, 7, 4, 6, 8, 8, 1};
    const Var gathered = ops::gather_columns(k, idx);
    const Var folded = ops::fold(ops::matmul(ops::unfold(in[1], g), ops::transpose(w)), 2, 3, 4, g);
    return ops::add(ops::add(project(folded, 21), project(gathered, 22)), ops::mean(ops::reshape(r, {144})));
  };
  EXPECT_TRUE(check(fn, {random_tensor({1, 2, 3, 4}, 23), random_tensor({1, 2, 3, 4}, 24)}).passed(kTol));
}

TEST(GradCheck, HardMaxAndClampAbs) {
  const auto fn = [](Tape&, std::span<const Var> in) {
    ops::MaxArg m = ops::reduce_max_arg(in[0]);
    return ops::add(project(ops::clamp(m.values, -0.5, 0.5), 25), ops::sum(ops::abs(in[0])));
  };
  const GradCheckResult r = check(fn, {random_tensor({4, 6}, 26)});
  EXPECT_TRUE(r.passed(kTol)) << r.max_rel_error << " margin " << r.argmax_margin;
}

TEST(GradCheck, ReluKinkIsSkipped) {
  const auto fn = [](Tape&, std::span<const Var> in) { return ops::sum(ops::relu(in[0])); };
  const GradCheckResult r = check(fn, {Tensor({3}, std::vector<double>{0.0, 1.0, -1.0})});
  EXPECT_EQ(r.skipped_nonsmooth, 1u);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_LE(r.max_rel_error, 1e-10);
}

TEST(GradCheck, SmallArgmaxMarginIsFlagged) {
  const auto fn = [](Tape&, std::span<const Var> in) { return ops::sum(ops::reduce_max_arg(in[0]).values); };
  const GradCheckResult r = check(fn, {Tensor({1, 3}, std::vector<double>{0.5, 0.5 + 1e-5, 0.1})});
  EXPECT_FALSE(r.margin_ok);
  EXPECT_FALSE(r.passed(kTol));
  EXPECT_LT(argmax_margin(fn, {Tensor({1, 3}, std::vector<double>{0.5, 0.5 + 1e-5, 0.1})}), 1e-3);
}

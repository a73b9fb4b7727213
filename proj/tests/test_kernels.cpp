#include <gtest/gtest.h>

#include <vector>

#include "ptnet/kernels.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace ptnet;
using testutil::bits_equal;
using testutil::max_err;
using testutil::random_tensor;

namespace {

Tensor direct_conv(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeometry& g) {
  return oracle::conv(x, w, b, g.stride, g.pad);
}

}  // namespace

TEST(Gemm, MatchesReferenceBitwise) {
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, {3, 5, 7}, {17, 33, 65}, {64, 9, 300}, {8, 1024, 16}}) {
    const Tensor a = random_tensor({std::size_t(m), std::size_t(k)}, 1);
    const Tensor b = random_tensor({std::size_t(k), std::size_t(n)}, 2);
    Tensor c1({std::size_t(m), std::size_t(n)}), c2 = c1;
    kernels::gemm(m, n, k, a.ptr(), b.ptr(), c1.ptr(), false);
    reference::gemm(m, n, k, a.ptr(), b.ptr(), c2.ptr(), false);
    EXPECT_TRUE(bits_equal(c1, c2)) << m << "x" << n << "x" << k;
    kernels::gemm(m, n, k, a.ptr(), b.ptr(), c1.ptr(), true);
    reference::gemm(m, n, k, a.ptr(), b.ptr(), c2.ptr(), true);
    EXPECT_TRUE(bits_equal(c1, c2));
  }
}

TEST(Gemm, SmallHandExample) {
  const double a[] = {1, 2, 3, 4}, b[] = {1, 1};
  double c[2];
  kernels::gemm(2, 1, 2, a, b, c, false);
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[1], 7.0);
}

TEST(GemmNt, AgreesWithReferenceToRounding) {
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, {4, 3, 7}, {8, 72, 9216}, {5, 5, 8}, {13, 2, 23}}) {
    const Tensor a = random_tensor({std::size_t(m), std::size_t(k)}, 3);
    const Tensor b = random_tensor({std::size_t(n), std::size_t(k)}, 4);
    Tensor c1({std::size_t(m), std::size_t(n)}, 0.5), c2 = c1;
    kernels::gemm_nt(m, n, k, a.ptr(), b.ptr(), c1.ptr(), true);
    reference::gemm_nt(m, n, k, a.ptr(), b.ptr(), c2.ptr(), true);
    EXPECT_LE(max_err(c1, c2), 1e-12 * k) << m << "x" << n << "x" << k;
  }
}

TEST(Conv, IdentityKernel) {
  const Tensor x = random_tensor({1, 1, 5, 6}, 5);
  const Tensor w({1, 1, 1, 1}, 1.0), b({1}, 0.0);
  EXPECT_TRUE(bits_equal(kernels::conv2d_forward(x, w, b, {1, 1, 0}), x));
}

TEST(Conv, AveragingKernelOnConstantInterior) {
  const Tensor x({1, 1, 6, 6}, 5.0);
  const Tensor w({1, 1, 3, 3}, 1.0 / 9.0), b({1}, 0.0);
  const Tensor y = kernels::conv2d_forward(x, w, b, {3, 1, 1});
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t j = 1; j < 5; ++j) EXPECT_NEAR(y[i * 6 + j], 5.0, 1e-14);
}

TEST(Conv, MatchesDirectLoopOracle) {
  const Tensor x = random_tensor({1, 2, 5, 5}, 6);
  const Tensor w = random_tensor({3, 2, 3, 3}, 7);
  const Tensor b = random_tensor({3}, 8);
  EXPECT_LE(max_err(kernels::conv2d_forward(x, w, b, {3, 1, 1}), direct_conv(x, w, b, {3, 1, 1})), 1e-12);
  const Tensor x2 = random_tensor({2, 3, 9, 7}, 9);
  const Tensor w2 = random_tensor({4, 3, 3, 3}, 10);
  const Tensor b2 = random_tensor({4}, 11);
  EXPECT_LE(max_err(kernels::conv2d_forward(x2, w2, b2, {3, 2, 0}), direct_conv(x2, w2, b2, {3, 2, 0})), 1e-12);
}

TEST(Conv, ParallelMatchesSerialReferenceBitwise) {
  for (std::size_t k : {1, 3}) {
    const ConvGeometry g{k, 1, k / 2};
    const Tensor x = random_tensor({2, 6, 12, 20}, 12);
    const Tensor w = random_tensor({5, 6, k, k}, 13);
    const Tensor b = random_tensor({5}, 14);
    EXPECT_TRUE(bits_equal(kernels::conv2d_forward(x, w, b, g), reference::conv2d_forward(x, w, b, g)));
  }
}

TEST(Conv, BackwardMatchesReference) {
  for (std::size_t k : {1, 3}) {
    const ConvGeometry g{k, 1, k / 2};
    const Tensor x = random_tensor({2, 4, 8, 12}, 15);
    const Tensor w = random_tensor({3, 4, k, k}, 16);
    const Tensor dy = random_tensor({2, 3, 8, 12}, 17);
    Tensor dx1, dw1, db1, dx2, dw2, db2;
    kernels::conv2d_backward(x, w, dy, g, &dx1, &dw1, &db1);
    reference::conv2d_backward(x, w, dy, g, &dx2, &dw2, &db2);
    EXPECT_LE(max_err(dx1, dx2), 1e-12);
    EXPECT_LE(max_err(dw1, dw2), 1e-12);
    EXPECT_LE(max_err(db1, db2), 1e-12);
  }
}

TEST(Conv, ThreadCountDoesNotChangeResults) {
  const Tensor x = random_tensor({1, 8, 16, 16}, 18);
  const Tensor w = random_tensor({8, 8, 3, 3}, 19);
  const Tensor b = random_tensor({8}, 20);
  set_num_threads(1);
  const Tensor y1 = kernels::conv2d_forward(x, w, b, {});
  Tensor dw1;
  kernels::conv2d_backward(x, w, y1, {}, nullptr, &dw1, nullptr);
  set_num_threads(4);
  const Tensor y4 = kernels::conv2d_forward(x, w, b, {});
  Tensor dw4;
  kernels::conv2d_backward(x, w, y4, {}, nullptr, &dw4, nullptr);
  set_num_threads(max_threads());
  EXPECT_TRUE(bits_equal(y1, y4));
  EXPECT_TRUE(bits_equal(dw1, dw4));
}

TEST(Pool, ConstantAndHandExample) {
  const Tensor c({1, 2, 8, 8}, 3.25);
  const Tensor p = kernels::avg_pool(c, 4);
  ASSERT_EQ(p.shape(), (Shape{1, 2, 2, 2}));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], 3.25);
  const Tensor x({1, 1, 2, 2}, std::vector<double>{1, 3, 5, 7});
  EXPECT_EQ(kernels::avg_pool(x, 2)[0], 4.0);
}

TEST(Pool, UpsampleInvertsPoolOnBlockConstantInput) {
  const Tensor low = random_tensor({1, 3, 2, 3}, 21);
  const Tensor x = kernels::upsample_nearest(low, 4);
  EXPECT_LE(max_err(kernels::upsample_nearest(kernels::avg_pool(x, 4), 4), x), 1e-15);
  EXPECT_TRUE(bits_equal(kernels::avg_pool(x, 4), reference::avg_pool(x, 4)));
  EXPECT_TRUE(bits_equal(x, reference::upsample_nearest(low, 4)));
}

TEST(Im2col, MatchesReferenceAndCoverage) {
  const Tensor x = random_tensor({3, 7, 9}, 22);
  for (ConvGeometry g : {ConvGeometry{3, 1, 1}, ConvGeometry{12, 4, 4}, ConvGeometry{2, 2, 0}}) {
    if ((7 + 2 * g.pad - g.kernel) % g.stride || (9 + 2 * g.pad - g.kernel) % g.stride) continue;
    const std::size_t l = g.out_extent(7) * g.out_extent(9), rows = 3 * g.kernel * g.kernel;
    std::vector<double> a(rows * l), b(rows * l);
    kernels::im2col(x.ptr(), 3, 7, 9, g, a.data());
    reference::im2col(x.ptr(), 3, 7, 9, g, b.data());
    EXPECT_EQ(a, b);
    // col2im of all-ones columns counts coverage.
    std::vector<double> ones(rows * l, 1.0), img(3 * 7 * 9), cov(7 * 9);
    kernels::col2im(ones.data(), 3, 7, 9, g, img.data());
    kernels::coverage(7, 9, g, cov.data());
    for (std::size_t i = 0; i < cov.size(); ++i) EXPECT_EQ(img[i], cov[i]);
  }
}

TEST(Geometry, RejectsNonIntegralExtent) {
  EXPECT_THROW((ConvGeometry{3, 2, 0}.out_extent(6)), ShapeError);
  EXPECT_EQ((ConvGeometry{12, 4, 4}.out_extent(16)), 4u);
}

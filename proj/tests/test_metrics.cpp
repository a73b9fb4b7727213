#include <gtest/gtest.h>

#include <cmath>

#include "ptnet/codec.hpp"
#include "ptnet/data.hpp"
#include "ptnet/metrics.hpp"
#include "test_util.hpp"

using namespace ptnet;
using namespace ptnet::metrics;

namespace {

ImagePlane noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  ImagePlane p(w, h);
  Rng rng(seed);
  for (auto& v : p.pixels) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return p;
}

// Windowed SSIM summed directly over each 11x11 window.
double ssim_oracle(const ImagePlane& a, const ImagePlane& b) {
  double g[11][11], gs = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y + 11 <= a.height; ++y)
    for (std::size_t x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += g[i][j] / gs * a.at(x + j, y + i);
          mb += g[i][j] / gs * b.at(x + j, y + i);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = a.at(x + j, y + i) - ma, db = b.at(x + j, y + i) - mb;
          va += g[i][j] / gs * da * da;
          vb += g[i][j] / gs * db * db;
          cov += g[i][j] / gs * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return total / static_cast<double>(n);
}

}  // namespace

TEST(Psnr, IdenticalAndUnitError) {
  const ImagePlane a = noise_image(20, 16, 1);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_EQ(capped(psnr(a, a)), kPsnrCap);
  ImagePlane b = a;
  for (auto& v : b.pixels) v = v < 255 ? v + 1 : v - 1;
  EXPECT_NEAR(psnr(a, b), 20.0 * std::log10(255.0), 1e-9);
  EXPECT_NEAR(psnr(a, b), 48.1308, 1e-3);
}

TEST(Ssim, IdenticalIsOne) {
  const ImagePlane a = noise_image(32, 24, 2);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantsGiveLuminanceTerm) {
  const ImagePlane a(16, 16, 100), b(16, 16, 110);
  const double c1 = std::pow(0.01 * 255, 2);
  EXPECT_NEAR(ssim(a, b), (2.0 * 100 * 110 + c1) / (100.0 * 100 + 110.0 * 110 + c1), 1e-12);
}

TEST(Ssim, MatchesWindowedSumOracle) {
  const ImagePlane a = noise_image(29, 23, 3), b = noise_image(29, 23, 4);
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-8);
  data::SynthSpec s;
  s.seed = 5;
  s.width = 48;
  s.height = 40;
  const ImagePlane c = data::synth_stereo(s).pair.left;
  const ImagePlane d = codec::degrade(c, 10);
  EXPECT_NEAR(ssim(c, d), ssim_oracle(c, d), 1e-8);
}

TEST(PsnrB, NoBlockingMeansPsnr) {
  const ImagePlane ref = noise_image(32, 32, 6);
  const ImagePlane flat(32, 32, 90);
  EXPECT_EQ(blocking_effect(flat).eta, 0.0);
  EXPECT_EQ(psnr_b(ref, flat), psnr(ref, flat));
}

TEST(PsnrB, ConstantTilesArePenalized) {
  ImagePlane tiles(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) tiles.at(x, y) = static_cast<std::uint8_t>(40 + 25 * ((x / 8 + 3 * (y / 8)) % 7));
  const BlockingEffect e = blocking_effect(tiles);
  EXPECT_EQ(e.non_boundary_msd, 0.0);
  EXPECT_GT(e.boundary_msd, 0.0);
  EXPECT_NEAR(e.eta, 3.0 / 5.0, 1e-15);
  const ImagePlane ref = noise_image(32, 32, 7);
  EXPECT_LT(psnr_b(ref, tiles), psnr(ref, tiles));
}

TEST(PsnrB, JpegOutputsNeverScoreAbovePsnr) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    data::SynthSpec s;
    s.seed = seed;
    s.width = 64;
    s.height = 48;
    const ImagePlane img = data::synth_stereo(s).pair.left;
    for (int qf : {10, 30, 70}) EXPECT_LE(psnr_b(img, codec::degrade(img, qf)), psnr(img, codec::degrade(img, qf)));
  }
}

TEST(Report, PairAverageAndCaps) {
  const ImagePlane a = noise_image(24, 24, 8), b = noise_image(24, 24, 9);
  const auto [left, avg] = evaluate_pair(a, b, a, b);
  EXPECT_EQ(left.psnr, kPsnrCap);
  // Blocking is measured on the test image alone, so identical noise still pays its BEF.
  EXPECT_EQ(avg.psnr_b, (capped(psnr_b(a, a)) + capped(psnr_b(b, b))) / 2.0);
  EXPECT_NEAR(avg.ssim, 1.0, 1e-9);
  EXPECT_EQ(avg.scope, Scope::PairAverage);
  const ImagePlane ad = codec::degrade(a, 10), bd = codec::degrade(b, 20);
  const auto [l2, a2] = evaluate_pair(a, b, ad, bd);
  const QualityReport r = evaluate(b, bd);
  EXPECT_EQ(a2.psnr, (l2.psnr + r.psnr) / 2.0);
  EXPECT_EQ(a2.ssim, (l2.ssim + r.ssim) / 2.0);
  EXPECT_EQ(a2.psnr_b, (l2.psnr_b + r.psnr_b) / 2.0);
  EXPECT_EQ((QualityReport{25.99, 0.7868, 23.72}.cell()), "25.99/0.7868/23.72");
}

TEST(Report, DirectoryMatchesPerImageSums) {
  const auto ref = testutil::scratch_dir("metrics_ref"), test = testutil::scratch_dir("metrics_test");
  std::vector<QualityReport> per;
  const char* names[] = {"a_L.png", "a_R.png", "b_L.png", "c_R.png"};
  for (std::size_t i = 0; i < 4; ++i) {
    const ImagePlane img = noise_image(24, 16, 10 + i);
    const ImagePlane deg = codec::degrade(img, 15 + 10 * static_cast<int>(i));
    write_png(ref / names[i], img);
    write_png(test / names[i], deg);
    per.push_back(evaluate(img, deg));
  }
  const DirectoryReport rep = evaluate_directory(ref, test);
  ASSERT_EQ(rep.images.size(), 4u);
  double p = 0, s = 0, pb = 0;
  for (const auto& r : per) {
    p += r.psnr;
    s += r.ssim;
    pb += r.psnr_b;
  }
  EXPECT_NEAR(rep.mean.psnr, p / 4, 1e-12);
  EXPECT_NEAR(rep.mean.ssim, s / 4, 1e-12);
  EXPECT_NEAR(rep.mean.psnr_b, pb / 4, 1e-12);
  EXPECT_EQ(rep.pairs, 1u);
  EXPECT_NEAR(rep.left_mean.psnr, per[0].psnr, 1e-12);
  EXPECT_NEAR(rep.pair_mean.ssim, (per[0].ssim + per[1].ssim) / 2, 1e-12);
}

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ptnet/image.hpp"

namespace ptnet::metrics {

// Aggregation cap for infinite PSNR (identical images).
inline constexpr double kPsnrCap = 100.0;

enum class Scope { Left, PairAverage };

struct QualityReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_b = 0.0;
  Scope scope = Scope::Left;

  // "P/S/PB" cell, e.g. "25.99/0.7868/23.72".
  std::string cell() const;
};

double mse(const ImagePlane& ref, const ImagePlane& test);
// 10 log10(255^2 / MSE); +inf for identical planes.
double psnr(const ImagePlane& ref, const ImagePlane& test);
// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, mean over valid windows.
double ssim(const ImagePlane& ref, const ImagePlane& test);

struct BlockingEffect {
  double boundary_msd = 0.0;      // mean squared step across block boundaries of the test image
  double non_boundary_msd = 0.0;  // same over all other adjacent pairs
  double eta = 0.0;
  double bef = 0.0;
};
BlockingEffect blocking_effect(const ImagePlane& test, std::size_t block = 8);
// 10 log10(255^2 / (MSE + BEF)).
double psnr_b(const ImagePlane& ref, const ImagePlane& test, std::size_t block = 8);

double capped(double db);

QualityReport evaluate(const ImagePlane& ref, const ImagePlane& test);
// Left-view report and the arithmetic mean of left/right metrics (both PSNR-capped).
std::pair<QualityReport, QualityReport> evaluate_pair(const ImagePlane& ref_left, const ImagePlane& ref_right,
                                                      const ImagePlane& test_left, const ImagePlane& test_right);

struct ImageReport {
  std::string name;
  QualityReport report;
};

struct DirectoryReport {
  std::vector<ImageReport> images;  // sorted by file name
  QualityReport mean;               // over every image
  std::size_t pairs = 0;            // <name>_L.png with a matching <name>_R.png
  QualityReport left_mean;          // over pairs, left views
  QualityReport pair_mean;          // over pairs, (left + right) / 2
};

// Every PNG in `ref_dir` against the same file name in `test_dir`.
DirectoryReport evaluate_directory(const std::filesystem::path& ref_dir, const std::filesystem::path& test_dir);

}  // namespace ptnet::metrics

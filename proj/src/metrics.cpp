#include "ptnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ptnet::metrics {

namespace {

void require_same(const char* what, const ImagePlane& a, const ImagePlane& b) {
  if (a.width != b.width || a.height != b.height || a.empty())
    throw std::invalid_argument(std::string(what) + ": image extents differ or are empty");
}

double to_db(double err) {
  if (err <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / err);
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_1d() {
  std::array<double, kWin> g{};
  double s = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    s += g[i];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Valid-region separable filtering of a W x H field.
std::vector<double> filter_valid(const std::vector<double>& f, std::size_t w, std::size_t h,
                                 const std::array<double, kWin>& g) {
  const std::size_t ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += g[k] * f[y * w + x + k];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

std::string QualityReport::cell() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f/%.4f/%.2f", psnr, ssim, psnr_b);
  return buf;
}

double mse(const ImagePlane& ref, const ImagePlane& test) {
  require_same("mse", ref, test);
  double s = 0.0;
  for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
    const double d = static_cast<double>(ref.pixels[i]) - test.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(ref.pixels.size());
}

double psnr(const ImagePlane& ref, const ImagePlane& test) { return to_db(mse(ref, test)); }

double ssim(const ImagePlane& ref, const ImagePlane& test) {
  require_same("ssim", ref, test);
  if (ref.width < kWin || ref.height < kWin) throw std::invalid_argument("ssim: image smaller than 11x11 window");
  const std::size_t w = ref.width, h = ref.height, n = w * h;
  std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = ref.pixels[i];
    b[i] = test.pixels[i];
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto g = gaussian_1d();
  const auto mu_a = filter_valid(a, w, h, g);
  const auto mu_b = filter_valid(b, w, h, g);
  const auto e_aa = filter_valid(aa, w, h, g);
  const auto e_bb = filter_valid(bb, w, h, g);
  const auto e_ab = filter_valid(ab, w, h, g);
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

BlockingEffect blocking_effect(const ImagePlane& test, std::size_t block) {
  const std::size_t w = test.width, h = test.height;
  if (block < 2 || w <= block || h <= block) throw std::invalid_argument("psnr_b: image must exceed the block size");
  double sum_b = 0.0, sum_bc = 0.0;
  std::size_t n_b = 0, n_bc = 0;
  auto visit = [&](double d, bool boundary) {
    if (boundary) {
      sum_b += d * d;
      ++n_b;
    } else {
      sum_bc += d * d;
      ++n_bc;
    }
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x + 1 < w; ++x)
      visit(static_cast<double>(test.at(x, y)) - test.at(x + 1, y), (x + 1) % block == 0);
  for (std::size_t y = 0; y + 1 < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      visit(static_cast<double>(test.at(x, y)) - test.at(x, y + 1), (y + 1) % block == 0);
  BlockingEffect e;
  e.boundary_msd = sum_b / static_cast<double>(n_b);
  e.non_boundary_msd = sum_bc / static_cast<double>(n_bc);
  if (e.boundary_msd > e.non_boundary_msd)
    e.eta = std::log2(static_cast<double>(block)) / std::log2(static_cast<double>(std::min(w, h)));
  e.bef = e.eta * (e.boundary_msd - e.non_boundary_msd);
  return e;
}

double psnr_b(const ImagePlane& ref, const ImagePlane& test, std::size_t block) {
  require_same("psnr_b", ref, test);
  return to_db(mse(ref, test) + blocking_effect(test, block).bef);
}

double capped(double db) { return std::isinf(db) || db > kPsnrCap ? kPsnrCap : db; }

QualityReport evaluate(const ImagePlane& ref, const ImagePlane& test) {
  return {capped(psnr(ref, test)), ssim(ref, test), capped(psnr_b(ref, test)), Scope::Left};
}

std::pair<QualityReport, QualityReport> evaluate_pair(const ImagePlane& ref_left, const ImagePlane& ref_right,
                                                      const ImagePlane& test_left, const ImagePlane& test_right) {
  const QualityReport left = evaluate(ref_left, test_left);
  const QualityReport right = evaluate(ref_right, test_right);
  QualityReport avg{(left.psnr + right.psnr) / 2.0, (left.ssim + right.ssim) / 2.0, (left.psnr_b + right.psnr_b) / 2.0,
                    Scope::PairAverage};
  return {left, avg};
}

namespace {

QualityReport mean_of(const std::vector<QualityReport>& rs, Scope scope) {
  QualityReport m;
  m.scope = scope;
  if (rs.empty()) return m;
  for (const auto& r : rs) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.psnr_b += r.psnr_b;
  }
  const double n = static_cast<double>(rs.size());
  m.psnr /= n;
  m.ssim /= n;
  m.psnr_b /= n;
  return m;
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

}  // namespace

DirectoryReport evaluate_directory(const std::filesystem::path& ref_dir, const std::filesystem::path& test_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(ref_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());

  DirectoryReport out;
  std::vector<QualityReport> all;
  for (const auto& n : names) {
    const fs::path t = test_dir / n;
    if (!fs::exists(t)) throw std::runtime_error("missing test image " + t.string());
    out.images.push_back({n, evaluate(read_png(ref_dir / n), read_png(t))});
    all.push_back(out.images.back().report);
  }
  out.mean = mean_of(all, Scope::Left);

  std::vector<QualityReport> left, pair;
  for (const auto& img : out.images) {
    if (!ends_with(img.name, "_L.png")) continue;
    const std::string partner = img.name.substr(0, img.name.size() - 6) + "_R.png";
    const auto it = std::find_if(out.images.begin(), out.images.end(), [&](const ImageReport& r) { return r.name == partner; });
    if (it == out.images.end()) continue;
    left.push_back(img.report);
    pair.push_back(mean_of({img.report, it->report}, Scope::PairAverage));
  }
  out.pairs = left.size();
  out.left_mean = mean_of(left, Scope::Left);
  out.pair_mean = mean_of(pair, Scope::PairAverage);
  return out;
}

}  // namespace ptnet::metrics

#include "ptnet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ptnet::codec {

namespace {

constexpr std::array<int, 64> kAnnexKLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

// cos((2x + 1) u pi / 16), unnormalized.
const std::array<double, 64>& cos_table() {
  static const std::array<double, 64> table = [] {
    std::array<double, 64> c{};
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) c[u * 8 + x] = u == 0 ? 1.0 : std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    return c;
  }();
  return table;
}

// alpha(u) alpha(v); the DC entry is exactly 1/8 so DC ties round like integer arithmetic.
const std::array<double, 64>& norm_table() {
  static const std::array<double, 64> table = [] {
    std::array<double, 64> n{};
    for (int v = 0; v < 8; ++v)
      for (int u = 0; u < 8; ++u) {
        double a = 0.25;
        if (u == 0) a *= std::numbers::sqrt2 / 2.0;
        if (v == 0) a *= std::numbers::sqrt2 / 2.0;
        n[v * 8 + u] = (u == 0 && v == 0) ? 0.125 : a;
      }
    return n;
  }();
  return table;
}

}  // namespace

QuantTable luma_quant_table(int qf) {
  if (qf < 1 || qf > 100) throw std::invalid_argument("quality factor must be in [1, 100], got " + std::to_string(qf));
  const long scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  QuantTable t;
  for (std::size_t i = 0; i < 64; ++i) t.q[i] = static_cast<int>(std::clamp((kAnnexKLuma[i] * scale + 50) / 100, 1L, 255L));
  return t;
}

Block8 dct8(const Block8& block) {
  const auto& c = cos_table();
  const auto& n = norm_table();
  Block8 tmp{}, out{};
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += c[u * 8 + x] * block[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += c[v * 8 + y] * tmp[y * 8 + u];
      out[v * 8 + u] = s * n[v * 8 + u];
    }
  return out;
}

Block8 idct8(const Block8& coeffs) {
  const auto& c = cos_table();
  const auto& n = norm_table();
  Block8 scaled{}, tmp{}, out{};
  for (int i = 0; i < 64; ++i) scaled[i] = coeffs[i] * n[i];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += c[u * 8 + x] * scaled[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += c[v * 8 + y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
  return out;
}

ImagePlane degrade(const ImagePlane& img, int qf) {
  if (img.empty()) throw std::invalid_argument("degrade: empty image");
  const QuantTable table = luma_quant_table(qf);
  const std::size_t pw = (img.width + 7) / 8 * 8;
  const std::size_t ph = (img.height + 7) / 8 * 8;
  const ImagePlane padded = pad_replicate(img, pw, ph);
  ImagePlane out(img.width, img.height);
  const std::size_t bx_count = pw / 8;
  const long long blocks = static_cast<long long>(bx_count * (ph / 8));
#pragma omp parallel for schedule(static)
  for (long long bi = 0; bi < blocks; ++bi) {
    const std::size_t bx = static_cast<std::size_t>(bi) % bx_count;
    const std::size_t by = static_cast<std::size_t>(bi) / bx_count;
    Block8 block{};
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) block[y * 8 + x] = padded.at(bx * 8 + x, by * 8 + y) - 128.0;
    Block8 coeffs = dct8(block);
    for (std::size_t i = 0; i < 64; ++i) coeffs[i] = std::round(coeffs[i] / table.q[i]) * table.q[i];
    const Block8 rec = idct8(coeffs);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const std::size_t ix = bx * 8 + x, iy = by * 8 + y;
        if (ix >= img.width || iy >= img.height) continue;
        out.at(ix, iy) = static_cast<std::uint8_t>(std::clamp(std::round(rec[y * 8 + x] + 128.0), 0.0, 255.0));
      }
  }
  return out;
}

}  // namespace ptnet::codec

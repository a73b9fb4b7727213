#pragma once

// Brute-force loop matcher: explicit patch vectors, cosine relevance, row scans and a
// scatter-average transfer. Accumulations follow the library's contract (fma chains in
// ascending index order from zero) so indices and confidences can be compared exactly.

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracle.hpp"

namespace oracle {

struct LoopMatch {
  std::vector<std::size_t> l2r_index, r2l_index;
  std::vector<double> l2r_conf, r2l_conf;
  Tensor l2r_features, r2l_features;
};

// 3x3 zero-padded patch around every grid position, unit-normalized (eps 1e-8).
inline std::vector<std::vector<double>> patch_vectors(const Tensor& g) {
  const std::size_t c = g.dim(1), h = g.dim(2), w = g.dim(3);
  std::vector<std::vector<double>> out;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::vector<double> v;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long long yy = static_cast<long long>(y) + dy, xx = static_cast<long long>(x) + dx;
            const bool inside = yy >= 0 && xx >= 0 && yy < static_cast<long long>(h) && xx < static_cast<long long>(w);
            v.push_back(inside ? g[(ch * h + yy) * w + xx] : 0.0);
          }
      double n = 0.0;
      for (double e : v) n = std::fma(e, e, n);
      n = std::max(std::sqrt(n), 1e-8);
      for (double& e : v) e /= n;
      out.push_back(std::move(v));
    }
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s = std::fma(a[i], b[i], s);
  return s;
}

// Copies the 12x12 reference patch (stride 4, pad 4) of grid cell src to the location of
// grid cell dst and averages the real source pixels that overlap there.
inline Tensor scatter_average(const Tensor& v, const std::vector<std::size_t>& index, std::size_t gw) {
  const std::size_t c = v.dim(1), h = v.dim(2), w = v.dim(3);
  Tensor sum({1, c, h, w}), count({h, w});
  for (std::size_t dst = 0; dst < index.size(); ++dst) {
    const long long dy0 = static_cast<long long>(dst / gw) * 4 - 4, dx0 = static_cast<long long>(dst % gw) * 4 - 4;
    const long long sy0 = static_cast<long long>(index[dst] / gw) * 4 - 4, sx0 = static_cast<long long>(index[dst] % gw) * 4 - 4;
    for (long long u = 0; u < 12; ++u)
      for (long long t = 0; t < 12; ++t) {
        const long long dy = dy0 + u, dx = dx0 + t, sy = sy0 + u, sx = sx0 + t;
        if (dy < 0 || dx < 0 || dy >= static_cast<long long>(h) || dx >= static_cast<long long>(w)) continue;
        if (sy < 0 || sx < 0 || sy >= static_cast<long long>(h) || sx >= static_cast<long long>(w)) continue;
        count[dy * w + dx] += 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) sum[(ch * h + dy) * w + dx] += v[(ch * h + sy) * w + sx];
      }
  }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) sum[ch * h * w + i] /= count[i];
  return sum;
}

// Left-to-right: queries from the right view, keys/values from the left; right-to-left swaps.
inline LoopMatch loop_match(const Tensor& fl, const Tensor& fr) {
  const std::size_t gw = fl.dim(3) / 4;
  const auto kl = patch_vectors(pool(fl, 4));
  const auto kr = patch_vectors(pool(fr, 4));
  const std::size_t l = kl.size();
  LoopMatch m;
  auto scan = [&](const std::vector<std::vector<double>>& queries, const std::vector<std::vector<double>>& keys,
                  std::vector<std::size_t>& idx, std::vector<double>& conf) {
    for (std::size_t i = 0; i < l; ++i) {
      std::size_t best = 0;
      double best_v = dot(queries[i], keys[0]);
      for (std::size_t j = 1; j < l; ++j) {
        const double v = dot(queries[i], keys[j]);
        if (v > best_v) {
          best_v = v;
          best = j;
        }
      }
      idx.push_back(best);
      conf.push_back(best_v);
    }
  };
  scan(kr, kl, m.l2r_index, m.l2r_conf);
  scan(kl, kr, m.r2l_index, m.r2l_conf);
  m.l2r_features = scatter_average(fl, m.l2r_index, gw);
  m.r2l_features = scatter_average(fr, m.r2l_index, gw);
  return m;
}

}  // namespace oracle

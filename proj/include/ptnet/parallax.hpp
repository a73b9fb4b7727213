#pragma once

// Bi-directional parallax transformer: cosine relevance between 4x-downsampled views,
// hard-attention patch selection, full-resolution transfer and confidence maps. The
// right-to-left direction reuses the transposed relevance of the left-to-right one.
// The module holds no learned parameters.

#include <cstddef>
#include <span>
#include <vector>

#include "ptnet/kernels.hpp"
#include "ptnet/tape.hpp"

namespace ptnet::parallax {

inline constexpr std::size_t kDownsample = 4;
inline constexpr double kNormEps = 1e-8;
// Query/key patches on the low-resolution grid.
inline constexpr ConvGeometry kQueryPatch{3, 1, 1};
// Value patches at full resolution: four times the query patch, aligned 4:1 with it.
inline constexpr ConvGeometry kValuePatch{12, 4, 4};

enum class Direction { LeftToRight, RightToLeft };
enum class AttentionMode { Hard, Soft };

struct Qkv {
  Var query;  // target view, downsampled
  Var key;    // reference view, downsampled
  Var value;  // reference view, full resolution
};

// LeftToRight: Q = F_R down, K = F_L down, V = F_L; RightToLeft swaps the views.
Qkv build_qkv(Var f_left, Var f_right, Direction dir);

// Unfolded (k=3, s=1, p=1) and column-normalized patches of a 1 x C x h x w map.
Var normalized_patches(Var x);

// R[i][j] = cos(query patch i, key patch j); rows index target positions.
Var relevance(Var query, Var key);

struct HardMatch {
  std::vector<std::size_t> indices;  // m_i, no gradient
  Var confidence;                    // c_i = max_j r_ij, shape {rows}
};

// Per-row argmax with smallest-index tie-break. With `same_row` set, queries only
// consider keys on their own low-resolution row (grid width `grid_w`).
HardMatch hard_match(Var r, bool same_row = false, std::size_t grid_w = 0);

// z_i = v_{m_i} over k=12/s=4/p=4 patches of V, folded with overlap averaging. Each
// output pixel averages the real (non-padding) source pixels landing on it.
Var transfer(Var value, std::span<const std::size_t> indices);

// Low-res confidences (h x w values) clamped to [0, 1], replicated 4x: 1 x 1 x 4h x 4w.
Var expand_confidence(Var confidence, std::size_t grid_h, std::size_t grid_w);

struct Converted {
  Var features;                      // 1 x C x H x W
  Var confidence;                    // 1 x 1 x H x W in [0, 1]
  Var confidence_lowres;             // {h*w}, raw cosine maxima
  std::vector<std::size_t> indices;  // matched reference position per query
};

struct BiptmOutput {
  Converted left_to_right;  // reference L, target R
  Converted right_to_left;  // reference R, target L
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

struct BiptmOptions {
  AttentionMode mode = AttentionMode::Hard;
  double temperature = 1.0;  // soft mode only
  bool same_row = false;     // restrict matching to the same low-res row (hard mode)
};

// When neither input needs a gradient the relevance matrix is never materialized: a
// streaming matcher computes both directions' maxima tile by tile with identical dot
// products, so the result matches the recorded path bit for bit.
BiptmOutput biptm_forward(Var f_left, Var f_right, const BiptmOptions& opts = {});

struct StreamingMatch {
  std::vector<std::size_t> row_index;  // argmax over keys for each query
  std::vector<double> row_max;
  std::vector<std::size_t> col_index;  // argmax over queries for each key (transposed direction)
  std::vector<double> col_max;
};

// query/key: D x L normalized patch matrices. Entries equal relevance(query, key).
StreamingMatch match_streaming(const Tensor& query, const Tensor& key, bool same_row = false,
                               std::size_t grid_w = 0);

}  // namespace ptnet::parallax

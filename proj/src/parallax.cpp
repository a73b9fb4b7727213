#include "ptnet/parallax.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "ptnet/ops.hpp"

namespace ptnet::parallax {

namespace {

void require_map(const char* what, const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[0] != 1) throw ShapeError(std::string(what) + ": expected 1xCxHxW, got " + shape_str(s));
}

std::vector<ops::ColumnRange> row_windows(std::size_t rows, std::size_t cols, bool same_row, std::size_t grid_w) {
  std::vector<ops::ColumnRange> r(rows, ops::ColumnRange{0, cols});
  if (!same_row) return r;
  if (grid_w == 0 || cols % grid_w != 0) throw std::invalid_argument("same-row matching needs the grid width");
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t row = i / grid_w;
    r[i] = {row * grid_w, (row + 1) * grid_w};
  }
  return r;
}

}  // namespace

Qkv build_qkv(Var f_left, Var f_right, Direction dir) {
  require_map("build_qkv", f_left);
  if (f_left.shape() != f_right.shape())
    throw ShapeError("build_qkv: view shapes differ " + shape_str(f_left.shape()) + " vs " + shape_str(f_right.shape()));
  const Shape& s = f_left.shape();
  if (s[2] % kDownsample != 0 || s[3] % kDownsample != 0)
    throw ShapeError("build_qkv: extents must be divisible by 4, got " + shape_str(s));
  if (dir == Direction::LeftToRight)
    return {ops::avg_pool(f_right, kDownsample), ops::avg_pool(f_left, kDownsample), f_left};
  return {ops::avg_pool(f_left, kDownsample), ops::avg_pool(f_right, kDownsample), f_right};
}

Var normalized_patches(Var x) { return ops::normalize_columns(ops::unfold(x, kQueryPatch), kNormEps); }

Var relevance(Var query, Var key) {
  require_map("relevance", query);
  require_map("relevance", key);
  if (query.shape()[1] != key.shape()[1]) throw ShapeError("relevance: query/key channel counts differ");
  return ops::matmul(ops::transpose(normalized_patches(query)), normalized_patches(key));
}

HardMatch hard_match(Var r, bool same_row, std::size_t grid_w) {
  if (r.shape().size() != 2) throw ShapeError("hard_match: relevance must be a matrix");
  const auto windows = row_windows(r.shape()[0], r.shape()[1], same_row, grid_w);
  ops::MaxArg m = ops::reduce_max_arg(r, windows);
  return {std::move(m.indices), m.values};
}

Var transfer(Var value, std::span<const std::size_t> indices) {
  require_map("transfer", value);
  const Shape& s = value.shape();
  const Var patches = ops::unfold(value, kValuePatch);
  if (indices.size() != patches.shape()[1])
    throw ShapeError("transfer: " + std::to_string(indices.size()) + " indices for " +
                     std::to_string(patches.shape()[1]) + " patch positions");
  const Var summed = ops::fold(ops::gather_columns(patches, indices), s[1], s[2], s[3], kValuePatch);
  // Padded cells of border source patches carry no data; average only over real pixels.
  Tape& tape = *value.tape;
  const Var ones = tape.constant(Tensor(Shape{1, 1, s[2], s[3]}, 1.0));
  const Tensor valid =
      ops::fold(ops::gather_columns(ops::unfold(ones, kValuePatch), indices), 1, s[2], s[3], kValuePatch).value();
  const std::size_t hw = s[2] * s[3];
  Tensor inv(s);
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / valid[i % hw];
  return ops::mul(summed, tape.constant(std::move(inv)));
}

Var expand_confidence(Var confidence, std::size_t grid_h, std::size_t grid_w) {
  const Var grid = ops::reshape(confidence, Shape{1, 1, grid_h, grid_w});
  return ops::upsample_nearest(ops::clamp(grid, 0.0, 1.0), kDownsample);
}

StreamingMatch match_streaming(const Tensor& query, const Tensor& key, bool same_row, std::size_t grid_w) {
  if (query.rank() != 2 || key.rank() != 2 || query.dim(0) != key.dim(0))
    throw ShapeError("match_streaming: expected D x L patch matrices with equal D");
  const std::size_t d = query.dim(0), lq = query.dim(1), lk = key.dim(1);
  if (same_row && (grid_w == 0 || lq % grid_w != 0 || lk % grid_w != 0))
    throw std::invalid_argument("match_streaming: same-row matching needs the grid width");
  std::vector<double> qt(lq * d);
  kernels::transpose(d, lq, query.ptr(), qt.data());

  StreamingMatch out;
  out.row_index.assign(lq, 0);
  out.row_max.assign(lq, -std::numeric_limits<double>::infinity());
  out.col_index.assign(lk, 0);
  out.col_max.assign(lk, -std::numeric_limits<double>::infinity());

  const std::size_t tile = std::max<std::size_t>(1, std::min<std::size_t>(lq, (std::size_t{1} << 22) / lk));
  std::vector<double> block(tile * lk);
  for (std::size_t i0 = 0; i0 < lq; i0 += tile) {
    const std::size_t rows = std::min(tile, lq - i0);
    kernels::gemm(rows, lk, d, qt.data() + i0 * d, key.ptr(), block.data(), false);
#pragma omp parallel for schedule(static)
    for (long long ri = 0; ri < static_cast<long long>(rows); ++ri) {
      const std::size_t i = i0 + static_cast<std::size_t>(ri);
      const double* row = block.data() + static_cast<std::size_t>(ri) * lk;
      std::size_t lo = 0, hi = lk;
      if (same_row) {
        lo = (i / grid_w) * grid_w;
        hi = lo + grid_w;
      }
      std::size_t best = lo;
      for (std::size_t j = lo + 1; j < hi; ++j)
        if (row[j] > row[best]) best = j;
      out.row_index[i] = best;
      out.row_max[i] = row[best];
    }
    // Columns visit queries in ascending order; strict '>' keeps the smallest index on ties.
#pragma omp parallel for schedule(static)
    for (long long jl = 0; jl < static_cast<long long>(lk); ++jl) {
      const std::size_t j = static_cast<std::size_t>(jl);
      for (std::size_t ri = 0; ri < rows; ++ri) {
        const std::size_t i = i0 + ri;
        if (same_row && i / grid_w != j / grid_w) continue;
        const double v = block[ri * lk + j];
        if (v > out.col_max[j]) {
          out.col_max[j] = v;
          out.col_index[j] = i;
        }
      }
    }
  }
  return out;
}

BiptmOutput biptm_forward(Var f_left, Var f_right, const BiptmOptions& opts) {
  const Qkv lr = build_qkv(f_left, f_right, Direction::LeftToRight);
  const std::size_t gh = lr.query.shape()[2], gw = lr.query.shape()[3];
  const Var q = normalized_patches(lr.query);  // right view patches
  const Var k = normalized_patches(lr.key);    // left view patches
  Tape& tape = *f_left.tape;

  BiptmOutput out;
  out.grid_h = gh;
  out.grid_w = gw;
  const bool differentiable = f_left.requires_grad() || f_right.requires_grad();
  // The streaming matcher records no branch decisions, so tracked tapes take the recorded path.
  const bool streaming = !differentiable && !tape.branch_tracking();

  if (opts.mode == AttentionMode::Hard && streaming) {
    StreamingMatch m = match_streaming(q.value(), k.value(), opts.same_row, gw);
    const std::size_t l = gh * gw;
    out.left_to_right.indices = std::move(m.row_index);
    out.left_to_right.confidence_lowres = tape.constant(Tensor(Shape{l}, std::move(m.row_max)));
    out.right_to_left.indices = std::move(m.col_index);
    out.right_to_left.confidence_lowres = tape.constant(Tensor(Shape{l}, std::move(m.col_max)));
  } else if (opts.mode == AttentionMode::Hard) {
    const Var r = ops::matmul(ops::transpose(q), k);
    const Var rt = ops::transpose(r);
    HardMatch lr_match = hard_match(r, opts.same_row, gw);
    HardMatch rl_match = hard_match(rt, opts.same_row, gw);
    out.left_to_right.indices = std::move(lr_match.indices);
    out.left_to_right.confidence_lowres = lr_match.confidence;
    out.right_to_left.indices = std::move(rl_match.indices);
    out.right_to_left.confidence_lowres = rl_match.confidence;
  } else {
    if (opts.same_row) throw std::invalid_argument("biptm: same-row restriction is only available in hard mode");
    const Var r = ops::matmul(ops::transpose(q), k);
    const Var rt = ops::transpose(r);
    auto soft = [&](Var rel, Var value, Converted& c) {
      ops::MaxArg m = ops::reduce_max_arg(rel);
      c.indices = std::move(m.indices);
      c.confidence_lowres = m.values;
      const Var weights = ops::transpose(ops::softmax_rows(rel, opts.temperature));
      const Shape& s = value.shape();
      const Var ones = tape.constant(Tensor(Shape{1, 1, s[2], s[3]}, 1.0));
      const Var mixed = ops::fold(ops::matmul(ops::unfold(value, kValuePatch), weights), s[1], s[2], s[3], kValuePatch);
      const Var valid = ops::fold(ops::matmul(ops::unfold(ones, kValuePatch), weights), 1, s[2], s[3], kValuePatch);
      c.features = ops::scale_spatial(mixed, ops::reciprocal(valid));
    };
    soft(r, f_left, out.left_to_right);
    soft(rt, f_right, out.right_to_left);
  }

  if (opts.mode == AttentionMode::Hard) {
    out.left_to_right.features = transfer(f_left, out.left_to_right.indices);
    out.right_to_left.features = transfer(f_right, out.right_to_left.indices);
  }
  out.left_to_right.confidence = expand_confidence(out.left_to_right.confidence_lowres, gh, gw);
  out.right_to_left.confidence = expand_confidence(out.right_to_left.confidence_lowres, gh, gw);
  return out;
}

}  // namespace ptnet::parallax

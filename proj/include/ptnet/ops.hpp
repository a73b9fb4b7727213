#pragma once

// Differentiable operations on tape variables. Every op validates shapes, records its
// result on the inputs' tape and, when any input needs a gradient, the adjoint rule.

#include <cstddef>
#include <span>
#include <vector>

#include "ptnet/kernels.hpp"
#include "ptnet/tape.hpp"

namespace ptnet::ops {

// Elementwise group.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// alpha * a + beta
Var affine(Var a, double alpha, double beta);
Var relu(Var a);
Var sigmoid(Var a);
Var reciprocal(Var a);
Var abs(Var a);
Var clamp(Var a, double lo, double hi);
Var concat_channels(std::span<const Var> parts);
Var slice_channels(Var a, std::size_t begin, std::size_t count);
Var reshape(Var a, Shape shape);

// Reductions to a scalar (shape {1}).
Var sum(Var a);
Var mean(Var a);

// rows x k times k x cols; inner sum in ascending index order.
Var matmul(Var a, Var b);
Var transpose(Var a);

Var conv2d(Var x, Var w, Var b, const ConvGeometry& g);

Var avg_pool(Var x, std::size_t k);
Var upsample_nearest(Var x, std::size_t factor);
// N x C x H x W -> N x C x 1 x 1
Var global_avg_pool(Var x);
// x: N x C x H x W scaled by s: N x C x 1 x 1
Var scale_channels(Var x, Var s);
// x: N x C x H x W scaled by m: N x 1 x H x W
Var scale_spatial(Var x, Var m);

// 1 x C x H x W -> (C*k*k) x L patch matrix (see kernels::im2col for ordering).
Var unfold(Var x, const ConvGeometry& g);
// (C*k*k) x L -> 1 x C x H x W; overlapping contributions are summed and divided by
// each pixel's coverage count (padding cells discarded).
Var fold(Var cols, std::size_t channels, std::size_t height, std::size_t width, const ConvGeometry& g);

// Column-wise L2 normalization x_j / max(|x_j|, eps).
Var normalize_columns(Var x, double eps);
// D x L_src -> D x idx.size(), column t = column idx[t].
Var gather_columns(Var x, std::span<const std::size_t> idx);
// Row-wise softmax of x / tau.
Var softmax_rows(Var x, double tau);

struct MaxArg {
  Var values;                        // shape {rows}
  std::vector<std::size_t> indices;  // carries no gradient
};
// Per-row maximum over columns of a rows x cols matrix; ties go to the smallest index.
// The gradient of each maximum flows only into its winning entry.
MaxArg reduce_max_arg(Var x);

// Half-open column window [begin, end) searched for one row.
struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};
// As above, but row i only considers columns in ranges[i].
MaxArg reduce_max_arg(Var x, std::span<const ColumnRange> ranges);

}  // namespace ptnet::ops

#include "ptnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ptnet::ops {

namespace {

constexpr long long kParallelThreshold = 1 << 15;

void require_same(const char* op, const Var& a, const Var& b) {
  if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
  if (a.value().rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
}

// Hashes a boolean mask into the tape's branch signature.
template <class Pred>
void note_mask(Tape& tape, std::size_t n, Pred pred) {
  if (!tape.branch_tracking()) return;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    word = (word << 1) | (pred(i) ? 1u : 0u);
    if (i % 64 == 63) {
      tape.note_branch(word);
      word = 0;
    }
  }
  tape.note_branch(word ^ n);
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor y(x.shape());
  const long long n = static_cast<long long>(x.size());
  const double* in = x.ptr();
  double* out = y.ptr();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (long long i = 0; i < n; ++i) out[i] = f(in[i]);
  return y;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor y(a.shape());
  const long long n = static_cast<long long>(a.size());
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* out = y.ptr();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (long long i = 0; i < n; ++i) out[i] = f(pa[i], pb[i]);
  return y;
}

// sink += g * f(i)
template <class F>
void accumulate(Tensor* sink, const Tensor& g, F f) {
  if (!sink) return;
  const long long n = static_cast<long long>(g.size());
  double* out = sink->ptr();
  const double* pg = g.ptr();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (long long i = 0; i < n; ++i) out[i] += pg[i] * f(static_cast<std::size_t>(i));
}

}  // namespace

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor y = map_binary(a.value(), b.value(), [](double x, double z) { return x + z; });
  return a.tape->record("add", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    accumulate(t.grad_sink(a), g, [](std::size_t) { return 1.0; });
    accumulate(t.grad_sink(b), g, [](std::size_t) { return 1.0; });
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor y = map_binary(a.value(), b.value(), [](double x, double z) { return x - z; });
  return a.tape->record("sub", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    accumulate(t.grad_sink(a), g, [](std::size_t) { return 1.0; });
    accumulate(t.grad_sink(b), g, [](std::size_t) { return -1.0; });
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor y = map_binary(a.value(), b.value(), [](double x, double z) { return x * z; });
  return a.tape->record("mul", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    accumulate(t.grad_sink(a), g, [&](std::size_t i) { return bv[i]; });
    accumulate(t.grad_sink(b), g, [&](std::size_t i) { return av[i]; });
  });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double alpha, double beta) {
  Tensor y = map_unary(a.value(), [=](double x) { return alpha * x + beta; });
  return a.tape->record("affine", std::move(y), {a}, [a, alpha](Tape& t, const Tensor& g, const Tensor&) {
    accumulate(t.grad_sink(a), g, [=](std::size_t) { return alpha; });
  });
}

Var relu(Var a) {
  const Tensor& x = a.value();
  note_mask(*a.tape, x.size(), [&](std::size_t i) { return x[i] > 0.0; });
  Tensor y = map_unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
  return a.tape->record("relu", std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& xv = t.value(a);
    accumulate(t.grad_sink(a), g, [&](std::size_t i) { return xv[i] > 0.0 ? 1.0 : 0.0; });
  });
}

Var sigmoid(Var a) {
  Tensor y = map_unary(a.value(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return a.tape->record("sigmoid", std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor& s) {
    accumulate(t.grad_sink(a), g, [&](std::size_t i) { return s[i] * (1.0 - s[i]); });
  });
}

Var reciprocal(Var a) {
  Tensor y = map_unary(a.value(), [](double v) { return 1.0 / v; });
  return a.tape->record("reciprocal", std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor& r) {
    accumulate(t.grad_sink(a), g, [&](std::size_t i) { return -r[i] * r[i]; });
  });
}

Var abs(Var a) {
  const Tensor& x = a.value();
  note_mask(*a.tape, x.size(), [&](std::size_t i) { return x[i] >= 0.0; });
  Tensor y = map_unary(x, [](double v) { return std::abs(v); });
  return a.tape->record("abs", std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& xv = t.value(a);
    accumulate(t.grad_sink(a), g, [&](std::size_t i) {
      return xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
    });
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  const Tensor& x = a.value();
  if (a.tape->branch_tracking()) {
    note_mask(*a.tape, x.size(), [&](std::size_t i) { return x[i] < lo; });
    note_mask(*a.tape, x.size(), [&](std::size_t i) { return x[i] > hi; });
  }
  Tensor y = map_unary(x, [=](double v) { return std::clamp(v, lo, hi); });
  return a.tape->record("clamp", std::move(y), {a}, [a, lo, hi](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& xv = t.value(a);
    accumulate(t.grad_sink(a), g, [&](std::size_t i) { return (xv[i] >= lo && xv[i] <= hi) ? 1.0 : 0.0; });
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 4) throw ShapeError("concat_channels: expected NxCxHxW inputs");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (p.tape != parts[0].tape) throw std::invalid_argument("concat_channels: inputs on different tapes");
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
      throw ShapeError("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(s0));
    channels += s[1];
  }
  const std::size_t n = s0[0], plane = s0[2] * s0[3];
  Tensor y({n, channels, s0[2], s0[3]});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Tensor& v = p.value();
    const std::size_t c = v.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(v.ptr() + i * c * plane, c * plane, y.ptr() + (i * channels + off) * plane);
    off += c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(
      "concat_channels", std::move(y), parts, [inputs, offsets, n, channels, plane](Tape& t, const Tensor& g, const Tensor&) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          Tensor* sink = t.grad_sink(inputs[k]);
          if (!sink) continue;
          const std::size_t c = sink->dim(1);
          for (std::size_t i = 0; i < n; ++i) {
            const double* src = g.ptr() + (i * channels + offsets[k]) * plane;
            double* dst = sink->ptr() + i * c * plane;
            for (std::size_t j = 0; j < c * plane; ++j) dst[j] += src[j];
          }
        }
      });
}

Var slice_channels(Var a, std::size_t begin, std::size_t count) {
  require_rank("slice_channels", a, 4);
  const Shape& s = a.shape();
  if (count == 0 || begin + count > s[1]) throw ShapeError("slice_channels: channel range out of bounds");
  const std::size_t n = s[0], c = s[1], plane = s[2] * s[3];
  Tensor y({n, count, s[2], s[3]});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(a.value().ptr() + (i * c + begin) * plane, count * plane, y.ptr() + i * count * plane);
  return a.tape->record("slice_channels", std::move(y), {a}, [a, begin, count, n, c, plane](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* sink = t.grad_sink(a);
    for (std::size_t i = 0; i < n; ++i) {
      double* dst = sink->ptr() + (i * c + begin) * plane;
      const double* src = g.ptr() + i * count * plane;
      for (std::size_t j = 0; j < count * plane; ++j) dst[j] += src[j];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    accumulate(t.grad_sink(a), g, [](std::size_t) { return 1.0; });
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  return a.tape->record("sum", Tensor(Shape{1}, s), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    const double gv = g[0];
    Tensor* sink = t.grad_sink(a);
    for (std::size_t i = 0; i < sink->size(); ++i) (*sink)[i] += gv;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  if (b.value().dim(0) != k)
    throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor y({m, n});
  kernels::gemm(m, n, k, a.value().ptr(), b.value().ptr(), y.ptr(), false);
  return a.tape->record("matmul", std::move(y), {a, b}, [a, b, m, n, k](Tape& t, const Tensor& g, const Tensor&) {
    if (Tensor* da = t.grad_sink(a)) {
      // dA = G * B^T
      std::vector<double> bt(n * k);
      kernels::transpose(k, n, t.value(b).ptr(), bt.data());
      kernels::gemm(m, k, n, g.ptr(), bt.data(), da->ptr(), true);
    }
    if (Tensor* db = t.grad_sink(b)) {
      // dB = A^T * G
      std::vector<double> at(m * k);
      kernels::transpose(m, k, t.value(a).ptr(), at.data());
      kernels::gemm(k, n, m, at.data(), g.ptr(), db->ptr(), true);
    }
  });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.value().dim(0), c = a.value().dim(1);
  Tensor y({c, r});
  kernels::transpose(r, c, a.value().ptr(), y.ptr());
  return a.tape->record("transpose", std::move(y), {a}, [a, r, c](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* sink = t.grad_sink(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) sink->at(i, j) += g.at(j, i);
  });
}

Var conv2d(Var x, Var w, Var b, const ConvGeometry& g) {
  Tensor y = kernels::conv2d_forward(x.value(), w.value(), b.value(), g);
  return x.tape->record("conv2d", std::move(y), {x, w, b}, [x, w, b, g](Tape& t, const Tensor& gy, const Tensor&) {
    Tensor* sx = t.grad_sink(x);
    Tensor* sw = t.grad_sink(w);
    Tensor* sb = t.grad_sink(b);
    Tensor dx, dw, db;
    kernels::conv2d_backward(t.value(x), t.value(w), gy, g, sx ? &dx : nullptr, sw ? &dw : nullptr,
                             sb ? &db : nullptr);
    auto add_into = [](Tensor* sink, const Tensor& d) {
      if (!sink) return;
      for (std::size_t i = 0; i < d.size(); ++i) (*sink)[i] += d[i];
    };
    add_into(sx, dx);
    add_into(sw, dw);
    add_into(sb, db);
  });
}

Var avg_pool(Var x, std::size_t k) {
  Tensor y = kernels::avg_pool(x.value(), k);
  return x.tape->record("avg_pool", std::move(y), {x}, [x, k](Tape& t, const Tensor& g, const Tensor&) {
    Tensor up = kernels::upsample_nearest(g, k);
    const double inv = 1.0 / static_cast<double>(k * k);
    accumulate(t.grad_sink(x), up, [=](std::size_t) { return inv; });
  });
}

Var upsample_nearest(Var x, std::size_t factor) {
  Tensor y = kernels::upsample_nearest(x.value(), factor);
  return x.tape->record("upsample_nearest", std::move(y), {x}, [x, factor](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* sink = t.grad_sink(x);
    const std::size_t planes = sink->dim(0) * sink->dim(1), h = sink->dim(2), w = sink->dim(3);
    const std::size_t ow = w * factor;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < h * factor; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          (*sink)[(p * h + oy / factor) * w + ox / factor] += g[(p * h * factor + oy) * ow + ox];
  });
}

Var global_avg_pool(Var x) {
  require_rank("global_avg_pool", x, 4);
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], area = s[2] * s[3];
  Tensor y({s[0], s[1], 1, 1});
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    const double* in = x.value().ptr() + p * area;
    for (std::size_t i = 0; i < area; ++i) acc += in[i];
    y[p] = acc / static_cast<double>(area);
  }
  return x.tape->record("global_avg_pool", std::move(y), {x}, [x, planes, area](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* sink = t.grad_sink(x);
    for (std::size_t p = 0; p < planes; ++p) {
      const double gv = g[p] / static_cast<double>(area);
      double* out = sink->ptr() + p * area;
      for (std::size_t i = 0; i < area; ++i) out[i] += gv;
    }
  });
}

Var scale_channels(Var x, Var s) {
  require_rank("scale_channels", x, 4);
  const Shape& xs = x.shape();
  if (s.shape() != Shape{xs[0], xs[1], 1, 1})
    throw ShapeError("scale_channels: scale " + shape_str(s.shape()) + " for input " + shape_str(xs));
  const std::size_t planes = xs[0] * xs[1], area = xs[2] * xs[3];
  Tensor y(xs);
  for (std::size_t p = 0; p < planes; ++p) {
    const double f = s.value()[p];
    for (std::size_t i = 0; i < area; ++i) y[p * area + i] = x.value()[p * area + i] * f;
  }
  return x.tape->record("scale_channels", std::move(y), {x, s}, [x, s, planes, area](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& xv = t.value(x);
    const Tensor& sv = t.value(s);
    if (Tensor* sx = t.grad_sink(x))
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < area; ++i) (*sx)[p * area + i] += g[p * area + i] * sv[p];
    if (Tensor* ss = t.grad_sink(s))
      for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < area; ++i) acc += g[p * area + i] * xv[p * area + i];
        (*ss)[p] += acc;
      }
  });
}

Var scale_spatial(Var x, Var m) {
  require_rank("scale_spatial", x, 4);
  const Shape& xs = x.shape();
  if (m.shape() != Shape{xs[0], 1, xs[2], xs[3]})
    throw ShapeError("scale_spatial: map " + shape_str(m.shape()) + " for input " + shape_str(xs));
  const std::size_t n = xs[0], c = xs[1], area = xs[2] * xs[3];
  Tensor y(xs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < area; ++p)
        y[(i * c + ch) * area + p] = x.value()[(i * c + ch) * area + p] * m.value()[i * area + p];
  return x.tape->record("scale_spatial", std::move(y), {x, m}, [x, m, n, c, area](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& xv = t.value(x);
    const Tensor& mv = t.value(m);
    Tensor* sx = t.grad_sink(x);
    Tensor* sm = t.grad_sink(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < area; ++p) {
          const std::size_t idx = (i * c + ch) * area + p;
          if (sx) (*sx)[idx] += g[idx] * mv[i * area + p];
          if (sm) (*sm)[i * area + p] += g[idx] * xv[idx];
        }
  });
}

namespace {

struct ImageDims {
  std::size_t c, h, w;
};

ImageDims single_image(const char* op, const Var& x) {
  const Shape& s = x.shape();
  if (s.size() == 4 && s[0] == 1) return {s[1], s[2], s[3]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw ShapeError(std::string(op) + ": expected 1xCxHxW or CxHxW, got " + shape_str(s));
}

}  // namespace

Var unfold(Var x, const ConvGeometry& g) {
  const ImageDims d = single_image("unfold", x);
  const std::size_t l = g.out_extent(d.h) * g.out_extent(d.w);
  const std::size_t rows = d.c * g.kernel * g.kernel;
  Tensor y({rows, l});
  kernels::im2col(x.value().ptr(), d.c, d.h, d.w, g, y.ptr());
  return x.tape->record("unfold", std::move(y), {x}, [x, d, g](Tape& t, const Tensor& gy, const Tensor&) {
    Tensor* sink = t.grad_sink(x);
    std::vector<double> img(d.c * d.h * d.w);
    kernels::col2im(gy.ptr(), d.c, d.h, d.w, g, img.data());
    for (std::size_t i = 0; i < img.size(); ++i) (*sink)[i] += img[i];
  });
}

Var fold(Var cols, std::size_t channels, std::size_t height, std::size_t width, const ConvGeometry& g) {
  require_rank("fold", cols, 2);
  const std::size_t l = g.out_extent(height) * g.out_extent(width);
  const std::size_t rows = channels * g.kernel * g.kernel;
  if (cols.value().dim(0) != rows || cols.value().dim(1) != l)
    throw ShapeError("fold: patch matrix " + shape_str(cols.shape()) + " does not match " + std::to_string(rows) +
                     "x" + std::to_string(l));
  std::vector<double> counts(height * width);
  kernels::coverage(height, width, g, counts.data());
  std::vector<double> inv(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) inv[i] = counts[i] > 0.0 ? 1.0 / counts[i] : 0.0;
  Tensor y({1, channels, height, width});
  kernels::col2im(cols.value().ptr(), channels, height, width, g, y.ptr());
  const std::size_t area = height * width;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t p = 0; p < area; ++p) y[c * area + p] *= inv[p];
  return cols.tape->record("fold", std::move(y), {cols}, [cols, channels, height, width, g, inv](Tape& t, const Tensor& gy, const Tensor&) {
    const std::size_t area = height * width;
    Tensor scaled(gy.shape());
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < area; ++p) scaled[c * area + p] = gy[c * area + p] * inv[p];
    Tensor* sink = t.grad_sink(cols);
    std::vector<double> tmp(sink->size());
    kernels::im2col(scaled.ptr(), channels, height, width, g, tmp.data());
    for (std::size_t i = 0; i < tmp.size(); ++i) (*sink)[i] += tmp[i];
  });
}

Var normalize_columns(Var x, double eps) {
  require_rank("normalize_columns", x, 2);
  const std::size_t d = x.value().dim(0), l = x.value().dim(1);
  std::vector<double> norms(l, 0.0);
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < l; ++j) norms[j] = std::fma(xv[r * l + j], xv[r * l + j], norms[j]);
  for (auto& n : norms) n = std::max(std::sqrt(n), eps);
  Tensor y({d, l});
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < l; ++j) y[r * l + j] = xv[r * l + j] / norms[j];
  return x.tape->record("normalize_columns", std::move(y), {x}, [x, norms, eps, d, l](Tape& t, const Tensor& g,
                                                                                   const Tensor& yv) {
    Tensor* sink = t.grad_sink(x);
    for (std::size_t j = 0; j < l; ++j) {
      const double n = norms[j];
      double dot = 0.0;
      if (n > eps)
        for (std::size_t r = 0; r < d; ++r) dot += g[r * l + j] * yv[r * l + j];
      for (std::size_t r = 0; r < d; ++r) (*sink)[r * l + j] += (g[r * l + j] - dot * yv[r * l + j]) / n;
    }
  });
}

Var gather_columns(Var x, std::span<const std::size_t> idx) {
  require_rank("gather_columns", x, 2);
  const std::size_t d = x.value().dim(0), l = x.value().dim(1), m = idx.size();
  if (m == 0) throw ShapeError("gather_columns: empty index list");
  for (auto i : idx)
    if (i >= l) throw std::out_of_range("gather_columns: index " + std::to_string(i) + " >= " + std::to_string(l));
  Tensor y({d, m});
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < m; ++j) y[r * m + j] = xv[r * l + idx[j]];
  std::vector<std::size_t> index(idx.begin(), idx.end());
  return x.tape->record("gather_columns", std::move(y), {x}, [x, index, d, l, m](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* sink = t.grad_sink(x);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t j = 0; j < m; ++j) (*sink)[r * l + index[j]] += g[r * m + j];
  });
}

Var softmax_rows(Var x, double tau) {
  require_rank("softmax_rows", x, 2);
  if (!(tau > 0.0)) throw std::invalid_argument("softmax_rows: temperature must be positive");
  const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
  Tensor y({rows, cols});
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = xv[i * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xv[i * cols + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp((xv[i * cols + j] - mx) / tau);
      y[i * cols + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] /= z;
  }
  return x.tape->record("softmax_rows", std::move(y), {x}, [x, rows, cols, tau](Tape& t, const Tensor& g,
                                                                          const Tensor& yv) {
    Tensor* sink = t.grad_sink(x);
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * yv[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        (*sink)[i * cols + j] += yv[i * cols + j] * (g[i * cols + j] - dot) / tau;
    }
  });
}

MaxArg reduce_max_arg(Var x) {
  require_rank("reduce_max_arg", x, 2);
  const std::vector<ColumnRange> all(x.value().dim(0), ColumnRange{0, x.value().dim(1)});
  return reduce_max_arg(x, all);
}

MaxArg reduce_max_arg(Var x, std::span<const ColumnRange> ranges) {
  require_rank("reduce_max_arg", x, 2);
  const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (ranges.size() != rows) throw ShapeError("reduce_max_arg: one column range per row required");
  const Tensor& xv = x.value();
  MaxArg out;
  out.indices.resize(rows);
  Tensor values(Shape{rows});
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows; ++i) {
    const auto [lo, hi] = ranges[i];
    if (lo >= hi || hi > cols) throw ShapeError("reduce_max_arg: empty or out-of-range column window");
    const double* row = xv.ptr() + i * cols;
    std::size_t best = lo;
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t j = lo + 1; j < hi; ++j) {
      if (row[j] > row[best]) {
        second = row[best];
        best = j;
      } else if (row[j] > second) {
        second = row[j];
      }
    }
    out.indices[i] = best;
    values[i] = row[best];
    if (hi - lo > 1) margin = std::min(margin, row[best] - second);
    if (x.tape->branch_tracking()) x.tape->note_branch(best);
  }
  x.tape->note_argmax_margin(margin);
  std::vector<std::size_t> index = out.indices;
  out.values = x.tape->record("reduce_max_arg", std::move(values), {x},
                              [x, index, cols](Tape& t, const Tensor& g, const Tensor&) {
                                Tensor* sink = t.grad_sink(x);
                                for (std::size_t i = 0; i < index.size(); ++i) (*sink)[i * cols + index[i]] += g[i];
                              });
  return out;
}

}  // namespace ptnet::ops

#include "ptnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef __AVX512F__
#include <immintrin.h>
#endif

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ptnet {

std::size_t ConvGeometry::out_extent(std::size_t in) const {
  if (kernel == 0 || stride == 0) throw ShapeError("conv geometry: kernel and stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel || (padded - kernel) % stride != 0)
    throw ShapeError("conv geometry: extent " + std::to_string(in) + " with k=" + std::to_string(kernel) +
                     " s=" + std::to_string(stride) + " p=" + std::to_string(pad) + " is not integral");
  return (padded - kernel) / stride + 1;
}

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 32;

// Register tile of MR rows x kNr columns.
template <std::size_t MR>
void micro_tile(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                std::size_t ldc, bool accumulate) {
#ifdef __AVX512F__
  static_assert(kNr == 32);
  __m512d acc[MR][4];
  for (std::size_t i = 0; i < MR; ++i)
    for (std::size_t q = 0; q < 4; ++q) acc[i][q] = _mm512_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    const __m512d b0 = _mm512_loadu_pd(brow), b1 = _mm512_loadu_pd(brow + 8);
    const __m512d b2 = _mm512_loadu_pd(brow + 16), b3 = _mm512_loadu_pd(brow + 24);
#pragma GCC unroll 4
    for (std::size_t i = 0; i < MR; ++i) {
      const __m512d av = _mm512_set1_pd(a[i * lda + p]);
      acc[i][0] = _mm512_fmadd_pd(av, b0, acc[i][0]);
      acc[i][1] = _mm512_fmadd_pd(av, b1, acc[i][1]);
      acc[i][2] = _mm512_fmadd_pd(av, b2, acc[i][2]);
      acc[i][3] = _mm512_fmadd_pd(av, b3, acc[i][3]);
    }
  }
  for (std::size_t i = 0; i < MR; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t q = 0; q < 4; ++q) {
      __m512d v = acc[i][q];
      if (accumulate) v = _mm512_add_pd(_mm512_loadu_pd(crow + 8 * q), v);
      _mm512_storeu_pd(crow + 8 * q, v);
    }
  }
#else
  double acc[MR][kNr] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
#pragma GCC unroll 4
    for (std::size_t i = 0; i < MR; ++i) {
      const double av = a[i * lda + p];
#pragma omp simd
      for (std::size_t j = 0; j < kNr; ++j) acc[i][j] = std::fma(av, brow[j], acc[i][j]);
    }
  }
  for (std::size_t i = 0; i < MR; ++i) {
    double* crow = c + i * ldc;
    if (accumulate) {
      for (std::size_t j = 0; j < kNr; ++j) crow[j] += acc[i][j];
    } else {
      for (std::size_t j = 0; j < kNr; ++j) crow[j] = acc[i][j];
    }
  }
#endif
}

void edge_tile(std::size_t rows, std::size_t cols, std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * lda + p], b[p * ldb + j], acc);
      if (accumulate)
        c[i * ldc + j] += acc;
      else
        c[i * ldc + j] = acc;
    }
  }
}

// 4 x 4 block of C = A * B^T, with the shared index vectorized in kLanes-wide strips.
// Each lane accumulates every kLanes-th term; lanes are summed in a fixed order, then
// the scalar tail is added.
constexpr std::size_t kLanes = 8;

template <std::size_t MR, std::size_t NR>
void nt_tile(std::size_t k, const double* a, const double* b, double* c, std::size_t ldc, bool accumulate) {
  double acc[MR][NR][kLanes] = {};
  const std::size_t kv = k - k % kLanes;
  for (std::size_t p = 0; p < kv; p += kLanes) {
    for (std::size_t i = 0; i < MR; ++i) {
      const double* ar = a + i * k + p;
      for (std::size_t j = 0; j < NR; ++j) {
        const double* br = b + j * k + p;
#pragma omp simd
        for (std::size_t v = 0; v < kLanes; ++v) acc[i][j][v] = std::fma(ar[v], br[v], acc[i][j][v]);
      }
    }
  }
  for (std::size_t i = 0; i < MR; ++i)
    for (std::size_t j = 0; j < NR; ++j) {
      double s = 0.0;
      for (std::size_t v = 0; v < kLanes; ++v) s += acc[i][j][v];
      for (std::size_t p = kv; p < k; ++p) s = std::fma(a[i * k + p], b[j * k + p], s);
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
}

template <std::size_t MR>
void nt_row_block(std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) nt_tile<MR, 4>(k, a, b + j * k, c + j, n, accumulate);
  for (; j < n; ++j) nt_tile<MR, 1>(k, a, b + j * k, c + j, n, accumulate);
}

}  // namespace

namespace kernels {

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  const long long blocks = static_cast<long long>((m + 3) / 4);
#pragma omp parallel for schedule(static)
  for (long long rb = 0; rb < blocks; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * 4;
    const double* ab = a + i0 * k;
    double* cb = c + i0 * n;
    switch (std::min<std::size_t>(4, m - i0)) {
      case 4: nt_row_block<4>(n, k, ab, b, cb, accumulate); break;
      case 3: nt_row_block<3>(n, k, ab, b, cb, accumulate); break;
      case 2: nt_row_block<2>(n, k, ab, b, cb, accumulate); break;
      default: nt_row_block<1>(n, k, ab, b, cb, accumulate); break;
    }
  }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  const long long strips = static_cast<long long>((n + kNr - 1) / kNr);
#pragma omp parallel for schedule(static)
  for (long long s = 0; s < strips; ++s) {
    const std::size_t j = static_cast<std::size_t>(s) * kNr;
    if (j + kNr > n) {
      edge_tile(m, n - j, k, a, k, b + j, n, c + j, n, accumulate);
      continue;
    }
    // Contiguous copy of the k x kNr strip, shared by every row block.
    thread_local std::vector<double> packed;
    if (packed.size() < k * kNr) packed.resize(k * kNr);
    for (std::size_t p = 0; p < k; ++p) std::copy_n(b + p * n + j, kNr, packed.data() + p * kNr);
    std::size_t i = 0;
    for (; i + kMr <= m; i += kMr) micro_tile<kMr>(k, a + i * k, k, packed.data(), kNr, c + i * n + j, n, accumulate);
    switch (m - i) {
      case 3: micro_tile<3>(k, a + i * k, k, packed.data(), kNr, c + i * n + j, n, accumulate); break;
      case 2: micro_tile<2>(k, a + i * k, k, packed.data(), kNr, c + i * n + j, n, accumulate); break;
      case 1: micro_tile<1>(k, a + i * k, k, packed.data(), kNr, c + i * n + j, n, accumulate); break;
      default: break;
    }
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  constexpr std::size_t kB = 32;
#pragma omp parallel for schedule(static)
  for (long long rb = 0; rb < static_cast<long long>((rows + kB - 1) / kB); ++rb) {
    const std::size_t r0 = static_cast<std::size_t>(rb) * kB;
    const std::size_t r1 = std::min(rows, r0 + kB);
    for (std::size_t c0 = 0; c0 < cols; c0 += kB) {
      const std::size_t c1 = std::min(cols, c0 + kB);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

void im2col(const double* img, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, double* cols) {
  const std::size_t oh = g.out_extent(height);
  const std::size_t ow = g.out_extent(width);
  const std::size_t kk = g.kernel * g.kernel;
  const long long rows = static_cast<long long>(channels * kk);
#pragma omp parallel for schedule(static)
  for (long long r = 0; r < rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(r) / kk;
    const std::size_t ky = (static_cast<std::size_t>(r) % kk) / g.kernel;
    const std::size_t kx = static_cast<std::size_t>(r) % g.kernel;
    const double* plane = img + c * height * width;
    double* out = cols + static_cast<std::size_t>(r) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
      double* orow = out + oy * ow;
      if (iy < 0 || iy >= static_cast<long long>(height)) {
        std::fill(orow, orow + ow, 0.0);
        continue;
      }
      const double* irow = plane + static_cast<std::size_t>(iy) * width;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
        orow[ox] = (ix < 0 || ix >= static_cast<long long>(width)) ? 0.0 : irow[ix];
      }
    }
  }
}

void col2im(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, double* img) {
  const std::size_t oh = g.out_extent(height);
  const std::size_t ow = g.out_extent(width);
  const std::size_t kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (long long cl = 0; cl < static_cast<long long>(channels); ++cl) {
    const std::size_t c = static_cast<std::size_t>(cl);
    double* plane = img + c * height * width;
    std::fill(plane, plane + height * width, 0.0);
    for (std::size_t kidx = 0; kidx < kk; ++kidx) {
      const std::size_t ky = kidx / g.kernel;
      const std::size_t kx = kidx % g.kernel;
      const double* in = cols + (c * kk + kidx) * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
        if (iy < 0 || iy >= static_cast<long long>(height)) continue;
        double* irow = plane + static_cast<std::size_t>(iy) * width;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
          if (ix < 0 || ix >= static_cast<long long>(width)) continue;
          irow[ix] += in[oy * ow + ox];
        }
      }
    }
  }
}

void coverage(std::size_t height, std::size_t width, const ConvGeometry& g, double* counts) {
  const std::size_t oh = g.out_extent(height);
  const std::size_t ow = g.out_extent(width);
  std::fill(counts, counts + height * width, 0.0);
  for (std::size_t ky = 0; ky < g.kernel; ++ky)
    for (std::size_t kx = 0; kx < g.kernel; ++kx)
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
        if (iy < 0 || iy >= static_cast<long long>(height)) continue;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
          if (ix < 0 || ix >= static_cast<long long>(width)) continue;
          counts[static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)] += 1.0;
        }
      }
}

namespace {

// Per-thread reusable work buffers; grown on demand, never shrunk.
double* scratch(std::size_t slot, std::size_t n) {
  thread_local std::vector<double> buffers[4];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b.data();
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1)
    throw ShapeError("conv2d: expected x NxCxHxW, w CoutxCinxkxk, b Cout");
  if (w.dim(1) != x.dim(1))
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " vs weight " + shape_str(w.shape()));
  if (w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0) throw ShapeError("conv2d: kernel must be square and odd");
  if (b.dim(0) != w.dim(0)) throw ShapeError("conv2d: bias length mismatch");
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeometry& g) {
  check_conv_shapes(x, w, b);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0);
  const std::size_t oh = g.out_extent(h), ow = g.out_extent(wd);
  const std::size_t l = oh * ow, rows = cin * g.kernel * g.kernel;
  Tensor y({n, cout, oh, ow});
  const bool pointwise = is_pointwise(g);
  double* cols = pointwise ? nullptr : scratch(0, rows * l);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xn = x.ptr() + i * cin * h * wd;
    if (!pointwise) im2col(xn, cin, h, wd, g, cols);
    double* yn = y.ptr() + i * cout * l;
    gemm(cout, l, rows, w.ptr(), pointwise ? xn : cols, yn, false);
#pragma omp parallel for schedule(static)
    for (long long o = 0; o < static_cast<long long>(cout); ++o) {
      const double bias = b[static_cast<std::size_t>(o)];
      double* plane = yn + static_cast<std::size_t>(o) * l;
      for (std::size_t p = 0; p < l; ++p) plane[p] += bias;
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, const ConvGeometry& g, Tensor* dx,
                     Tensor* dw, Tensor* db) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0);
  const std::size_t l = dy.dim(2) * dy.dim(3), rows = cin * g.kernel * g.kernel;
  if (dx) *dx = Tensor(x.shape());
  if (dw) *dw = Tensor(w.shape());
  if (db) *db = Tensor(Shape{cout});
  const bool pointwise = is_pointwise(g);
  double* cols = dw && !pointwise ? scratch(0, rows * l) : nullptr;
  double* dcols = dx && !pointwise ? scratch(2, rows * l) : nullptr;
  double* wt = dx ? scratch(3, rows * cout) : nullptr;
  if (dx) transpose(cout, rows, w.ptr(), wt);
  for (std::size_t i = 0; i < n; ++i) {
    const double* dyn = dy.ptr() + i * cout * l;
    if (db) {
      for (std::size_t o = 0; o < cout; ++o) {
        double s = (*db)[o];
        for (std::size_t p = 0; p < l; ++p) s += dyn[o * l + p];
        (*db)[o] = s;
      }
    }
    if (dw) {
      const double* xn = x.ptr() + i * cin * h * wd;
      if (!pointwise) im2col(xn, cin, h, wd, g, cols);
      gemm_nt(cout, rows, l, dyn, pointwise ? xn : cols, dw->ptr(), true);
    }
    if (dx) {
      double* dxn = dx->ptr() + i * cin * h * wd;
      if (pointwise) {
        gemm(rows, l, cout, wt, dyn, dxn, false);
      } else {
        gemm(rows, l, cout, wt, dyn, dcols, false);
        col2im(dcols, cin, h, wd, g, dxn);
      }
    }
  }
}

Tensor avg_pool(const Tensor& x, std::size_t k) {
  if (x.rank() != 4) throw ShapeError("avg_pool: expected NxCxHxW");
  if (k == 0 || x.dim(2) % k != 0 || x.dim(3) % k != 0)
    throw ShapeError("avg_pool: extents " + shape_str(x.shape()) + " not divisible by " + std::to_string(k));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / k, ow = w / k;
  const double area = static_cast<double>(k * k);
  Tensor y({x.dim(0), x.dim(1), oh, ow});
#pragma omp parallel for schedule(static)
  for (long long pl = 0; pl < static_cast<long long>(planes); ++pl) {
    const double* in = x.ptr() + static_cast<std::size_t>(pl) * h * w;
    double* out = y.ptr() + static_cast<std::size_t>(pl) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) s += in[(oy * k + dy) * w + ox * k + dx];
        out[oy * ow + ox] = s / area;
      }
  }
  return y;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  if (x.rank() != 4) throw ShapeError("upsample_nearest: expected NxCxHxW");
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor y({x.dim(0), x.dim(1), oh, ow});
#pragma omp parallel for schedule(static)
  for (long long pl = 0; pl < static_cast<long long>(planes); ++pl) {
    const double* in = x.ptr() + static_cast<std::size_t>(pl) * h * w;
    double* out = y.ptr() + static_cast<std::size_t>(pl) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) out[oy * ow + ox] = in[(oy / factor) * w + ox / factor];
  }
  return y;
}

}  // namespace kernels

namespace reference {

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[j * k + p], acc);
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[p * n + j], acc);
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
}

void im2col(const double* img, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, double* cols) {
  const std::size_t oh = g.out_extent(height), ow = g.out_extent(width);
  std::size_t r = 0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx, ++r)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
            const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long long>(height) &&
                                ix < static_cast<long long>(width);
            cols[(r * oh + oy) * ow + ox] =
                inside ? img[(c * height + static_cast<std::size_t>(iy)) * width + static_cast<std::size_t>(ix)]
                       : 0.0;
          }
}

// Direct convolution; padded taps are skipped, which leaves the fma chain unchanged.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeometry& g) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) throw ShapeError("reference conv2d: channel mismatch");
  const std::size_t oh = g.out_extent(h), ow = g.out_extent(wd);
  Tensor y({n, cout, oh, ow});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
                const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(h) || ix >= static_cast<long long>(wd)) continue;
                acc = std::fma(w.at(o, c, ky, kx), x.at(i, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)),
                               acc);
              }
          y.at(i, o, oy, ox) = acc + b[o];
        }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, const ConvGeometry& g, Tensor* dx,
                     Tensor* dw, Tensor* db) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t oh = dy.dim(2), ow = dy.dim(3);
  if (dx) *dx = Tensor(x.shape());
  if (dw) *dw = Tensor(w.shape());
  if (db) *db = Tensor(Shape{cout});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = dy.at(i, o, oy, ox);
          if (db) (*db)[o] += go;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad);
                const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(h) || ix >= static_cast<long long>(wd)) continue;
                const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                if (dw) dw->at(o, c, ky, kx) += go * x.at(i, c, uy, ux);
                if (dx) dx->at(i, c, uy, ux) += go * w.at(o, c, ky, kx);
              }
        }
}

Tensor avg_pool(const Tensor& x, std::size_t k) {
  if (k == 0 || x.dim(2) % k != 0 || x.dim(3) % k != 0) throw ShapeError("reference avg_pool: indivisible extents");
  Tensor y({x.dim(0), x.dim(1), x.dim(2) / k, x.dim(3) / k});
  for (std::size_t n = 0; n < y.dim(0); ++n)
    for (std::size_t c = 0; c < y.dim(1); ++c)
      for (std::size_t oy = 0; oy < y.dim(2); ++oy)
        for (std::size_t ox = 0; ox < y.dim(3); ++ox) {
          double s = 0.0;
          for (std::size_t dy = 0; dy < k; ++dy)
            for (std::size_t dx = 0; dx < k; ++dx) s += x.at(n, c, oy * k + dy, ox * k + dx);
          y.at(n, c, oy, ox) = s / static_cast<double>(k * k);
        }
  return y;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  Tensor y({x.dim(0), x.dim(1), x.dim(2) * factor, x.dim(3) * factor});
  for (std::size_t n = 0; n < y.dim(0); ++n)
    for (std::size_t c = 0; c < y.dim(1); ++c)
      for (std::size_t oy = 0; oy < y.dim(2); ++oy)
        for (std::size_t ox = 0; ox < y.dim(3); ++ox) y.at(n, c, oy, ox) = x.at(n, c, oy / factor, ox / factor);
  return y;
}

}  // namespace reference

}  // namespace ptnet

#pragma once

// Numeric kernels behind the differentiable ops.
//
// Two implementations share each signature: `kernels::` is the OpenMP-parallel
// production path, `reference::` the plain serial loops kept for testing and
// benchmarking. Every reduction accumulates with std::fma in ascending index
// order starting from zero, so both paths produce bitwise-identical forward
// values independent of thread count.

#include <cstddef>
#include <span>

#include "ptnet/tensor.hpp"

namespace ptnet {

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  // Output extent for an input extent; throws ShapeError when not integral.
  std::size_t out_extent(std::size_t in) const;
};

namespace kernels {

// C[MxN] = A[MxK] * B[KxN] (accumulate=false) or C += A*B (accumulate=true).
// All matrices row-major and contiguous.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);

// C[MxN] (+)= A[MxK] * B[NxK]^T. The shared index is split across vector lanes, so
// the summation order differs from gemm; results agree to rounding.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);

// out[c][r] = in[r][c]
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out);

// Single image C x H x W -> (C*k*k) x L patch matrix; rows channel-major then kernel
// row-major, columns row-major over patch positions; padded cells read as zero.
void im2col(const double* img, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, double* cols);
// Adjoint of im2col: scatter-add columns back into a zeroed C x H x W image.
void col2im(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, double* img);
// Number of patch columns covering each pixel (same geometry as im2col).
void coverage(std::size_t height, std::size_t width, const ConvGeometry& g, double* counts);

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeometry& g);
// Gradients for x, w and b; any output pointer may be null.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, const ConvGeometry& g,
                     Tensor* dx, Tensor* dw, Tensor* db);

Tensor avg_pool(const Tensor& x, std::size_t k);
Tensor upsample_nearest(const Tensor& x, std::size_t factor);

}  // namespace kernels

namespace reference {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void im2col(const double* img, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, double* cols);
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeometry& g);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, const ConvGeometry& g,
                     Tensor* dx, Tensor* dw, Tensor* db);
Tensor avg_pool(const Tensor& x, std::size_t k);
Tensor upsample_nearest(const Tensor& x, std::size_t factor);

}  // namespace reference

// Thread control; a no-op when built without OpenMP.
void set_num_threads(int n);
int max_threads();

}  // namespace ptnet

#pragma once

#include <array>

#include "ptnet/image.hpp"

namespace ptnet::codec {

using Block8 = std::array<double, 64>;

// 8x8 luminance quantizers, row-major, each in [1, 255].
struct QuantTable {
  std::array<int, 64> q{};

  int operator()(std::size_t row, std::size_t col) const { return q[row * 8 + col]; }
  bool operator==(const QuantTable&) const = default;
};

// IJG-style scaling of the Annex K luminance table:
// scale = 5000/qf (qf < 50) or 200 - 2*qf, entry = clamp((base*scale + 50)/100, 1, 255).
QuantTable luma_quant_table(int qf);

// Orthonormal 2-D DCT-II and its inverse.
Block8 dct8(const Block8& block);
Block8 idct8(const Block8& coeffs);

// JPEG luminance round trip: replicate-pad to multiples of 8, level shift, DCT,
// quantize (halves away from zero), dequantize, inverse DCT, crop, round and clamp.
// Entropy coding is lossless and therefore skipped.
ImagePlane degrade(const ImagePlane& img, int qf);

}  // namespace ptnet::codec

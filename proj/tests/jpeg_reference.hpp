#pragma once

// Reference baseline JPEG round trip through libjpeg (IJG tables, 4:4:4 grayscale).

#include <jpeglib.h>

#include <array>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "ptnet/image.hpp"

namespace jpegref {

struct Encoded {
  std::vector<unsigned char> bytes;
};

inline Encoded encode(const ptnet::ImagePlane& img, int qf, J_DCT_METHOD dct = JDCT_FLOAT) {
  jpeg_compress_struct c{};
  jpeg_error_mgr err{};
  c.err = jpeg_std_error(&err);
  jpeg_create_compress(&c);
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&c, &buf, &size);
  c.image_width = static_cast<JDIMENSION>(img.width);
  c.image_height = static_cast<JDIMENSION>(img.height);
  c.input_components = 1;
  c.in_color_space = JCS_GRAYSCALE;
  jpeg_set_defaults(&c);
  jpeg_set_quality(&c, qf, TRUE);
  c.dct_method = dct;
  c.optimize_coding = FALSE;
  jpeg_start_compress(&c, TRUE);
  while (c.next_scanline < c.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(img.pixels.data() + c.next_scanline * img.width);
    jpeg_write_scanlines(&c, &row, 1);
  }
  jpeg_finish_compress(&c);
  jpeg_destroy_compress(&c);
  Encoded e{std::vector<unsigned char>(buf, buf + size)};
  std::free(buf);
  return e;
}

inline ptnet::ImagePlane decode(const Encoded& e, J_DCT_METHOD dct = JDCT_FLOAT) {
  jpeg_decompress_struct d{};
  jpeg_error_mgr err{};
  d.err = jpeg_std_error(&err);
  jpeg_create_decompress(&d);
  jpeg_mem_src(&d, e.bytes.data(), static_cast<unsigned long>(e.bytes.size()));
  jpeg_read_header(&d, TRUE);
  d.dct_method = dct;
  d.do_fancy_upsampling = FALSE;
  jpeg_start_decompress(&d);
  ptnet::ImagePlane out(d.output_width, d.output_height);
  while (d.output_scanline < d.output_height) {
    JSAMPROW row = out.pixels.data() + d.output_scanline * out.width;
    jpeg_read_scanlines(&d, &row, 1);
  }
  jpeg_finish_decompress(&d);
  jpeg_destroy_decompress(&d);
  return out;
}

// First 8-bit DQT segment of the stream, de-zigzagged to row-major order.
inline std::array<int, 64> first_dqt(const Encoded& e) {
  static constexpr int kZigzag[64] = {0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
                                      12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
                                      35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
                                      58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};
  const auto& b = e.bytes;
  for (std::size_t i = 2; i + 4 < b.size(); ++i) {
    if (b[i] != 0xFF || b[i + 1] != 0xDB) continue;
    const std::size_t body = i + 4;
    if ((b[body] >> 4) != 0) throw std::runtime_error("16-bit DQT not expected");
    std::array<int, 64> table{};
    for (int k = 0; k < 64; ++k) table[kZigzag[k]] = b[body + 1 + k];
    return table;
  }
  throw std::runtime_error("no DQT segment");
}

inline ptnet::ImagePlane round_trip(const ptnet::ImagePlane& img, int qf) { return decode(encode(img, qf)); }

}  // namespace jpegref

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ptnet/tensor.hpp"

namespace ptnet {

// Single-channel 8-bit raster, row-major.
struct ImagePlane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImagePlane() = default;
  ImagePlane(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool empty() const { return pixels.empty(); }
  bool operator==(const ImagePlane&) const = default;
};

// BT.601 luma, rounded: Y = 0.299 R + 0.587 G + 0.114 B.
std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// round(v * 255) clamped to [0, 255], halves away from zero.
std::uint8_t unit_to_level(double v);

// Levels / 255 as a 1 x 1 x H x W tensor.
Tensor plane_to_tensor(const ImagePlane& p);
// Accepts 1 x 1 x H x W (or N x 1 x H x W with n selecting the item).
ImagePlane tensor_to_plane(const Tensor& t, std::size_t n = 0);

ImagePlane crop(const ImagePlane& p, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);
// Edge-replicating pad on the right and bottom.
ImagePlane pad_replicate(const ImagePlane& p, std::size_t w, std::size_t h);
ImagePlane flip_horizontal(const ImagePlane& p);
ImagePlane flip_vertical(const ImagePlane& p);

// 8-bit PNG I/O. Color inputs are reduced to luma with luma_bt601.
ImagePlane read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImagePlane& p);

}  // namespace ptnet

#include "ptnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ptnet {

std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp(std::round(y), 0.0, 255.0));
}

std::uint8_t unit_to_level(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v * 255.0), 0.0, 255.0));
}

Tensor plane_to_tensor(const ImagePlane& p) {
  if (p.empty()) throw ShapeError("plane_to_tensor: empty image");
  Tensor t({1, 1, p.height, p.width});
  for (std::size_t i = 0; i < p.pixels.size(); ++i) t[i] = p.pixels[i] / 255.0;
  return t;
}

ImagePlane tensor_to_plane(const Tensor& t, std::size_t n) {
  if (t.rank() != 4 || t.dim(1) != 1 || n >= t.dim(0))
    throw ShapeError("tensor_to_plane: expected Nx1xHxW, got " + shape_str(t.shape()));
  ImagePlane p(t.dim(3), t.dim(2));
  const double* src = t.ptr() + n * p.width * p.height;
  for (std::size_t i = 0; i < p.pixels.size(); ++i) p.pixels[i] = unit_to_level(src[i]);
  return p;
}

ImagePlane crop(const ImagePlane& p, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > p.width || y0 + h > p.height) throw std::out_of_range("crop: window outside image");
  ImagePlane out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    std::memcpy(&out.pixels[y * w], &p.pixels[(y0 + y) * p.width + x0], w);
  return out;
}

ImagePlane pad_replicate(const ImagePlane& p, std::size_t w, std::size_t h) {
  if (w < p.width || h < p.height || p.empty()) throw std::invalid_argument("pad_replicate: target smaller than image");
  ImagePlane out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(x, y) = p.at(std::min(x, p.width - 1), std::min(y, p.height - 1));
  return out;
}

ImagePlane flip_horizontal(const ImagePlane& p) {
  ImagePlane out(p.width, p.height);
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x) out.at(x, y) = p.at(p.width - 1 - x, y);
  return out;
}

ImagePlane flip_vertical(const ImagePlane& p) {
  ImagePlane out(p.width, p.height);
  for (std::size_t y = 0; y < p.height; ++y)
    std::memcpy(&out.pixels[y * p.width], &p.pixels[(p.height - 1 - y) * p.width], p.width);
  return out;
}

ImagePlane read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  ImagePlane out(image.width, image.height);
  if (color) {
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] = luma_bt601(buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]);
  } else {
    out.pixels = std::move(buffer);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const ImagePlane& p) {
  if (p.empty()) throw std::invalid_argument("write_png: empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(p.width);
  image.height = static_cast<png_uint_32>(p.height);
  image.format = PNG_FORMAT_GRAY;
  auto tmp = path;
  tmp += ".tmp";
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, p.pixels.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
  std::filesystem::rename(tmp, path);
}

}  // namespace ptnet

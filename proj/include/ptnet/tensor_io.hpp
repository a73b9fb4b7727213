#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ptnet/tensor.hpp"

namespace ptnet {

// Flat binary dump: 8-byte magic "STPTNS01", u32 rank, rank x u32 extents, then the
// values as little-endian doubles in row-major order.
inline constexpr char kTensorMagic[8] = {'S', 'T', 'P', 'T', 'N', 'S', '0', '1'};

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

// Writes via a temporary file and rename so readers never see a partial file.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Writes `contents` to `path` atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace ptnet

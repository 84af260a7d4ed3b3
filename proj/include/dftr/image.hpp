// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dftr {

/// Row-major, channel-interleaved image with values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> data;

  static Image blank(std::size_t width, std::size_t height, std::size_t channels, double fill = 0);
  std::size_t pixels() const { return width * height; }
  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return data[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed netpbm data; `offset` is the byte position where parsing failed.
struct ImageParseError : IoError {
  ImageParseError(const std::string& source, std::size_t offset, const std::string& what);
  std::size_t offset;
};

/// 8-bit quantization used by the netpbm writers: round(x·255) clamped to [0, 255].
unsigned char to_byte(double x);
double from_byte(unsigned char v);

/// Parses binary P6 (channels 3) or P5 (channels 1) with maxval 255.
Image decode_pnm(std::string_view bytes, std::size_t channels, const std::string& source = "<memory>");
std::string encode_pnm(const Image& img);

Image load_ppm(const std::filesystem::path& path);
Image load_pgm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const Image& img);
void save_pgm(const std::filesystem::path& path, const Image& img);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dftr

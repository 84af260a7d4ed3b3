// SPDX-License-Identifier: Apache-2.0
#include "dftr/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dftr {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  HeaderReader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > 1u << 24) throw ImageParseError(source_, start, std::string(field) + " is too large");
      ++pos_;
    }
    if (pos_ == start)
      throw ImageParseError(source_, start, std::string("expected ") + field);
    return value;
  }

  void single_space() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_]))
      throw ImageParseError(source_, pos_, "expected one whitespace byte after maxval");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageParseError::ImageParseError(const std::string& source, std::size_t off, const std::string& what)
    : IoError(source + ": byte " + std::to_string(off) + ": " + what), offset(off) {}

Image Image::blank(std::size_t width, std::size_t height, std::size_t channels, double fill) {
  return Image{width, height, channels, std::vector<double>(width * height * channels, fill)};
}

unsigned char to_byte(double x) {
  const double v = std::round(x * 255.0);
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<unsigned char>(v);
}

double from_byte(unsigned char v) { return static_cast<double>(v) / 255.0; }

Image decode_pnm(std::string_view bytes, std::size_t channels, const std::string& source) {
  const char* magic = channels == 3 ? "P6" : "P5";
  if (channels != 1 && channels != 3) throw std::invalid_argument("decode_pnm: channels must be 1 or 3");
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic)
    throw ImageParseError(source, 0, std::string("bad magic, expected ") + magic);
  HeaderReader r(bytes, source);
  r.advance(2);
  Image img;
  img.channels = channels;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval_at = r.pos();
  if (r.number("maxval") != 255) throw ImageParseError(source, maxval_at, "maxval must be 255");
  if (img.width == 0 || img.height == 0) throw ImageParseError(source, maxval_at, "zero image extent");
  r.single_space();
  const std::size_t expected = img.width * img.height * channels;
  const std::size_t actual = bytes.size() - r.pos();
  if (actual < expected)
    throw ImageParseError(source, bytes.size(),
                          "truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                              std::to_string(actual));
  if (actual > expected)
    throw ImageParseError(source, r.pos() + expected,
                          std::to_string(actual - expected) + " trailing bytes after payload");
  img.data.resize(expected);
  for (std::size_t i = 0; i < expected; ++i)
    img.data[i] = from_byte(static_cast<unsigned char>(bytes[r.pos() + i]));
  return img;
}

std::string encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("encode_pnm: channels must be 1 or 3, got " + std::to_string(img.channels));
  std::ostringstream out;
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::string s = out.str();
  s.reserve(s.size() + img.data.size());
  for (double v : img.data) s.push_back(static_cast<char>(to_byte(v)));
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Image load_ppm(const std::filesystem::path& path) { return decode_pnm(read_file(path), 3, path.string()); }
Image load_pgm(const std::filesystem::path& path) { return decode_pnm(read_file(path), 1, path.string()); }

void save_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("save_ppm: image has " + std::to_string(img.channels) + " channels");
  write_file_atomic(path, encode_pnm(img));
}

void save_pgm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1) throw std::invalid_argument("save_pgm: image has " + std::to_string(img.channels) + " channels");
  write_file_atomic(path, encode_pnm(img));
}

}  // namespace dftr

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dftr/image.hpp"
#include "dftr/rng.hpp"
#include "dftr/tensor.hpp"

namespace dftr::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dftr") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> uniform_values(Rng& rng, std::size_t n, double lo = -2, double hi = 2) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

/// Leaf tensor with uniform values that requires a gradient.
inline Tensor random_leaf(Rng& rng, Shape shape, double lo = -2, double hi = 2) {
  auto t = Tensor::from(shape, uniform_values(rng, numel(shape), lo, hi));
  t.set_requires_grad(true);
  return t;
}

inline Image random_image(Rng& rng, std::size_t w, std::size_t h, std::size_t channels = 1) {
  Image img = Image::blank(w, h, channels);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

inline Image random_mask(Rng& rng, std::size_t w, std::size_t h, double p = 0.4) {
  Image img = Image::blank(w, h, 1);
  for (auto& v : img.data) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return img;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dftr::test

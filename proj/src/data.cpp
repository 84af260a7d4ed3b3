// SPDX-License-Identifier: Apache-2.0
#include "dftr/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace dftr::data {
namespace {

using Color = std::array<double, 3>;

double quantize(double v) { return from_byte(to_byte(v)); }

double color_distance(const Color& a, const Color& b) {
  return (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2])) / 3.0;
}

Color random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

struct Geometry {
  ShapeKind kind;
  double cx, cy, r, rot;
  double aspect;                // rectangle
  std::array<double, 3> jitter;  // triangle vertex angles
  double a1, a2, p1, p2;        // blob harmonics
};

Geometry draw_geometry(Rng& rng, ShapeKind kind, const SceneSpec& spec) {
  const auto s = static_cast<double>(spec.size);
  Geometry g{};
  g.kind = kind;
  g.cx = rng.uniform(0.3, 0.7) * s;
  g.cy = rng.uniform(0.3, 0.7) * s;
  g.r = rng.uniform(spec.min_scale, spec.max_scale) * s;
  g.rot = rng.uniform(0.0, 2.0 * std::numbers::pi);
  g.aspect = rng.uniform(0.5, 1.0);
  for (auto& j : g.jitter) j = rng.uniform(-0.3, 0.3);
  g.a1 = rng.uniform(0.0, 0.2);
  g.a2 = rng.uniform(0.0, 0.2);
  g.p1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  g.p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return g;
}

bool inside(const Geometry& g, double px, double py) {
  const double dx = px - g.cx, dy = py - g.cy;
  const double c = std::cos(g.rot), s = std::sin(g.rot);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  switch (g.kind) {
    case ShapeKind::Disk:
      return dx * dx + dy * dy <= g.r * g.r;
    case ShapeKind::Rectangle:
      return std::abs(u) <= g.r && std::abs(v) <= g.r * g.aspect;
    case ShapeKind::Triangle: {
      std::array<double, 3> vx, vy;
      for (int k = 0; k < 3; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 3.0 + g.jitter[static_cast<std::size_t>(k)];
        vx[static_cast<std::size_t>(k)] = g.r * std::cos(a);
        vy[static_cast<std::size_t>(k)] = g.r * std::sin(a);
      }
      int sign = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t n = (k + 1) % 3;
        const double cross = (vx[n] - vx[k]) * (v - vy[k]) - (vy[n] - vy[k]) * (u - vx[k]);
        const int sg = cross > 0 ? 1 : (cross < 0 ? -1 : 0);
        if (sg == 0) continue;
        if (sign == 0) sign = sg;
        if (sg != sign) return false;
      }
      return true;
    }
    case ShapeKind::Blob: {
      const double rho = std::sqrt(dx * dx + dy * dy);
      const double theta = std::atan2(dy, dx);
      const double edge = g.r * (1.0 + g.a1 * std::sin(2.0 * theta + g.p1) + g.a2 * std::sin(3.0 * theta + g.p2));
      return rho <= edge;
    }
  }
  return false;
}

/// Rasterizes the silhouette; empty when coverage or margin rules fail.
std::vector<double> rasterize(const Geometry& g, const SceneSpec& spec) {
  const std::size_t n = spec.size;
  std::vector<double> mask(n * n, 0.0);
  std::size_t count = 0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      if (!inside(g, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
      if (x < spec.margin || y < spec.margin || x + spec.margin >= n || y + spec.margin >= n) return {};
      mask[y * n + x] = 1.0;
      ++count;
    }
  const double coverage = static_cast<double>(count) / static_cast<double>(n * n);
  if (coverage < spec.min_coverage || coverage > spec.max_coverage) return {};
  return mask;
}

std::vector<double> value_noise(Rng& rng, std::size_t n) {
  const std::size_t cell = std::max<std::size_t>(2, n / 8);
  const std::size_t lattice = n / cell + 2;
  std::vector<double> knots(lattice * lattice);
  for (auto& k : knots) k = rng.uniform();
  std::vector<double> out(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(cell);
      const double fy = static_cast<double>(y) / static_cast<double>(cell);
      const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
      const double wx = fx - static_cast<double>(x0), wy = fy - static_cast<double>(y0);
      auto k = [&](std::size_t yy, std::size_t xx) { return knots[yy * lattice + xx]; };
      out[y * n + x] = (1 - wy) * ((1 - wx) * k(y0, x0) + wx * k(y0, x0 + 1)) +
                       wy * ((1 - wx) * k(y0 + 1, x0) + wx * k(y0 + 1, x0 + 1));
    }
  return out;
}

}  // namespace

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Blob: return "blob";
  }
  return "?";
}

ShapeKind parse_shape(const std::string& s) {
  for (auto k : {ShapeKind::Disk, ShapeKind::Rectangle, ShapeKind::Triangle, ShapeKind::Blob})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown shape '" + s + "' (expected disk, rectangle, triangle or blob)");
}

std::vector<ShapeKind> parse_shape_list(const std::string& s) {
  std::vector<ShapeKind> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_shape(item));
  if (out.empty()) throw std::invalid_argument("empty shape list");
  return out;
}

std::string sample_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

Sample make_scene(const SceneSpec& spec, std::size_t index) {
  if (spec.size < 8) throw std::invalid_argument("scene size must be at least 8");
  if (spec.shapes.empty()) throw std::invalid_argument("scene needs at least one shape kind");
  Sample s;
  s.name = sample_name(index);
  s.seed = derive_seed(spec.seed, index);
  Rng rng(s.seed);
  s.shape = spec.shapes[rng.below(spec.shapes.size())];
  const std::size_t n = spec.size;
  const auto side = static_cast<double>(n);

  std::vector<double> mask;
  for (int attempt = 0; mask.empty(); ++attempt) {
    if (attempt == 1000) throw std::runtime_error("scene " + s.name + ": no valid object placement");
    mask = rasterize(draw_geometry(rng, s.shape, spec), spec);
  }

  // Depth: tilted background plane plus a nearer plateau on the object.
  const double gx = rng.uniform(-0.3, 0.3), gy = rng.uniform(-0.3, 0.3);
  std::vector<double> depth(n * n);
  double far_max = 0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double d = 0.3 + gx * (static_cast<double>(x) / side - 0.5) + gy * (static_cast<double>(y) / side - 0.5);
      depth[y * n + x] = d;
      if (mask[y * n + x] == 0.0) far_max = std::max(far_max, d);
    }
  const double plateau = far_max + spec.depth_gap + rng.uniform(0.0, 0.1);
  const double ripple_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (mask[y * n + x] != 0.0)
        depth[y * n + x] = plateau + 0.015 * (1.0 + std::sin(ripple_phase + 6.0 * static_cast<double>(x + y) / side));
  const auto [lo, hi] = std::minmax_element(depth.begin(), depth.end());
  const double dmin = *lo, range = *hi - *lo;
  s.depth = Image::blank(n, n, 1);
  for (std::size_t i = 0; i < n * n; ++i) s.depth.data[i] = quantize((depth[i] - dmin) / range);

  // Colours: background texture between two colours, object in a contrasting one.
  const Color c0 = random_color(rng), c1 = random_color(rng);
  Color obj = random_color(rng);
  for (int tries = 0; tries < 200 && (color_distance(obj, c0) < 0.35 || color_distance(obj, c1) < 0.35); ++tries)
    obj = random_color(rng);
  const auto texture = static_cast<Texture>(rng.below(3));
  std::vector<double> blend(n * n);
  if (texture == Texture::Gradient) {
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double t = 0.5 + 0.5 * (std::cos(a) * (static_cast<double>(x) / side - 0.5) +
                                      std::sin(a) * (static_cast<double>(y) / side - 0.5)) * 1.4;
        blend[y * n + x] = std::clamp(t, 0.0, 1.0);
      }
  } else if (texture == Texture::Checker) {
    const std::size_t cell = std::max<std::size_t>(2, n / (4 + rng.below(5)));
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) blend[y * n + x] = ((x / cell + y / cell) % 2 == 0) ? 0.0 : 1.0;
  } else {
    blend = value_noise(rng, n);
  }
  s.rgb = Image::blank(n, n, 3);
  for (std::size_t i = 0; i < n * n; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double bg = c0[c] * (1.0 - blend[i]) + c1[c] * blend[i];
      const double v = mask[i] != 0.0 ? obj[c] * (0.92 + 0.08 * s.depth.data[i]) : bg;
      s.rgb.data[i * 3 + c] = quantize(std::clamp(v, 0.0, 1.0));
    }
  s.mask = Image{n, n, 1, std::move(mask)};
  return s;
}

void save_sample(const std::filesystem::path& root, const Sample& s) {
  save_ppm(root / "rgb" / (s.name + ".ppm"), s.rgb);
  save_pgm(root / "depth" / (s.name + ".pgm"), s.depth);
  save_pgm(root / "mask" / (s.name + ".pgm"), s.mask);
}

void generate(const SceneSpec& spec, std::size_t n, const std::filesystem::path& root) {
  std::error_code ec;
  for (const char* sub : {"rgb", "depth", "mask"}) {
    std::filesystem::create_directories(root / sub, ec);
    if (ec) throw IoError("cannot create " + (root / sub).string() + ": " + ec.message());
  }
  std::string manifest;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample s = make_scene(spec, i);
    save_sample(root, s);
    manifest += s.name + '\t' + std::to_string(s.seed) + '\t' + to_string(s.shape) + '\n';
  }
  write_file_atomic(root / "manifest.tsv", manifest);
}

std::vector<Sample> load_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError("dataset directory not found: " + root.string());
  std::istringstream manifest(read_file(root / "manifest.tsv"));
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Sample s;
    std::string shape;
    if (!std::getline(fields, s.name, '\t') || !(fields >> s.seed >> shape))
      throw IoError((root / "manifest.tsv").string() + ":" + std::to_string(line_no) + ": malformed line");
    s.shape = parse_shape(shape);
    s.rgb = load_ppm(root / "rgb" / (s.name + ".ppm"));
    s.depth = load_pgm(root / "depth" / (s.name + ".pgm"));
    s.mask = load_pgm(root / "mask" / (s.name + ".pgm"));
    for (const Image* m : {&s.depth, &s.mask})
      if (m->width != s.rgb.width || m->height != s.rgb.height)
        throw IoError("sample " + s.name + ": depth/mask size differs from rgb");
    for (auto& v : s.mask.data) v = v >= 0.5 ? 1.0 : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

Image resize_bilinear(const Image& img, std::size_t width, std::size_t height) {
  if (width == img.width && height == img.height) return img;
  Image out = Image::blank(width, height, img.channels);
  auto source = [](std::size_t o, std::size_t in, std::size_t out_n) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    s = std::max(s, 0.0);
    auto i0 = std::min(static_cast<std::size_t>(s), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    return std::tuple{i0, i1, s - static_cast<double>(i0)};
  };
  for (std::size_t y = 0; y < height; ++y) {
    const auto [y0, y1, wy] = source(y, img.height, height);
    for (std::size_t x = 0; x < width; ++x) {
      const auto [x0, x1, wx] = source(x, img.width, width);
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(y, x, c) = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                          wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
    }
  }
  return out;
}

Image resize_nearest(const Image& img, std::size_t width, std::size_t height) {
  if (width == img.width && height == img.height) return img;
  Image out = Image::blank(width, height, img.channels);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(img.height - 1, (2 * y + 1) * img.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(img.width - 1, (2 * x + 1) * img.width / (2 * width));
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height) {
  if (x0 + width > img.width || y0 + height > img.height || width == 0 || height == 0)
    throw std::invalid_argument("crop rectangle outside image");
  if (x0 == 0 && y0 == 0 && width == img.width && height == img.height) return img;
  Image out = Image::blank(width, height, img.channels);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

Sample resize_to_input(const Sample& s, std::size_t side) {
  Sample out = s;
  out.rgb = resize_bilinear(s.rgb, side, side);
  out.depth = resize_bilinear(s.depth, side, side);
  out.mask = resize_nearest(s.mask, side, side);
  return out;
}

Image rescale_prediction(const Image& pred, std::size_t width, std::size_t height) {
  return resize_bilinear(pred, width, height);
}

AugmentParams AugmentParams::identity(std::size_t width, std::size_t height, std::size_t side) {
  return AugmentParams{false, 0, 0, width, height, side};
}

std::size_t snapped_side(double scale, std::size_t side, std::size_t snap) {
  const double units = std::round(scale * static_cast<double>(side) / static_cast<double>(snap));
  return std::max<std::size_t>(1, static_cast<std::size_t>(units)) * snap;
}

AugmentParams draw_augment(Rng& rng, const AugmentConfig& cfg, std::size_t width,
                           std::size_t height, std::size_t side) {
  AugmentParams p;
  p.flip = rng.bernoulli(cfg.flip_probability);
  auto extent = [&](std::size_t n) {
    const double f = rng.uniform(cfg.min_crop, 1.0);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::round(f * static_cast<double>(n))), 1, n);
  };
  p.crop_w = extent(width);
  p.crop_h = extent(height);
  p.crop_x = rng.below(width - p.crop_w + 1);
  p.crop_y = rng.below(height - p.crop_h + 1);
  p.scale_side = snapped_side(cfg.scales.at(rng.below(cfg.scales.size())), side, cfg.snap);
  return p;
}

Sample apply_augment(const Sample& s, const AugmentParams& p, std::size_t side) {
  Sample out = s;
  auto geometric = [&](const Image& img, bool nearest) {
    Image x = p.flip ? flip_horizontal(img) : img;
    x = crop(x, p.crop_x, p.crop_y, p.crop_w, p.crop_h);
    if (nearest) return resize_nearest(resize_nearest(x, p.scale_side, p.scale_side), side, side);
    return resize_bilinear(resize_bilinear(x, p.scale_side, p.scale_side), side, side);
  };
  out.rgb = geometric(s.rgb, false);
  out.depth = geometric(s.depth, false);
  out.mask = geometric(s.mask, true);
  return out;
}

Sample augment(const Sample& s, Rng& rng, const AugmentConfig& cfg, std::size_t side) {
  return apply_augment(s, draw_augment(rng, cfg, s.rgb.width, s.rgb.height, side), side);
}

Tensor to_tensor(const Image& img) {
  return Tensor::from({img.pixels(), img.channels}, img.data);
}

Image to_image(const Tensor& t, std::size_t width, std::size_t height) {
  if (t.rank() != 2 || t.dim(0) != width * height)
    throw DimensionError("to_image: tensor " + dftr::to_string(t.shape()) + " for " +
                         std::to_string(width) + "x" + std::to_string(height));
  return Image{width, height, t.dim(1), std::vector<double>(t.data().begin(), t.data().end())};
}

}  // namespace dftr::data

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dftr/image.hpp"
#include "dftr/rng.hpp"
#include "dftr/tensor.hpp"

namespace dftr::data {

enum class ShapeKind { Disk, Rectangle, Triangle, Blob };
enum class Texture { Gradient, Checker, Noise };

std::string to_string(ShapeKind k);
ShapeKind parse_shape(const std::string& s);
/// Comma-separated shape names, e.g. "disk,blob".
std::vector<ShapeKind> parse_shape_list(const std::string& s);

/// rgb (3 channels), depth (0 = far, 1 = near) and binary mask, all in [0,1].
struct Sample {
  std::string name;
  std::uint64_t seed = 0;
  ShapeKind shape = ShapeKind::Disk;
  Image rgb;
  Image depth;
  Image mask;
};

struct SceneSpec {
  std::size_t size = 64;
  std::vector<ShapeKind> shapes{ShapeKind::Disk, ShapeKind::Rectangle, ShapeKind::Triangle,
                                ShapeKind::Blob};
  std::uint64_t seed = 0;

  // Object radius as a fraction of the side, and the accepted mask coverage.
  double min_scale = 0.15;
  double max_scale = 0.35;
  double min_coverage = 0.02;
  double max_coverage = 0.60;
  std::size_t margin = 2;
  double depth_gap = 0.15;  // plateau height above the farthest-near background pixel
};

inline constexpr double kMinDepthGap = 0.1;

std::string sample_name(std::size_t index);
/// Sample `index` of the scene set, a pure function of (spec, index).
Sample make_scene(const SceneSpec& spec, std::size_t index);

/// Writes n samples plus manifest.tsv under root.
void generate(const SceneSpec& spec, std::size_t n, const std::filesystem::path& root);

std::vector<Sample> load_dataset(const std::filesystem::path& root);
void save_sample(const std::filesystem::path& root, const Sample& s);

// ---------------------------------------------------------------------------
// resampling

/// Bilinear with half-pixel centers; returns the input unchanged at equal size.
Image resize_bilinear(const Image& img, std::size_t width, std::size_t height);
/// Nearest neighbour on pixel centers; keeps binary maps binary.
Image resize_nearest(const Image& img, std::size_t width, std::size_t height);
Image flip_horizontal(const Image& img);
Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height);

Sample resize_to_input(const Sample& s, std::size_t side);
Image rescale_prediction(const Image& pred, std::size_t width, std::size_t height);

// ---------------------------------------------------------------------------
// augmentation

struct AugmentConfig {
  double flip_probability = 0.5;
  double min_crop = 0.8;
  std::vector<double> scales{0.75, 1.0, 1.25};
  std::size_t snap = 16;  // multi-scale sides are rounded to multiples of this
};

struct AugmentParams {
  bool flip = false;
  std::size_t crop_x = 0;
  std::size_t crop_y = 0;
  std::size_t crop_w = 0;
  std::size_t crop_h = 0;
  std::size_t scale_side = 0;

  /// No flip, full crop, scale side equal to `side`.
  static AugmentParams identity(std::size_t width, std::size_t height, std::size_t side);
};

std::size_t snapped_side(double scale, std::size_t side, std::size_t snap);
AugmentParams draw_augment(Rng& rng, const AugmentConfig& cfg, std::size_t width,
                           std::size_t height, std::size_t side);
/// flip -> crop -> resize to scale_side² -> resize to side². The mask is
/// resampled with nearest neighbour.
Sample apply_augment(const Sample& s, const AugmentParams& p, std::size_t side);
Sample augment(const Sample& s, Rng& rng, const AugmentConfig& cfg, std::size_t side);

// ---------------------------------------------------------------------------
// tensor views

/// [H*W, channels] tensor of the image values.
Tensor to_tensor(const Image& img);
/// Inverse of to_tensor for a [H*W, c] tensor.
Image to_image(const Tensor& t, std::size_t width, std::size_t height);

}  // namespace dftr::data

#pragma once

#include <array>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fusionnet/architecture.hpp"
#include "fusionnet/image.hpp"

namespace fusionnet {

/// Element of the dihedral group D4: optional horizontal mirror, then
/// `quarter_turns` counter-clockwise rotations by 90 degrees.
struct Orientation {
  int quarter_turns = 0;  // 0..3
  bool reflected = false;

  static Orientation identity() { return {}; }
  /// The 8 group elements: rotations 0..3 unreflected, then 0..3 reflected.
  static const std::array<Orientation, 8>& all();

  std::string to_string() const;
  bool operator==(const Orientation&) const = default;
};

/// a ∘ b: the orientation equivalent to applying `b` and then `a`.
Orientation compose(const Orientation& a, const Orientation& b);
Orientation inverse(const Orientation& g);

template <typename T>
Grid2D<T> flip_horizontal(const Grid2D<T>& in) {
  Grid2D<T> out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) out(y, x) = in(y, in.width - 1 - x);
  return out;
}

/// One counter-clockwise quarter turn; an H x W grid becomes W x H.
template <typename T>
Grid2D<T> rotate_ccw(const Grid2D<T>& in) {
  Grid2D<T> out(in.width, in.height);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out(y, x) = in(x, in.width - 1 - y);
  return out;
}

template <typename T>
Grid2D<T> d4_apply(const Grid2D<T>& image, const Orientation& g) {
  if (g.quarter_turns < 0 || g.quarter_turns > 3) throw std::invalid_argument("orientation: quarter_turns outside 0..3");
  if (g.quarter_turns % 2 == 1 && image.height != image.width) {
    throw std::invalid_argument("d4_apply: " + g.to_string() + " needs a square image, got " +
                                std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  Grid2D<T> out = g.reflected ? flip_horizontal(image) : image;
  for (int i = 0; i < g.quarter_turns; ++i) out = rotate_ccw(out);
  return out;
}

/// All 8 orientations of every pair; image and label share the group element.
std::vector<SamplePair> enrich(const std::vector<SamplePair>& dataset);

/// Reflection index without repeating the edge sample (…, 2, 1, 0, 1, 2, …).
int reflect_index(int i, int n);

/// Extends each border by `radius` reflected pixels; requires radius < min(H, W).
template <typename T>
Grid2D<T> mirror_pad(const Grid2D<T>& image, int radius) {
  if (radius < 0) throw std::invalid_argument("mirror_pad: negative radius");
  if (radius > 0 && (radius >= image.height || radius >= image.width)) {
    throw std::invalid_argument("mirror_pad: radius " + std::to_string(radius) + " must be smaller than " +
                                std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  Grid2D<T> out(image.height + 2 * radius, image.width + 2 * radius);
  for (int y = 0; y < out.height; ++y) {
    const int sy = reflect_index(y - radius, image.height);
    for (int x = 0; x < out.width; ++x) out(y, x) = image(sy, reflect_index(x - radius, image.width));
  }
  return out;
}

/// Removes `radius` pixels from every side; inverse of mirror_pad.
template <typename T>
Grid2D<T> crop_center(const Grid2D<T>& image, int radius) {
  if (radius < 0) throw std::invalid_argument("crop_center: negative radius");
  if (radius == 0) return image;
  if (image.height <= 2 * radius || image.width <= 2 * radius) {
    throw std::invalid_argument("crop_center: " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                                " is too small for radius " + std::to_string(radius));
  }
  Grid2D<T> out(image.height - 2 * radius, image.width - 2 * radius);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out(y, x) = image(y + radius, x + radius);
  return out;
}

struct Displacement {
  float dx = 0.0f;
  float dy = 0.0f;
  bool operator==(const Displacement&) const = default;
};

/// Sparse 12x12 displacement grid (pixels) whose outer ring is zero.
struct ElasticField {
  static constexpr int kGridSize = 12;
  std::array<Displacement, kGridSize * kGridSize> grid{};
  double amplitude = 0.0;

  Displacement& at(int gy, int gx) { return grid[static_cast<std::size_t>(gy * kGridSize + gx)]; }
  const Displacement& at(int gy, int gx) const { return grid[static_cast<std::size_t>(gy * kGridSize + gx)]; }
};

/// Interior vectors uniform in the disk of radius `amplitude`; boundary ring zero.
ElasticField sample_elastic_field(std::mt19937_64& rng, double amplitude);

/// Bilinear upsampling of the grid to a dense (dx, dy) field; node i sits at pixel i*(n-1)/11.
Grid2D<Displacement> upsample_field(const ElasticField& field, int height, int width);

/// Moves content along the field (output(p) = input(p - d(p))). The image is
/// sampled bilinearly, the label by nearest neighbour; coordinates clamp to the edge.
SamplePair elastic_warp(const SamplePair& pair, const ElasticField& field);

/// Adds N(0, sigma^2) per pixel and clamps to [0, 1].
Image add_gaussian_noise(const Image& image, double sigma, std::mt19937_64& rng);

using Predictor = std::function<Image(const Image&)>;

/// Mirror-pads, predicts every D4 orientation, maps each prediction back with the
/// inverse orientation, averages the 8 maps and crops the padding.
Image tta_predict(const Predictor& predictor, const Image& image, int pad_radius);

/// Eval-mode network as a single-image predictor (output channel 0).
Predictor make_predictor(const FusionNet<float>& net);

Image tta_predict(const FusionNet<float>& net, const Image& image, int pad_radius);

}  // namespace fusionnet

#include "fusionnet/augmentation.hpp"

#include <algorithm>
#include <cmath>

namespace fusionnet {
namespace {

// Signed 2x2 integer matrix acting on centred (u, v) = (x, y) coordinates.
struct Mat2 {
  int a, b, c, d;
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
  bool operator==(const Mat2&) const = default;
  int det() const { return a * d - b * c; }
};

constexpr Mat2 kIdentity{1, 0, 0, 1};
constexpr Mat2 kRotate{0, 1, -1, 0};   // counter-clockwise quarter turn: (u, v) -> (v, -u)
constexpr Mat2 kReflect{-1, 0, 0, 1};  // horizontal mirror: (u, v) -> (-u, v)

Mat2 rotation_power(int k) {
  Mat2 m = kIdentity;
  for (int i = 0; i < k; ++i) m = kRotate * m;
  return m;
}

Mat2 to_matrix(const Orientation& g) {
  return g.reflected ? rotation_power(g.quarter_turns) * kReflect : rotation_power(g.quarter_turns);
}

Orientation from_matrix(const Mat2& m) {
  const bool reflected = m.det() < 0;
  const Mat2 rotation = reflected ? m * kReflect : m;
  for (int k = 0; k < 4; ++k) {
    if (rotation_power(k) == rotation) return {k, reflected};
  }
  throw std::logic_error("matrix is not a D4 element");
}

float sample_bilinear(const Image& img, float y, float x) {
  y = std::clamp(y, 0.0f, static_cast<float>(img.height - 1));
  x = std::clamp(x, 0.0f, static_cast<float>(img.width - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const float fy = y - static_cast<float>(y0);
  const float fx = x - static_cast<float>(x0);
  if (fy == 0.0f && fx == 0.0f) return img(y0, x0);
  return (1.0f - fy) * ((1.0f - fx) * img(y0, x0) + fx * img(y0, x1)) +
         fy * ((1.0f - fx) * img(y1, x0) + fx * img(y1, x1));
}

float sample_nearest(const Image& img, float y, float x) {
  const int yi = std::clamp(static_cast<int>(std::lround(y)), 0, img.height - 1);
  const int xi = std::clamp(static_cast<int>(std::lround(x)), 0, img.width - 1);
  return img(yi, xi);
}

// Position of pixel `i` (of `n`) in grid coordinates, split into cell and fraction.
std::pair<int, float> grid_coordinate(int i, int n) {
  constexpr int last = ElasticField::kGridSize - 1;
  if (n <= 1) return {0, 0.0f};
  const double t = static_cast<double>(i) * last / static_cast<double>(n - 1);
  const int cell = std::min(static_cast<int>(std::floor(t)), last - 1);
  return {cell, static_cast<float>(t - cell)};
}

}  // namespace

const std::array<Orientation, 8>& Orientation::all() {
  static const std::array<Orientation, 8> elements{{{0, false},
                                                    {1, false},
                                                    {2, false},
                                                    {3, false},
                                                    {0, true},
                                                    {1, true},
                                                    {2, true},
                                                    {3, true}}};
  return elements;
}

std::string Orientation::to_string() const {
  return "rot" + std::to_string(90 * quarter_turns) + (reflected ? "+mirror" : "");
}

Orientation compose(const Orientation& a, const Orientation& b) { return from_matrix(to_matrix(a) * to_matrix(b)); }

Orientation inverse(const Orientation& g) {
  if (g.reflected) return g;  // every reflection in D4 is an involution
  return {(4 - g.quarter_turns) % 4, false};
}

std::vector<SamplePair> enrich(const std::vector<SamplePair>& dataset) {
  std::vector<SamplePair> out;
  out.reserve(dataset.size() * 8);
  for (const SamplePair& pair : dataset) {
    require_same_size(pair.image, pair.label, "enrich");
    for (const Orientation& g : Orientation::all()) out.push_back({d4_apply(pair.image, g), d4_apply(pair.label, g)});
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n <= 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

ElasticField sample_elastic_field(std::mt19937_64& rng, double amplitude) {
  if (!(amplitude >= 0.0)) throw std::invalid_argument("sample_elastic_field: amplitude must be >= 0");
  ElasticField field;
  field.amplitude = amplitude;
  if (amplitude == 0.0) return field;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  constexpr int n = ElasticField::kGridSize;
  for (int gy = 1; gy < n - 1; ++gy) {
    for (int gx = 1; gx < n - 1; ++gx) {
      double u = 0.0;
      double v = 0.0;
      do {
        u = unit(rng);
        v = unit(rng);
      } while (u * u + v * v > 1.0);
      field.at(gy, gx) = {static_cast<float>(u * amplitude), static_cast<float>(v * amplitude)};
    }
  }
  return field;
}

Grid2D<Displacement> upsample_field(const ElasticField& field, int height, int width) {
  Grid2D<Displacement> out(height, width);
  for (int y = 0; y < height; ++y) {
    const auto [gy, fy] = grid_coordinate(y, height);
    for (int x = 0; x < width; ++x) {
      const auto [gx, fx] = grid_coordinate(x, width);
      const Displacement& a = field.at(gy, gx);
      const Displacement& b = field.at(gy, gx + 1);
      const Displacement& c = field.at(gy + 1, gx);
      const Displacement& d = field.at(gy + 1, gx + 1);
      auto lerp = [&](float Displacement::*m) {
        return (1.0f - fy) * ((1.0f - fx) * a.*m + fx * b.*m) + fy * ((1.0f - fx) * c.*m + fx * d.*m);
      };
      out(y, x) = {lerp(&Displacement::dx), lerp(&Displacement::dy)};
    }
  }
  return out;
}

SamplePair elastic_warp(const SamplePair& pair, const ElasticField& field) {
  require_same_size(pair.image, pair.label, "elastic_warp");
  const int h = pair.image.height;
  const int w = pair.image.width;
  const Grid2D<Displacement> flow = upsample_field(field, h, w);
  SamplePair out{Image(h, w), Image(h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Displacement& d = flow(y, x);
      const float sy = static_cast<float>(y) - d.dy;
      const float sx = static_cast<float>(x) - d.dx;
      out.image(y, x) = sample_bilinear(pair.image, sy, sx);
      out.label(y, x) = sample_nearest(pair.label, sy, sx);
    }
  }
  return out;
}

Image add_gaussian_noise(const Image& image, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0) return image;
  std::normal_distribution<double> noise(0.0, sigma);
  Image out = image;
  for (float& v : out.values) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  return out;
}

Image tta_predict(const Predictor& predictor, const Image& image, int pad_radius) {
  if (image.height != image.width) {
    throw std::invalid_argument("tta_predict: needs a square image, got " + std::to_string(image.height) + "x" +
                                std::to_string(image.width));
  }
  const Image padded = mirror_pad(image, pad_radius);
  Grid2D<double> sum(padded.height, padded.width, 0.0);
  for (const Orientation& g : Orientation::all()) {
    const Image back = d4_apply(predictor(d4_apply(padded, g)), inverse(g));
    require_same_size(padded, back, "tta_predict");
    for (std::size_t i = 0; i < sum.size(); ++i) sum.values[i] += back.values[i];
  }
  Image mean(padded.height, padded.width);
  for (std::size_t i = 0; i < sum.size(); ++i) mean.values[i] = static_cast<float>(sum.values[i] / 8.0);
  return crop_center(mean, pad_radius);
}

Predictor make_predictor(const FusionNet<float>& net) {
  return [&net](const Image& image) { return to_image(net.predict(to_tensor<float>(image))); };
}

Image tta_predict(const FusionNet<float>& net, const Image& image, int pad_radius) {
  return tta_predict(make_predictor(net), image, pad_radius);
}

}  // namespace fusionnet

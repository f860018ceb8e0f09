#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "fusionnet/augmentation.hpp"

using namespace fusionnet;

namespace {

Image numbered(int h, int w) {
  Image img(h, w);
  for (std::size_t i = 0; i < img.size(); ++i) img.values[i] = static_cast<float>(i + 1);
  return img;
}

Image random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(h, w);
  for (auto& v : img.values) v = u(rng);
  return img;
}

double max_abs(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.values[i]) - b.values[i]));
  return m;
}

// Independent matrix form of a group element acting on centred coordinates.
struct Mat {
  int a, b, c, d;
  bool operator==(const Mat&) const = default;
};
Mat mul(Mat p, Mat q) { return {p.a * q.a + p.b * q.c, p.a * q.b + p.b * q.d, p.c * q.a + p.d * q.c, p.c * q.b + p.d * q.d}; }
Mat matrix(const Orientation& g) {
  Mat m{1, 0, 0, 1};
  if (g.reflected) m = {-1, 0, 0, 1};
  const Mat rot{0, -1, 1, 0};
  for (int i = 0; i < g.quarter_turns; ++i) m = mul(rot, m);
  return m;
}

}  // namespace

TEST_SUITE("d4") {
  TEST_CASE("identity and four quarter turns") {
    const Image x = random_image(5, 5, 1);
    CHECK(d4_apply(x, Orientation::identity()) == x);
    Image y = x;
    for (int i = 0; i < 4; ++i) y = rotate_ccw(y);
    CHECK(y == x);
  }

  TEST_CASE("rotation is counter-clockwise") {
    const Image x(2, 3, std::vector<float>{1, 2, 3, 4, 5, 6});
    // 1 2 3        3 6
    // 4 5 6   ->   2 5
    //              1 4
    CHECK(rotate_ccw(x) == Image(3, 2, std::vector<float>{3, 6, 2, 5, 1, 4}));
    CHECK(flip_horizontal(x) == Image(2, 3, std::vector<float>{3, 2, 1, 6, 5, 4}));
  }

  TEST_CASE("every element undoes its inverse") {
    const Image x = random_image(5, 5, 2);
    for (const auto& g : Orientation::all()) {
      CHECK(d4_apply(d4_apply(x, g), inverse(g)) == x);
      CHECK(d4_apply(d4_apply(x, inverse(g)), g) == x);
    }
  }

  TEST_CASE("composition agrees with applying in sequence and with matrices") {
    const Image x = random_image(6, 6, 3);
    for (const auto& a : Orientation::all())
      for (const auto& b : Orientation::all()) {
        CHECK(d4_apply(x, compose(a, b)) == d4_apply(d4_apply(x, b), a));
        CHECK(matrix(compose(a, b)) == mul(matrix(a), matrix(b)));
      }
  }

  TEST_CASE("the eight elements are distinct") {
    std::set<std::pair<int, bool>> seen;
    for (const auto& g : Orientation::all()) seen.insert({g.quarter_turns, g.reflected});
    CHECK(seen.size() == 8);
  }

  TEST_CASE("odd turns need a square image") {
    CHECK_THROWS_AS(d4_apply(Image(2, 3), Orientation{1, false}), std::invalid_argument);
    CHECK_NOTHROW(d4_apply(Image(2, 3), Orientation{2, true}));
  }
}

TEST_SUITE("enrich") {
  TEST_CASE("multiplies by eight with shared orientation") {
    std::vector<SamplePair> data;
    for (int i = 0; i < 30; ++i) data.push_back({random_image(4, 4, 10 + i), random_image(4, 4, 100 + i)});
    const auto out = enrich(data);
    REQUIRE(out.size() == 240);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& g = Orientation::all()[i % 8];
      const auto& src = data[i / 8];
      CHECK(out[i].image == d4_apply(src.image, g));
      CHECK(out[i].label == d4_apply(src.label, g));
    }
    CHECK(enrich({}).empty());
  }

  TEST_CASE("asymmetric image gives eight distinct variants, constant gives one") {
    const auto a = enrich({{numbered(3, 3), numbered(3, 3)}});
    std::set<std::vector<float>> distinct;
    for (const auto& s : a) distinct.insert(s.image.values);
    CHECK(distinct.size() == 8);
    const auto c = enrich({{Image(3, 3, 0.5f), Image(3, 3, 1.0f)}});
    for (const auto& s : c) CHECK(s.image == Image(3, 3, 0.5f));
  }
}

TEST_SUITE("padding") {
  TEST_CASE("published sizes") {
    const Image x(512, 512, 0.25f);
    const Image padded = mirror_pad(x, 64);
    CHECK(padded.height == 640);
    CHECK(padded.width == 640);
    const Image cropped = crop_center(padded, 64);
    CHECK(cropped.height == 512);
    CHECK(cropped == x);
  }

  TEST_CASE("reflection indices on a labelled grid") {
    const Image x = numbered(6, 6);
    const int r = 2;
    const Image p = mirror_pad(x, r);
    auto source = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
    for (int y = 0; y < p.height; ++y)
      for (int xx = 0; xx < p.width; ++xx) {
        // distance d outside the border maps to distance d inside (edge not repeated)
        CHECK(p(y, xx) == x(source(y - r, 6), source(xx - r, 6)));
      }
    CHECK(p(0, 2) == x(2, 0));
    CHECK(p(2, 0) == x(0, 2));
  }

  TEST_CASE("crop undoes pad and zero radius is the identity") {
    for (int r : {1, 5, 64}) {
      const Image x = random_image(80, 72, static_cast<std::uint64_t>(r));
      CHECK(crop_center(mirror_pad(x, r), r) == x);
    }
    const Image x = random_image(7, 9, 4);
    CHECK(mirror_pad(x, 0) == x);
    CHECK(crop_center(x, 0) == x);
  }

  TEST_CASE("invalid radii") {
    CHECK_THROWS_AS(mirror_pad(Image(4, 6), 4), std::invalid_argument);
    CHECK_THROWS_AS(mirror_pad(Image(4, 6), -1), std::invalid_argument);
    CHECK_THROWS_AS(crop_center(Image(4, 6), 2), std::invalid_argument);
  }

  TEST_CASE("reflect_index is periodic without edge repeats") {
    CHECK(reflect_index(-1, 5) == 1);
    CHECK(reflect_index(5, 5) == 3);
    CHECK(reflect_index(-9, 5) == 1);
    CHECK(reflect_index(13, 5) == 3);
    CHECK(reflect_index(7, 1) == 0);
  }
}

TEST_SUITE("elastic") {
  TEST_CASE("zero amplitude gives a zero field") {
    std::mt19937_64 rng(1);
    const auto f = sample_elastic_field(rng, 0.0);
    for (const auto& d : f.grid) CHECK(d == Displacement{});
  }

  TEST_CASE("boundary ring is zero and vectors stay within the amplitude") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      std::mt19937_64 rng(seed);
      const auto f = sample_elastic_field(rng, 10.0);
      for (int i = 0; i < ElasticField::kGridSize; ++i) {
        const int last = ElasticField::kGridSize - 1;
        REQUIRE(f.at(0, i) == Displacement{});
        REQUIRE(f.at(last, i) == Displacement{});
        REQUIRE(f.at(i, 0) == Displacement{});
        REQUIRE(f.at(i, last) == Displacement{});
      }
      for (const auto& d : f.grid) REQUIRE(std::hypot(d.dx, d.dy) <= 10.0 + 1e-5);
    }
  }

  TEST_CASE("same seed gives the same field") {
    std::mt19937_64 a(5), b(5);
    CHECK(sample_elastic_field(a, 7.0).grid == sample_elastic_field(b, 7.0).grid);
  }

  TEST_CASE("upsampling hits the grid nodes") {
    ElasticField f;
    f.at(5, 6) = {3.0f, -2.0f};
    const auto dense = upsample_field(f, 111, 111);  // node i sits at pixel 10 i
    CHECK(dense(50, 60) == Displacement{3.0f, -2.0f});
    CHECK(dense(55, 60).dx == doctest::Approx(1.5));
    CHECK(dense(0, 0) == Displacement{});
  }

  TEST_CASE("zero field is the identity warp") {
    const SamplePair s{random_image(40, 40, 7), Image(40, 40)};
    SamplePair labelled = s;
    for (std::size_t i = 0; i < labelled.label.size(); ++i) labelled.label.values[i] = (i % 7 == 0) ? 1.0f : 0.0f;
    const auto out = elastic_warp(labelled, ElasticField{});
    CHECK(out.label == labelled.label);
    CHECK(max_abs(out.image, labelled.image) <= 1e-6);
  }

  TEST_CASE("constant image is unchanged by any field") {
    std::mt19937_64 rng(8);
    const SamplePair s{Image(32, 32, 0.4f), Image(32, 32, 1.0f)};
    const auto out = elastic_warp(s, sample_elastic_field(rng, 10.0));
    CHECK(max_abs(out.image, s.image) <= 1e-6);
    CHECK(out.label == s.label);
  }

  TEST_CASE("a bright pixel follows a uniform interior shift") {
    ElasticField f;
    for (int gy = 1; gy < 11; ++gy)
      for (int gx = 1; gx < 11; ++gx) f.at(gy, gx) = {2.0f, 0.0f};
    const int n = 111;
    SamplePair s{Image(n, n), Image(n, n)};
    s.image(55, 50) = 1.0f;
    s.label(55, 50) = 1.0f;
    const auto out = elastic_warp(s, f);
    double mass = 0, cx = 0, cy = 0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        mass += out.image(y, x);
        cx += x * out.image(y, x);
        cy += y * out.image(y, x);
      }
    REQUIRE(mass > 0);
    CHECK(std::abs(cx / mass - 52.0) < 0.5);
    CHECK(std::abs(cy / mass - 55.0) < 0.5);
    CHECK(out.label(55, 52) == 1.0f);
  }

  TEST_CASE("labels stay binary") {
    std::mt19937_64 rng(11);
    SamplePair s{random_image(48, 48, 3), Image(48, 48)};
    for (int y = 10; y < 20; ++y)
      for (int x = 0; x < 48; ++x) s.label(y, x) = 1.0f;
    const auto out = elastic_warp(s, sample_elastic_field(rng, 10.0));
    for (float v : out.label.values) CHECK((v == 0.0f || v == 1.0f));
  }
}

TEST_SUITE("noise") {
  TEST_CASE("sigma zero is the identity") {
    std::mt19937_64 rng(1);
    const Image x = random_image(16, 16, 1);
    CHECK(add_gaussian_noise(x, 0.0, rng) == x);
  }

  TEST_CASE("standard deviation on mid-gray and clamping") {
    std::mt19937_64 rng(2);
    const Image x(256, 256, 0.5f);
    const Image y = add_gaussian_noise(x, 0.1, rng);
    double mean = 0, sq = 0;
    for (std::size_t i = 0; i < y.size(); ++i) mean += y.values[i] - 0.5;
    mean /= static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) sq += std::pow(y.values[i] - 0.5 - mean, 2);
    CHECK(std::abs(std::sqrt(sq / static_cast<double>(y.size())) - 0.1) < 0.005);

    const Image edge = add_gaussian_noise(random_image(64, 64, 9), 0.5, rng);
    for (float v : edge.values) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_SUITE("tta") {
  TEST_CASE("constant predictor stays constant") {
    const Predictor half = [](const Image& in) { return Image(in.height, in.width, 0.5f); };
    const Image out = tta_predict(half, random_image(16, 16, 1), 4);
    CHECK(out.height == 16);
    for (float v : out.values) CHECK(v == 0.5f);
  }

  TEST_CASE("pointwise predictor is unchanged by symmetrisation") {
    const Predictor square = [](const Image& in) {
      Image out = in;
      for (auto& v : out.values) v = v * v;
      return out;
    };
    const Image x = random_image(12, 12, 2);
    CHECK(max_abs(tta_predict(square, x, 3), square(x)) <= 1e-6);
  }

  TEST_CASE("symmetrised predictor is equivariant") {
    // A deliberately orientation-dependent predictor: shifted differences.
    const Predictor skewed = [](const Image& in) {
      Image out(in.height, in.width);
      for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
          const float right = in(y, std::min(x + 1, in.width - 1));
          const float below = in(std::min(y + 1, in.height - 1), x);
          out(y, x) = 0.5f * in(y, x) + 0.3f * right + 0.2f * below * below;
        }
      return out;
    };
    const Image x = random_image(10, 10, 3);
    const Image base = tta_predict(skewed, x, 2);
    CHECK(max_abs(base, skewed(x)) > 1e-3);
    for (const auto& g : Orientation::all()) CHECK(max_abs(tta_predict(skewed, d4_apply(x, g), 2), d4_apply(base, g)) <= 1e-6);
  }
}

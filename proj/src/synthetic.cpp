#include "fusionnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "fusionnet/random.hpp"

namespace fusionnet {

SamplePair synthetic_cells(const SyntheticOptions& o, std::uint64_t seed) {
  if (o.size < 1 || o.cells < 2) throw std::invalid_argument("synthetic_cells: need size >= 1 and cells >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0.0, o.size);
  std::uniform_real_distribution<double> shade(0.65, 0.95);
  std::normal_distribution<double> texture(0.0, o.noise);

  struct Seed {
    double y, x, shade;
  };
  std::vector<Seed> seeds(static_cast<std::size_t>(o.cells));
  for (auto& s : seeds) s = {pos(rng), pos(rng), shade(rng)};

  SamplePair out{Image(o.size, o.size), Image(o.size, o.size)};
  for (int y = 0; y < o.size; ++y) {
    for (int x = 0; x < o.size; ++x) {
      double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
      std::size_t nearest = 0;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const double d = std::hypot(y + 0.5 - seeds[i].y, x + 0.5 - seeds[i].x);
        if (d < d1) {
          d2 = d1;
          d1 = d;
          nearest = i;
        } else if (d < d2) {
          d2 = d;
        }
      }
      // d2 - d1 is twice the distance to the bisector between the two nearest seeds.
      const bool membrane = d2 - d1 < o.membrane_width;
      const double base = membrane ? 0.15 : seeds[nearest].shade;
      out.image(y, x) = static_cast<float>(std::clamp(base + texture(rng), 0.0, 1.0));
      out.label(y, x) = membrane ? 1.0f : 0.0f;
    }
  }
  return out;
}

std::vector<SamplePair> synthetic_corpus(int count, const SyntheticOptions& options, std::uint64_t seed) {
  std::vector<SamplePair> out;
  for (int i = 0; i < count; ++i) out.push_back(synthetic_cells(options, derive_seed(seed, {static_cast<std::uint64_t>(i)})));
  return out;
}

}  // namespace fusionnet

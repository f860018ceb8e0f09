#pragma once

#include <cstdint>
#include <vector>

#include "fusionnet/image.hpp"

namespace fusionnet {

struct SyntheticOptions {
  int size = 64;
  int cells = 6;
  double membrane_width = 4.0;  // pixels
  double noise = 0.03;          // std of per-pixel texture
};

/// Voronoi "tissue": the label marks pixels whose two nearest seeds are within
/// `membrane_width` in distance (1 = membrane); the image is dark on membranes,
/// bright inside cells, with per-cell shading and texture.
SamplePair synthetic_cells(const SyntheticOptions& options, std::uint64_t seed);

std::vector<SamplePair> synthetic_corpus(int count, const SyntheticOptions& options, std::uint64_t seed);

}  // namespace fusionnet

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

/// Row-major 2D array.
template <typename T>
struct Grid2D {
  using value_type = T;

  int height = 0;
  int width = 0;
  std::vector<T> values;

  Grid2D() = default;
  Grid2D(int h, int w, T fill = T{}) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("negative grid size");
  }
  Grid2D(int h, int w, std::vector<T> v) : height(h), width(w), values(std::move(v)) {
    if (h < 0 || w < 0 || values.size() != static_cast<std::size_t>(h) * w) {
      throw std::invalid_argument("grid data length does not match " + std::to_string(h) + "x" + std::to_string(w));
    }
  }

  T& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
  bool same_size(const Grid2D& other) const { return height == other.height && width == other.width; }
  bool operator==(const Grid2D&) const = default;
};

using Image = Grid2D<float>;          // intensities or probabilities in [0, 1]
using Mask = Grid2D<std::uint8_t>;    // binary {0, 1}
using Labeling = Grid2D<std::int32_t>;  // 0 = background/boundary, k >= 1 = component id

/// An EM image with its binary label (1 = membrane/boundary).
struct SamplePair {
  Image image;
  Image label;
};

template <typename A, typename B>
void require_same_size(const Grid2D<A>& a, const Grid2D<B>& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(op) + ": size mismatch " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width));
  }
}

/// Stacks equally sized single-channel images into an (N, 1, H, W) tensor.
template <typename T>
Tensor<T> stack_images(const std::vector<const Image*>& images);

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  return stack_images<T>({&image});
}

/// Extracts channel `c` of batch item `n`.
template <typename T>
Image to_image(const Tensor<T>& tensor, std::int64_t n = 0, std::int64_t c = 0);

}  // namespace fusionnet

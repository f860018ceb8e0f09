#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusionnet/image.hpp"

namespace fusionnet {

/// Reads a grayscale binary PGM (P5, 8 or 16 bit) or an 8/16-bit grayscale PNG,
/// scaled to [0, 1]. Colour images are rejected.
Image read_image(const std::filesystem::path& path);

/// Writes [0, 1] values as binary PGM; `bits` is 8 or 16.
void write_pgm(const std::filesystem::path& path, const Image& image, int bits = 8);
/// Writes [0, 1] values as 8-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const Image& image);
/// Chooses PGM or PNG by extension.
void write_image(const std::filesystem::path& path, const Image& image);

/// Plain-text list of sections:
///
///     # comment
///     dims <height> <width>           (optional, validated on load)
///     pixel_size <x> <y> <z>          (optional, nanometres)
///     sample <image> [<label>]
///
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  struct Entry {
    std::filesystem::path image;
    std::optional<std::filesystem::path> label;
  };
  std::vector<Entry> entries;
  std::optional<std::pair<int, int>> dims;
  std::optional<std::array<double, 3>> pixel_size;

  static DatasetManifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

/// Images normalised to [0, 1], labels binarised at 0.5. Every entry must carry a
/// label and match the declared dimensions.
std::vector<SamplePair> load_dataset(const DatasetManifest& manifest);

/// Images only (labels ignored).
std::vector<Image> load_images(const DatasetManifest& manifest);

}  // namespace fusionnet

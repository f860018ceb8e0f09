#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fusionnet/architecture.hpp"
#include "fusionnet/metrics.hpp"
#include "fusionnet/optim.hpp"

namespace fusionnet {

struct AugmentationConfig {
  bool enrich = true;             // 8 dihedral orientations, once up front
  int pad_radius = 64;            // mirror padding on every side
  double noise_sigma = 0.1;       // standard deviation on [0, 1] intensities
  double elastic_amplitude = 10;  // maximum grid displacement in pixels
};

struct TrainConfig {
  NetworkSpec network;
  AdamConfig optimizer;
  int epochs = 1;
  int batch_size = 1;
  std::int64_t max_steps = 0;  // 0 = no limit beyond `epochs`
  std::uint64_t seed = 0;
  int folds = 3;
  int checkpoint_every = 0;  // epochs; 0 = only at the end
  AugmentationConfig augmentation;
  EvalConfig evaluation;
  bool tta = true;

  void validate() const;
};

/// Sectioned key = value text:
///
///     [network]       levels, base_features, input_height, input_width, input_channels,
///                     output_channels, kernel_size, block_order, bn_momentum, bn_epsilon
///     [optimizer]     learning_rate, beta1, beta2, epsilon
///     [training]      epochs, batch_size, max_steps, seed, folds, checkpoint_every
///     [augmentation]  enrich, pad_radius, noise_sigma, elastic_amplitude
///     [evaluation]    threshold, median_radius, border_thinning
///     [predict]       tta
///
/// Omitted keys keep their defaults; unknown sections or keys are errors.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& config);

/// FUSIONNET_SEED, when set, replaces the configured seed.
void apply_environment(TrainConfig& config);

}  // namespace fusionnet

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusionnet/architecture.hpp"
#include "fusionnet/optim.hpp"

namespace fusionnet {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// Where a training run stands; enough to continue it exactly.
struct TrainProgress {
  std::int64_t epoch = 0;
  std::int64_t step_in_epoch = 0;
  std::int64_t global_step = 0;
  std::string shuffle_rng;                // serialised std::mt19937_64
  std::vector<std::int64_t> epoch_order;  // sample order of the current epoch
  bool operator==(const TrainProgress&) const = default;
};

/// On disk:
///
///     "FNET" | u32 version | u64 header bytes | JSON header | float32 payloads
///
/// All integers and payloads are little-endian. The header lists every tensor
/// (name, kind, shape) in payload order: parameters, batch-norm running
/// statistics, then Adam moments.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  NetworkSpec spec;
  int pad_radius = 0;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> running_stats;  // "<bn>.running_mean", "<bn>.running_var"
  AdamState<float> optimizer;
  TrainProgress progress;

  static Checkpoint capture(const FusionNet<float>& net, const AdamState<float>& optimizer, int pad_radius,
                            const TrainProgress& progress = {});
  /// Rebuilds the network with the stored parameters and running statistics.
  FusionNet<float> network() const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& checkpoint);
/// `origin` names the source in error messages.
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin = "checkpoint");

}  // namespace fusionnet

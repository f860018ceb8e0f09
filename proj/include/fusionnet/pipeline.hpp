#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "fusionnet/checkpoint.hpp"
#include "fusionnet/config.hpp"
#include "fusionnet/image.hpp"
#include "fusionnet/metrics.hpp"

namespace fusionnet {

/// One training run, advanced a minibatch at a time.
///
/// Per epoch the sample order is reshuffled; each sample then gets its own
/// random stream derived from (seed, epoch, sample index) for the elastic warp
/// and the noise, so a run is reproducible from any step.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const std::vector<SamplePair>& dataset);
  /// Continues from `resume`, which must come from the same config and dataset.
  Trainer(const TrainConfig& config, const std::vector<SamplePair>& dataset, const Checkpoint& resume);

  /// Runs one minibatch and returns its loss. A non-finite loss leaves the
  /// parameters untouched.
  double step();
  bool finished() const;

  std::int64_t steps_per_epoch() const;
  std::int64_t total_steps() const;
  const TrainProgress& progress() const { return progress_; }
  Checkpoint checkpoint() const;
  const FusionNet<float>& network() const { return net_; }

  /// The augmented, padded minibatch that step() would train on next.
  SamplePair prepare_sample(std::int64_t epoch, std::size_t index) const;

 private:
  void check_sizes() const;

  TrainConfig config_;
  std::vector<SamplePair> dataset_;  // enriched when configured
  FusionNet<float> net_;
  AdamState<float> adam_;
  TrainProgress progress_;
  std::mt19937_64 shuffle_;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // one per step taken in this call
  bool diverged = false;
};

struct TrainCallbacks {
  std::function<void(std::int64_t step, double loss)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

/// Trains until `config.epochs` (and `max_steps`, when set) are exhausted. On the
/// first non-finite loss, stops and returns the last checkpoint taken at the
/// configured cadence (or the initial state).
TrainResult train(const TrainConfig& config, const std::vector<SamplePair>& dataset,
                  const std::optional<Checkpoint>& resume = std::nullopt, const TrainCallbacks& callbacks = {});

/// Seeded shuffle, then contiguous blocks; the first n % folds blocks get one extra sample.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t samples, int folds, std::uint64_t seed);

struct FoldReport {
  int fold = 0;
  std::vector<std::size_t> validation;
  ScoreReport mean;                 // averaged over the validation images
  std::vector<ScoreReport> images;  // one per validation image
  bool diverged = false;
};

/// Trains on k - 1 folds, scores the held-out fold. k = 1 returns no reports.
std::vector<FoldReport> cross_validate(const TrainConfig& config, const std::vector<SamplePair>& dataset);

/// Boundary probability maps, same size as the inputs. Requires
/// (H + 2 * pad_radius) and (W + 2 * pad_radius) divisible by 2^levels.
std::vector<Image> predict(const Checkpoint& checkpoint, const std::vector<Image>& images, bool tta);
Image predict(const FusionNet<float>& net, const Image& image, int pad_radius, bool tta);

ScoreReport mean_report(const std::vector<ScoreReport>& reports);

}  // namespace fusionnet

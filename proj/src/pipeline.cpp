#include "fusionnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fusionnet/augmentation.hpp"
#include "fusionnet/random.hpp"

namespace fusionnet {

namespace {

constexpr std::uint64_t kFoldStream = 0xF01D;
constexpr std::uint64_t kShuffleStream = 0x5AFF;

std::string serialize_rng(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 restore_rng(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: unreadable shuffle generator state");
  return rng;
}

std::string size_text(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace

Trainer::Trainer(const TrainConfig& config, const std::vector<SamplePair>& dataset)
    : config_(config),
      dataset_(config.augmentation.enrich ? enrich(dataset) : dataset),
      net_(FusionNet<float>::build(config.network, config.seed)),
      shuffle_(derive_seed(config.seed, {kShuffleStream})) {
  config_.validate();
  adam_.config = config_.optimizer;
  check_sizes();
}

Trainer::Trainer(const TrainConfig& config, const std::vector<SamplePair>& dataset, const Checkpoint& resume)
    : Trainer(config, dataset) {
  if (!(resume.spec == config_.network)) throw std::invalid_argument("resume: checkpoint network differs from the config");
  if (resume.pad_radius != config_.augmentation.pad_radius) {
    throw std::invalid_argument("resume: checkpoint pad radius differs from the config");
  }
  net_ = resume.network();
  adam_ = resume.optimizer;
  adam_.config = config_.optimizer;
  progress_ = resume.progress;
  shuffle_ = restore_rng(progress_.shuffle_rng);
  if (progress_.step_in_epoch > 0 && progress_.epoch_order.size() != dataset_.size()) {
    throw std::invalid_argument("resume: checkpoint sample order covers " + std::to_string(progress_.epoch_order.size()) +
                                " samples, the dataset has " + std::to_string(dataset_.size()));
  }
}

void Trainer::check_sizes() const {
  if (dataset_.empty()) throw std::invalid_argument("train: dataset is empty");
  const Image& first = dataset_.front().image;
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    const SamplePair& s = dataset_[i];
    require_same_size(s.image, s.label, "train sample");
    if (!s.image.same_size(first)) {
      throw std::invalid_argument("train: sample " + std::to_string(i) + " is " + size_text(s.image.height, s.image.width) +
                                  ", expected " + size_text(first.height, first.width));
    }
  }
  if (first.height != first.width) {
    throw std::invalid_argument("train: images must be square, got " + size_text(first.height, first.width));
  }
  const int pad = config_.augmentation.pad_radius;
  const int h = first.height + 2 * pad;
  const int w = first.width + 2 * pad;
  if (h != config_.network.input_height || w != config_.network.input_width) {
    throw std::invalid_argument("train: padded samples are " + size_text(h, w) + " (" + size_text(first.height, first.width) +
                                " + 2*" + std::to_string(pad) + "), the network expects " +
                                size_text(config_.network.input_height, config_.network.input_width));
  }
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(dataset_.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

std::int64_t Trainer::total_steps() const {
  const std::int64_t full = steps_per_epoch() * config_.epochs;
  return config_.max_steps > 0 ? std::min(full, config_.max_steps) : full;
}

bool Trainer::finished() const { return progress_.global_step >= total_steps(); }

SamplePair Trainer::prepare_sample(std::int64_t epoch, std::size_t index) const {
  const AugmentationConfig& aug = config_.augmentation;
  std::mt19937_64 rng(derive_seed(config_.seed, {static_cast<std::uint64_t>(epoch), index}));
  SamplePair s = dataset_.at(index);
  if (aug.elastic_amplitude > 0.0) s = elastic_warp(s, sample_elastic_field(rng, aug.elastic_amplitude));
  if (aug.noise_sigma > 0.0) s.image = add_gaussian_noise(s.image, aug.noise_sigma, rng);
  if (aug.pad_radius > 0) {
    s.image = mirror_pad(s.image, aug.pad_radius);
    s.label = mirror_pad(s.label, aug.pad_radius);
  }
  return s;
}

double Trainer::step() {
  if (finished()) throw std::logic_error("train: no steps left");
  if (progress_.step_in_epoch == 0) {
    progress_.epoch_order.resize(dataset_.size());
    std::iota(progress_.epoch_order.begin(), progress_.epoch_order.end(), 0);
    std::shuffle(progress_.epoch_order.begin(), progress_.epoch_order.end(), shuffle_);
  }
  const auto n = static_cast<std::int64_t>(dataset_.size());
  const std::int64_t begin = progress_.step_in_epoch * config_.batch_size;
  const std::int64_t end = std::min(n, begin + config_.batch_size);

  std::vector<SamplePair> batch;
  for (std::int64_t i = begin; i < end; ++i) {
    batch.push_back(prepare_sample(progress_.epoch, static_cast<std::size_t>(progress_.epoch_order[i])));
  }
  std::vector<const Image*> images, labels;
  for (const auto& s : batch) {
    images.push_back(&s.image);
    labels.push_back(&s.label);
  }

  // Keep the running statistics so a diverged step can be undone entirely.
  const auto stats_before = net_.batch_norm_stats();
  Tape<float> tape;
  const Var<float> input = tape.leaf(stack_images<float>(images), false);
  const Var<float> output = net_.forward(input, {Mode::train});
  const Var<float> loss = mse_loss(output, constant(stack_images<float>(labels)));
  const double value = loss.value()[0];
  if (std::isfinite(value)) {
    tape.backward(loss);
    adam_step(net_.parameters(), adam_);
  } else {
    net_.batch_norm_stats() = stats_before;
    net_.zero_grad();
  }

  ++progress_.global_step;
  if (++progress_.step_in_epoch == steps_per_epoch()) {
    progress_.step_in_epoch = 0;
    ++progress_.epoch;
  }
  return value;
}

Checkpoint Trainer::checkpoint() const {
  TrainProgress p = progress_;
  p.shuffle_rng = serialize_rng(shuffle_);
  return Checkpoint::capture(net_, adam_, config_.augmentation.pad_radius, p);
}

TrainResult train(const TrainConfig& config, const std::vector<SamplePair>& dataset,
                  const std::optional<Checkpoint>& resume, const TrainCallbacks& callbacks) {
  Trainer trainer = resume ? Trainer(config, dataset, *resume) : Trainer(config, dataset);
  TrainResult result;
  Checkpoint last_good = trainer.checkpoint();
  while (!trainer.finished()) {
    const double loss = trainer.step();
    result.losses.push_back(loss);
    if (callbacks.on_step) callbacks.on_step(trainer.progress().global_step, loss);
    if (!std::isfinite(loss)) {
      result.diverged = true;
      result.checkpoint = std::move(last_good);
      return result;
    }
    const bool epoch_done = trainer.progress().step_in_epoch == 0;
    if (config.checkpoint_every > 0 && epoch_done && trainer.progress().epoch % config.checkpoint_every == 0) {
      last_good = trainer.checkpoint();
      if (callbacks.on_checkpoint) callbacks.on_checkpoint(last_good);
    }
  }
  result.checkpoint = trainer.checkpoint();
  return result;
}

std::vector<std::vector<std::size_t>> fold_partition(std::size_t samples, int folds, std::uint64_t seed) {
  if (folds < 1) throw std::invalid_argument("cross validation: folds must be >= 1");
  if (static_cast<std::size_t>(folds) > samples) {
    throw std::invalid_argument("cross validation: " + std::to_string(folds) + " folds but only " +
                                std::to_string(samples) + " samples");
  }
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {kFoldStream}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  const std::size_t k = static_cast<std::size_t>(folds);
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = samples / k + (f < samples % k ? 1 : 0);
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(at), order.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
  }
  return out;
}

ScoreReport mean_report(const std::vector<ScoreReport>& reports) {
  ScoreReport m;
  if (reports.empty()) return m;
  m.v_rand = m.v_info = m.v_dice = 0.0;
  for (const auto& r : reports) {
    m.v_rand += r.v_rand;
    m.v_info += r.v_info;
    m.v_dice += r.v_dice;
    m.evaluated_pixels += r.evaluated_pixels;
    m.total_pixels += r.total_pixels;
  }
  const auto n = static_cast<double>(reports.size());
  m.v_rand /= n;
  m.v_info /= n;
  m.v_dice /= n;
  return m;
}

std::vector<FoldReport> cross_validate(const TrainConfig& config, const std::vector<SamplePair>& dataset) {
  const auto folds = fold_partition(dataset.size(), config.folds, config.seed);
  std::vector<FoldReport> reports;
  if (config.folds == 1) return reports;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<SamplePair> training;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g == f) continue;
      for (std::size_t i : folds[g]) training.push_back(dataset[i]);
    }
    const TrainResult trained = train(config, training);
    const FusionNet<float> net = trained.checkpoint.network();
    FoldReport report;
    report.fold = static_cast<int>(f);
    report.validation = folds[f];
    report.diverged = trained.diverged;
    for (std::size_t i : folds[f]) {
      const Image prob = predict(net, dataset[i].image, config.augmentation.pad_radius, config.tta);
      report.images.push_back(evaluate(prob, labels_from_boundary(dataset[i].label), config.evaluation));
    }
    report.mean = mean_report(report.images);
    reports.push_back(std::move(report));
  }
  return reports;
}

Image predict(const FusionNet<float>& net, const Image& image, int pad_radius, bool tta) {
  const std::int64_t m = net.spec().size_multiple();
  const std::int64_t h = image.height + 2 * static_cast<std::int64_t>(pad_radius);
  const std::int64_t w = image.width + 2 * static_cast<std::int64_t>(pad_radius);
  if (h % m != 0 || w % m != 0) {
    throw std::invalid_argument("predict: " + size_text(image.height, image.width) + " padded by " +
                                std::to_string(pad_radius) + " gives " + std::to_string(h) + "x" + std::to_string(w) +
                                "; both sides must be divisible by 2^" + std::to_string(net.spec().levels) + " = " +
                                std::to_string(m));
  }
  if (tta) return tta_predict(net, image, pad_radius);
  const Image padded = mirror_pad(image, pad_radius);
  return crop_center(to_image(net.predict(to_tensor<float>(padded))), pad_radius);
}

std::vector<Image> predict(const Checkpoint& checkpoint, const std::vector<Image>& images, bool tta) {
  const FusionNet<float> net = checkpoint.network();
  std::vector<Image> out;
  out.reserve(images.size());
  for (const Image& img : images) out.push_back(predict(net, img, checkpoint.pad_radius, tta));
  return out;
}

}  // namespace fusionnet

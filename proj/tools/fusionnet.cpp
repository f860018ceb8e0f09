// fusionnet command-line tool: train, predict, evaluate, augment, gradcheck, synth.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fusionnet/augmentation.hpp"
#include "fusionnet/gradcheck.hpp"
#include "fusionnet/io.hpp"
#include "fusionnet/pipeline.hpp"
#include "fusionnet/random.hpp"
#include "fusionnet/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fusionnet;

namespace {

std::string slice_name(const std::string& prefix, std::size_t i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04zu", i);
  return prefix + buf + ext;
}

void print_report(std::ostream& os, const std::string& what, const ScoreReport& r) {
  os << what << " v_rand=" << r.v_rand << " v_info=" << r.v_info << " v_dice=" << r.v_dice
     << " evaluated_pixels=" << r.evaluated_pixels << " total_pixels=" << r.total_pixels << "\n";
}

nlohmann::json report_json(const ScoreReport& r) {
  return {{"v_rand", r.v_rand},
          {"v_info", r.v_info},
          {"v_dice", r.v_dice},
          {"evaluated_pixels", r.evaluated_pixels},
          {"total_pixels", r.total_pixels}};
}

bool looks_like_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char head[4] = {};
  in.read(head, 4);
  return (head[0] == 'P' && head[1] >= '1' && head[1] <= '6') || (head[1] == 'P' && head[2] == 'N' && head[3] == 'G');
}

int run_train(const std::string& config_path, const std::string& data, const std::string& out,
              const std::string& resume_path, bool quiet) {
  TrainConfig config = load_config(config_path);
  apply_environment(config);
  const auto dataset = load_dataset(DatasetManifest::read(data));
  std::cout << "dataset " << dataset.size() << " samples, seed " << config.seed << "\n";

  if (config.folds > 1) {
    for (const FoldReport& f : cross_validate(config, dataset)) {
      print_report(std::cout, "fold " + std::to_string(f.fold) + (f.diverged ? " (diverged)" : ""), f.mean);
    }
  }

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);
  TrainCallbacks callbacks;
  if (!quiet) callbacks.on_step = [](std::int64_t step, double loss) { std::cout << "step " << step << " loss " << loss << "\n"; };
  callbacks.on_checkpoint = [&](const Checkpoint& c) {
    save_checkpoint(c, out);
    std::cout << "checkpoint epoch " << c.progress.epoch << " -> " << out << "\n";
  };
  const TrainResult result = train(config, dataset, resume, callbacks);
  save_checkpoint(result.checkpoint, out);
  if (!result.losses.empty()) std::cout << "final loss " << result.losses.back() << "\n";
  if (result.diverged) {
    std::cerr << "training diverged at step " << result.losses.size() << "; kept checkpoint from step "
              << result.checkpoint.progress.global_step << "\n";
    return 3;
  }
  std::cout << "wrote " << out << " after " << result.checkpoint.progress.global_step << " steps\n";
  return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& in, const std::string& out, bool no_tta) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  std::vector<Image> images;
  if (looks_like_image(in)) images.push_back(read_image(in));
  else images = load_images(DatasetManifest::read(in));

  fs::create_directories(out);
  DatasetManifest listing;
  const FusionNet<float> net = ckpt.network();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const fs::path file = fs::path(out) / slice_name("pred", i, ".pgm");
    write_pgm(file, predict(net, images[i], ckpt.pad_radius, !no_tta), 16);
    listing.entries.push_back({file, std::nullopt});
    std::cout << "wrote " << file.string() << "\n";
  }
  listing.write(fs::path(out) / "predictions.txt");
  return 0;
}

std::vector<fs::path> prediction_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::exists(dir / "predictions.txt")) {
    for (const auto& e : DatasetManifest::read(dir / "predictions.txt").entries) files.push_back(e.image);
    return files;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int run_evaluate(const std::string& pred_dir, const std::string& truth, const EvalConfig& config, const std::string& json_out) {
  const auto files = prediction_files(pred_dir);
  const DatasetManifest manifest = DatasetManifest::read(truth);
  if (files.size() != manifest.entries.size()) {
    throw std::runtime_error("evaluate: " + std::to_string(files.size()) + " predictions but " +
                             std::to_string(manifest.entries.size()) + " truth entries");
  }
  std::vector<ScoreReport> reports;
  nlohmann::json doc{{"threshold", config.threshold},
                     {"median_radius", config.median_radius},
                     {"border_thinning", config.border_thinning},
                     {"slices", nlohmann::json::array()}};
  std::cout.precision(9);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& e = manifest.entries[i];
    const Image label = read_image(e.label ? *e.label : e.image);
    const ScoreReport r = evaluate(read_image(files[i]), labels_from_boundary(label), config);
    reports.push_back(r);
    print_report(std::cout, "slice " + std::to_string(i), r);
    auto j = report_json(r);
    j["prediction"] = files[i].string();
    doc["slices"].push_back(std::move(j));
  }
  const ScoreReport mean = mean_report(reports);
  print_report(std::cout, "mean", mean);
  doc["mean"] = report_json(mean);
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw std::runtime_error(json_out + ": cannot open for writing");
    out << doc.dump(2) << "\n";
  }
  return 0;
}

int run_augment(const std::string& data, const std::string& out, std::uint64_t seed, double amplitude, double sigma,
                bool enrich_samples) {
  auto dataset = load_dataset(DatasetManifest::read(data));
  if (enrich_samples) dataset = enrich(dataset);
  fs::create_directories(out);
  DatasetManifest listing;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, {0, i}));
    SamplePair s = dataset[i];
    if (amplitude > 0) s = elastic_warp(s, sample_elastic_field(rng, amplitude));
    if (sigma > 0) s.image = add_gaussian_noise(s.image, sigma, rng);
    const fs::path image = fs::path(out) / slice_name("image", i, ".png");
    const fs::path label = fs::path(out) / slice_name("label", i, ".png");
    write_png(image, s.image);
    write_png(label, s.label);
    listing.entries.push_back({image, label});
  }
  listing.write(fs::path(out) / "manifest.txt");
  std::cout << "wrote " << dataset.size() << " samples to " << out << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed, int trials) {
  bool ok = true;
  for (const auto& r : run_gradient_suite(seed, trials)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.op << " trials=" << r.trials << " max_rel_error=" << r.max_error << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int run_synth(const std::string& out, int count, const SyntheticOptions& options, std::uint64_t seed) {
  fs::create_directories(out);
  DatasetManifest listing;
  listing.dims = std::pair{options.size, options.size};
  const auto corpus = synthetic_corpus(count, options, seed);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const fs::path image = fs::path(out) / slice_name("image", i, ".png");
    const fs::path label = fs::path(out) / slice_name("label", i, ".png");
    write_png(image, corpus[i].image);
    write_png(label, corpus[i].label);
    listing.entries.push_back({image, label});
  }
  listing.write(fs::path(out) / "manifest.txt");
  std::cout << "wrote " << corpus.size() << " samples to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FusionNet membrane segmentation"};
  app.require_subcommand(1);
  int status = 0;

  std::string config, data, out, resume;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a network (cross-validates first when folds > 1)");
  train_cmd->add_option("--config", config, "INI config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data, "dataset manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "checkpoint to write")->required();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_flag("--quiet", quiet, "do not print per-step losses");
  train_cmd->callback([&] { status = run_train(config, data, out, resume, quiet); });

  std::string ckpt, input;
  bool no_tta = false;
  auto* predict_cmd = app.add_subcommand("predict", "boundary probability maps");
  predict_cmd->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--in", input, "image or manifest")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", out, "output directory")->required();
  predict_cmd->add_flag("--no-tta", no_tta, "single forward pass instead of 8 orientations");
  predict_cmd->callback([&] { status = run_predict(ckpt, input, out, no_tta); });

  std::string pred, truth, json_out;
  EvalConfig eval;
  bool no_thinning = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "V_rand, V_info and V_dice against labels");
  eval_cmd->add_option("--pred", pred, "prediction directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--truth", truth, "manifest of label images")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--median-radius", eval.median_radius, "median filter radius")->capture_default_str()->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--threshold", eval.threshold, "boundary threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_flag("--no-thinning", no_thinning, "skip border thinning");
  eval_cmd->add_option("--json", json_out, "also write the report as JSON");
  eval_cmd->callback([&] {
    eval.border_thinning = !no_thinning;
    status = run_evaluate(pred, truth, eval, json_out);
  });

  std::uint64_t seed = 0;
  double amplitude = 10.0, sigma = 0.1;
  bool no_enrich = false;
  auto* aug_cmd = app.add_subcommand("augment", "write enriched and warped samples");
  aug_cmd->add_option("--data", data, "dataset manifest")->required()->check(CLI::ExistingFile);
  aug_cmd->add_option("--out", out, "output directory")->required();
  aug_cmd->add_option("--seed", seed, "seed")->capture_default_str();
  aug_cmd->add_option("--amplitude", amplitude, "elastic amplitude in pixels")->capture_default_str();
  aug_cmd->add_option("--sigma", sigma, "noise standard deviation")->capture_default_str();
  aug_cmd->add_flag("--no-enrich", no_enrich, "skip the 8 orientations");
  aug_cmd->callback([&] { status = run_augment(data, out, seed, amplitude, sigma, !no_enrich); });

  int trials = 20;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every engine op");
  grad_cmd->add_option("--seed", seed, "seed")->capture_default_str();
  grad_cmd->add_option("--trials", trials, "random problems per op")->capture_default_str()->check(CLI::PositiveNumber);
  grad_cmd->callback([&] { status = run_gradcheck(seed, trials); });

  int count = 6;
  SyntheticOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic cell corpus");
  synth_cmd->add_option("--out", out, "output directory")->required();
  synth_cmd->add_option("--count", count, "number of pairs")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", synth.size, "side length")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--cells", synth.cells, "cells per image")->capture_default_str();
  synth_cmd->add_option("--membrane-width", synth.membrane_width, "membrane width in pixels")->capture_default_str();
  synth_cmd->add_option("--seed", seed, "seed")->capture_default_str();
  synth_cmd->callback([&] { status = run_synth(out, count, synth, seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <unistd.h>

#include "doctest.h"
#include "fusionnet/checkpoint.hpp"
#include "fusionnet/config.hpp"
#include "fusionnet/io.hpp"
#include "fusionnet/pipeline.hpp"
#include "fusionnet/synthetic.hpp"

using namespace fusionnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("fusionnet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// 12x12 samples padded by 2 into a one-level, two-feature network.
TrainConfig tiny_config() {
  TrainConfig c;
  c.network.levels = 1;
  c.network.base_features = 2;
  c.network.input_height = c.network.input_width = 16;
  c.optimizer.learning_rate = 1e-2;
  c.epochs = 2;
  c.batch_size = 2;
  c.seed = 7;
  c.folds = 1;
  c.augmentation.enrich = false;
  c.augmentation.pad_radius = 2;
  c.augmentation.elastic_amplitude = 2;
  return c;
}

std::vector<SamplePair> tiny_data(int count = 5) { return synthetic_corpus(count, {12, 3, 2.0, 0.03}, 11); }

bool same_tensors(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].value.shape() != b[i].value.shape()) return false;
    if (a[i].value.values() != b[i].value.values()) return false;
  }
  return true;
}

bool same_moments(const std::map<std::string, Tensor<float>>& a, const std::map<std::string, Tensor<float>>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second.values() != v.values()) return false;
  }
  return true;
}

bool same_checkpoint(const Checkpoint& a, const Checkpoint& b) {
  return a.spec == b.spec && a.pad_radius == b.pad_radius && same_tensors(a.parameters, b.parameters) &&
         same_tensors(a.running_stats, b.running_stats) && a.optimizer.step == b.optimizer.step &&
         same_moments(a.optimizer.first_moment, b.optimizer.first_moment) &&
         same_moments(a.optimizer.second_moment, b.optimizer.second_moment) && a.progress == b.progress;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parses every section and round-trips") {
    const TrainConfig c = parse_config(
        "[network]\nlevels = 3\nbase_features = 4\ninput_height = 96\ninput_width = 96\nblock_order = conv_bn_relu\n"
        "[optimizer]\nlearning_rate = 0.001\n"
        "[training]\nepochs = 5\nbatch_size = 2\nseed = 42\nfolds = 1\n"
        "[augmentation]\nenrich = false\npad_radius = 8\nnoise_sigma = 0.05\nelastic_amplitude = 3\n"
        "[evaluation]\nthreshold = 0.4\nmedian_radius = 1\nborder_thinning = false\n"
        "[predict]\ntta = false\n");
    CHECK(c.network.levels == 3);
    CHECK(c.network.base_features == 4);
    CHECK(c.network.block_order == BlockOrder::conv_bn_relu);
    CHECK(c.optimizer.learning_rate == 0.001);
    CHECK(c.optimizer.beta2 == 0.999);
    CHECK(c.epochs == 5);
    CHECK(c.seed == 42);
    CHECK_FALSE(c.augmentation.enrich);
    CHECK(c.augmentation.pad_radius == 8);
    CHECK(c.evaluation.threshold == 0.4);
    CHECK_FALSE(c.evaluation.border_thinning);
    CHECK_FALSE(c.tta);

    const TrainConfig again = parse_config(format_config(c));
    CHECK(again.network == c.network);
    CHECK(again.seed == c.seed);
    CHECK(again.augmentation.noise_sigma == c.augmentation.noise_sigma);
    CHECK(again.evaluation.median_radius == c.evaluation.median_radius);
  }

  TEST_CASE("defaults") {
    const TrainConfig c = parse_config("");
    CHECK(c.optimizer.learning_rate == 1e-4);
    CHECK(c.augmentation.noise_sigma == 0.1);
    CHECK(c.augmentation.pad_radius == 64);
    CHECK(c.evaluation.median_radius == 2);
  }

  TEST_CASE("rejects unknown or malformed entries") {
    CHECK_THROWS_AS(parse_config("[network]\nlayers = 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[nets]\nlevels = 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[network]\nlevels = three\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[training]\nbatch_size = 0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[network]\nkernel_size = 4\n"), std::invalid_argument);
  }

  TEST_CASE("seed from the environment") {
    TrainConfig c = parse_config("[training]\nseed = 3\n");
    ::setenv("FUSIONNET_SEED", "99", 1);
    apply_environment(c);
    CHECK(c.seed == 99);
    ::setenv("FUSIONNET_SEED", "x", 1);
    CHECK_THROWS_AS(apply_environment(c), std::invalid_argument);
    ::unsetenv("FUSIONNET_SEED");
    apply_environment(c);
    CHECK(c.seed == 99);
  }
}

TEST_SUITE("io") {
  TEST_CASE("pgm and png round trips") {
    TempDir dir;
    Image img(5, 7);
    for (int i = 0; i < 35; ++i) img.values[static_cast<std::size_t>(i)] = static_cast<float>(i) / 34.0f;

    write_pgm(dir.path / "a.pgm", img, 16);
    const Image a = read_image(dir.path / "a.pgm");
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(a.values[i] - img.values[i]) <= 0.5f / 65535.0f + 1e-7f);

    for (const char* name : {"b.pgm", "b.png"}) {
      write_image(dir.path / name, img);
      const Image b = read_image(dir.path / name);
      REQUIRE(b.same_size(img));
      for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(b.values[i] - img.values[i]) <= 0.5f / 255.0f + 1e-7f);
    }
  }

  TEST_CASE("labels are binarised and manifests resolve relative paths") {
    TempDir dir;
    Image label(4, 4, 0.0f);
    label(1, 1) = 1.0f;
    label(2, 2) = 0.6f;
    write_png(dir.path / "l.png", label);
    write_png(dir.path / "i.png", Image(4, 4, 0.25f));
    std::ofstream(dir.path / "m.txt") << "# corpus\ndims 4 4\npixel_size 4 4 50\nsample i.png l.png\n";

    const DatasetManifest m = DatasetManifest::read(dir.path / "m.txt");
    REQUIRE(m.entries.size() == 1);
    CHECK(m.pixel_size.value()[2] == 50.0);
    const auto data = load_dataset(m);
    CHECK(data[0].label(1, 1) == 1.0f);
    CHECK(data[0].label(2, 2) == 1.0f);
    CHECK(data[0].label(0, 0) == 0.0f);

    m.write(dir.path / "copy.txt");
    CHECK(DatasetManifest::read(dir.path / "copy.txt").entries.size() == 1);
  }

  TEST_CASE("bad inputs are reported") {
    TempDir dir;
    CHECK_THROWS(read_image(dir.path / "missing.png"));
    std::ofstream(dir.path / "junk.pgm") << "P2\n1 1\n255\n0\n";
    CHECK_THROWS(read_image(dir.path / "junk.pgm"));

    std::ofstream(dir.path / "empty.txt") << "# nothing\n";
    CHECK_THROWS(load_dataset(DatasetManifest::read(dir.path / "empty.txt")));

    write_png(dir.path / "i.png", Image(4, 4, 0.5f));
    std::ofstream(dir.path / "dims.txt") << "dims 8 8\nsample i.png i.png\n";
    CHECK_THROWS(load_dataset(DatasetManifest::read(dir.path / "dims.txt")));

    std::ofstream(dir.path / "nolabel.txt") << "sample i.png\n";
    CHECK_THROWS(load_dataset(DatasetManifest::read(dir.path / "nolabel.txt")));
    CHECK(load_images(DatasetManifest::read(dir.path / "nolabel.txt")).size() == 1);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-exact") {
    Trainer t(tiny_config(), tiny_data());
    t.step();
    t.step();
    const Checkpoint a = t.checkpoint();
    const Checkpoint b = deserialize_checkpoint(serialize_checkpoint(a));
    CHECK(same_checkpoint(a, b));
    CHECK(serialize_checkpoint(b) == serialize_checkpoint(a));

    TempDir dir;
    save_checkpoint(a, dir.path / "c.fnet");
    CHECK_FALSE(fs::exists(dir.path / "c.fnet.partial"));
    CHECK(same_checkpoint(load_checkpoint(dir.path / "c.fnet"), a));

    const auto net = b.network();
    const auto& orig = t.network();
    for (std::size_t i = 0; i < orig.parameters().size(); ++i)
      CHECK(net.parameters()[i].value.values() == orig.parameters()[i].value.values());
  }

  TEST_CASE("corruption is detected") {
    Trainer t(tiny_config(), tiny_data());
    const auto bytes = serialize_checkpoint(t.checkpoint());

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(truncated, "x"), doctest::Contains("corrupt checkpoint"), std::runtime_error);

    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(magic), std::runtime_error);

    auto version = bytes;
    version[4] = 99;
    CHECK_THROWS_AS(deserialize_checkpoint(version), std::runtime_error);

    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(longer), std::runtime_error);

    auto huge_header = bytes;
    for (int i = 8; i < 16; ++i) huge_header[static_cast<std::size_t>(i)] = 0xFF;
    CHECK_THROWS_AS(deserialize_checkpoint(huge_header), std::runtime_error);

    CHECK_THROWS_AS(deserialize_checkpoint({}), std::runtime_error);
  }
}

TEST_SUITE("training") {
  TEST_CASE("step counts") {
    TrainConfig c = tiny_config();
    Trainer t(c, tiny_data(5));
    CHECK(t.steps_per_epoch() == 3);
    CHECK(t.total_steps() == 6);
    c.max_steps = 4;
    CHECK(Trainer(c, tiny_data(5)).total_steps() == 4);
    c.augmentation.enrich = true;
    c.max_steps = 0;
    CHECK(Trainer(c, tiny_data(5)).steps_per_epoch() == 20);
  }

  TEST_CASE("zero epochs returns the initialisation") {
    TrainConfig c = tiny_config();
    c.epochs = 0;
    const TrainResult r = train(c, tiny_data());
    CHECK(r.losses.empty());
    const auto init = FusionNet<float>::build(c.network, c.seed);
    for (std::size_t i = 0; i < init.parameters().size(); ++i)
      CHECK(r.checkpoint.parameters[i].value.values() == init.parameters()[i].value.values());
  }

  TEST_CASE("runs are deterministic and learn") {
    TrainConfig c = tiny_config();
    c.epochs = 6;
    const TrainResult a = train(c, tiny_data());
    const TrainResult b = train(c, tiny_data());
    CHECK(a.losses == b.losses);
    CHECK(same_checkpoint(a.checkpoint, b.checkpoint));
    CHECK(a.losses.size() == 18);
    for (double l : a.losses) CHECK(std::isfinite(l));

    c.seed = 8;
    CHECK(train(c, tiny_data()).losses != a.losses);
  }

  TEST_CASE("resume continues exactly") {
    TrainConfig c = tiny_config();
    c.epochs = 3;
    const auto data = tiny_data();
    const TrainResult straight = train(c, data);

    Trainer first(c, data);
    for (int i = 0; i < 4; ++i) first.step();  // stops mid-epoch
    const Checkpoint mid = deserialize_checkpoint(serialize_checkpoint(first.checkpoint()));
    const TrainResult rest = train(c, data, mid);
    CHECK(rest.losses.size() == straight.losses.size() - 4);
    CHECK(std::equal(rest.losses.begin(), rest.losses.end(), straight.losses.begin() + 4));
    CHECK(same_checkpoint(rest.checkpoint, straight.checkpoint));

    TrainConfig other = c;
    other.network.base_features = 4;
    CHECK_THROWS_AS(Trainer(other, data, mid), std::invalid_argument);
  }

  TEST_CASE("a non-finite loss stops training and keeps the last good state") {
    TrainConfig c = tiny_config();
    c.epochs = 4;
    c.checkpoint_every = 1;
    auto data = tiny_data(4);
    const TrainResult good = [&] {
      TrainConfig one = c;
      one.epochs = 1;
      return train(one, data);
    }();

    Trainer t(c, data);
    t.step();
    t.step();
    const Checkpoint after_epoch = t.checkpoint();
    CHECK(same_checkpoint(after_epoch, good.checkpoint));

    for (auto& s : data) s.image.values.assign(s.image.size(), std::numeric_limits<float>::quiet_NaN());
    const TrainResult bad = train(c, data, after_epoch);
    CHECK(bad.diverged);
    CHECK(bad.losses.size() == 1);
    CHECK(same_checkpoint(bad.checkpoint, after_epoch));

    Trainer direct(c, data, after_epoch);
    const double loss = direct.step();
    CHECK_FALSE(std::isfinite(loss));
    const Checkpoint after = direct.checkpoint();
    CHECK(same_tensors(after.parameters, after_epoch.parameters));
    CHECK(same_tensors(after.running_stats, after_epoch.running_stats));
  }

  TEST_CASE("sizes are checked up front") {
    TrainConfig c = tiny_config();
    c.augmentation.pad_radius = 3;
    CHECK_THROWS_WITH_AS(Trainer(c, tiny_data()), doctest::Contains("the network expects 16x16"), std::invalid_argument);
    CHECK_THROWS_AS(Trainer(tiny_config(), {}), std::invalid_argument);
    auto mixed = tiny_data(2);
    mixed[1] = synthetic_cells({10, 3, 2.0, 0.0}, 1);
    CHECK_THROWS_AS(Trainer(tiny_config(), mixed), std::invalid_argument);
  }

  TEST_CASE("augmented samples are reproducible and padded") {
    const Trainer t(tiny_config(), tiny_data());
    const SamplePair a = t.prepare_sample(3, 1);
    CHECK(a.image == t.prepare_sample(3, 1).image);
    CHECK(a.label == t.prepare_sample(3, 1).label);
    CHECK_FALSE(a.image == t.prepare_sample(4, 1).image);
    CHECK(a.image.height == 16);
    for (float v : a.label.values) CHECK((v == 0.0f || v == 1.0f));
  }
}

TEST_SUITE("folds") {
  TEST_CASE("30 samples into 3 folds") {
    const auto folds = fold_partition(30, 3, 5);
    REQUIRE(folds.size() == 3);
    std::set<std::size_t> seen;
    for (const auto& f : folds) {
      CHECK(f.size() == 10);
      seen.insert(f.begin(), f.end());
    }
    CHECK(seen.size() == 30);
    CHECK(*seen.rbegin() == 29);
    CHECK(fold_partition(30, 3, 5) == folds);
    CHECK(fold_partition(30, 3, 6) != folds);
  }

  TEST_CASE("uneven splits and limits") {
    const auto folds = fold_partition(7, 3, 1);
    CHECK(folds[0].size() == 3);
    CHECK(folds[1].size() == 2);
    CHECK(folds[2].size() == 2);
    CHECK(fold_partition(4, 1, 1)[0].size() == 4);
    CHECK_THROWS_AS(fold_partition(2, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(fold_partition(2, 0, 1), std::invalid_argument);
  }

  TEST_CASE("cross validation scores each held-out fold") {
    TrainConfig c = tiny_config();
    c.epochs = 1;
    c.tta = false;
    c.evaluation.median_radius = 0;
    CHECK(cross_validate(c, tiny_data(3)).empty());
    c.folds = 3;
    const auto reports = cross_validate(c, tiny_data(3));
    REQUIRE(reports.size() == 3);
    for (const auto& r : reports) {
      CHECK(r.validation.size() == 1);
      CHECK(r.images.size() == 1);
      CHECK(r.mean.v_rand >= 0.0);
      CHECK(r.mean.v_rand <= 1.0);
    }
  }
}

TEST_SUITE("predict") {
  TEST_CASE("output keeps the input size") {
    NetworkSpec spec;
    spec.levels = 1;
    spec.base_features = 1;
    const auto net = FusionNet<float>::build(spec, 3);
    Image img(512, 512, 0.3f);
    const Image out = predict(net, img, 64, false);
    CHECK(out.height == 512);
    CHECK(out.width == 512);
    CHECK_THROWS_WITH_AS(predict(net, Image(9, 10, 0.0f), 0, false), doctest::Contains("divisible by 2^1"),
                         std::invalid_argument);
  }

  TEST_CASE("a constant network is unchanged by test-time augmentation") {
    NetworkSpec spec;
    spec.levels = 1;
    spec.base_features = 2;
    auto net = FusionNet<float>::build(spec, 3);
    for (auto& p : net.parameters()) p.value.fill(0.0f);
    net.parameter("head.conv.bias").value.fill(0.25f);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(0, 1);
    Image img(10, 10);
    for (auto& v : img.values) v = u(rng);
    const Image plain = predict(net, img, 3, false);
    const Image tta = predict(net, img, 3, true);
    const float expected = 1.0f / (1.0f + std::exp(-0.25f));
    for (std::size_t i = 0; i < plain.size(); ++i) {
      CHECK(plain.values[i] == doctest::Approx(expected).epsilon(1e-6));
      CHECK(tta.values[i] == doctest::Approx(expected).epsilon(1e-6));
    }
  }

  TEST_CASE("checkpoint predictions match the network") {
    Trainer t(tiny_config(), tiny_data());
    t.step();
    const Checkpoint ck = t.checkpoint();
    const auto data = tiny_data(2);
    const auto maps = predict(ck, {data[0].image, data[1].image}, true);
    REQUIRE(maps.size() == 2);
    CHECK(maps[1] == predict(t.network(), data[1].image, 2, true));
  }
}

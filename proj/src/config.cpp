#include "fusionnet/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fusionnet {
namespace pt = boost::property_tree;

void TrainConfig::validate() const {
  network.validate();
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("config: max_steps must be >= 0");
  if (folds < 1) throw std::invalid_argument("config: folds must be >= 1");
  if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
  if (augmentation.pad_radius < 0) throw std::invalid_argument("config: pad_radius must be >= 0");
  if (!(augmentation.noise_sigma >= 0.0)) throw std::invalid_argument("config: noise_sigma must be >= 0");
  if (!(augmentation.elastic_amplitude >= 0.0)) throw std::invalid_argument("config: elastic_amplitude must be >= 0");
  if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
  if (!(evaluation.threshold >= 0.0 && evaluation.threshold <= 1.0)) {
    throw std::invalid_argument("config: threshold must lie in [0, 1]");
  }
  if (evaluation.median_radius < 0) throw std::invalid_argument("config: median_radius must be >= 0");
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"network",
       {"levels", "base_features", "input_height", "input_width", "input_channels", "output_channels", "kernel_size",
        "block_order", "bn_momentum", "bn_epsilon"}},
      {"optimizer", {"learning_rate", "beta1", "beta2", "epsilon"}},
      {"training", {"epochs", "batch_size", "max_steps", "seed", "folds", "checkpoint_every"}},
      {"augmentation", {"enrich", "pad_radius", "noise_sigma", "elastic_amplitude"}},
      {"evaluation", {"threshold", "median_radius", "border_thinning"}},
      {"predict", {"tta"}},
  };
  return keys;
}

template <typename V>
void read(const pt::ptree& tree, const std::string& key, V& target) {
  if (auto v = tree.get_optional<V>(key)) target = *v;
  else if (tree.get_child_optional(key)) throw std::invalid_argument("config: cannot parse value of '" + key + "'");
}

}  // namespace

TrainConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  for (const auto& [section, children] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) throw std::invalid_argument("config: unknown section [" + section + "]");
    if (children.empty() && !children.data().empty()) {
      throw std::invalid_argument("config: key '" + section + "' outside of a section");
    }
    for (const auto& [key, value] : children) {
      if (!it->second.count(key)) throw std::invalid_argument("config: unknown key '" + section + "." + key + "'");
    }
  }

  TrainConfig c;
  NetworkSpec& n = c.network;
  read(tree, "network.levels", n.levels);
  read(tree, "network.base_features", n.base_features);
  read(tree, "network.input_height", n.input_height);
  read(tree, "network.input_width", n.input_width);
  read(tree, "network.input_channels", n.input_channels);
  read(tree, "network.output_channels", n.output_channels);
  read(tree, "network.kernel_size", n.kernel_size);
  if (auto order = tree.get_optional<std::string>("network.block_order")) n.block_order = block_order_from_string(*order);
  read(tree, "network.bn_momentum", n.bn_momentum);
  read(tree, "network.bn_epsilon", n.bn_epsilon);
  read(tree, "optimizer.learning_rate", c.optimizer.learning_rate);
  read(tree, "optimizer.beta1", c.optimizer.beta1);
  read(tree, "optimizer.beta2", c.optimizer.beta2);
  read(tree, "optimizer.epsilon", c.optimizer.epsilon);
  read(tree, "training.epochs", c.epochs);
  read(tree, "training.batch_size", c.batch_size);
  read(tree, "training.max_steps", c.max_steps);
  read(tree, "training.seed", c.seed);
  read(tree, "training.folds", c.folds);
  read(tree, "training.checkpoint_every", c.checkpoint_every);
  read(tree, "augmentation.enrich", c.augmentation.enrich);
  read(tree, "augmentation.pad_radius", c.augmentation.pad_radius);
  read(tree, "augmentation.noise_sigma", c.augmentation.noise_sigma);
  read(tree, "augmentation.elastic_amplitude", c.augmentation.elastic_amplitude);
  read(tree, "evaluation.threshold", c.evaluation.threshold);
  read(tree, "evaluation.median_radius", c.evaluation.median_radius);
  read(tree, "evaluation.border_thinning", c.evaluation.border_thinning);
  read(tree, "predict.tta", c.tta);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open config");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const NetworkSpec& n = c.network;
  os << std::boolalpha;
  os << "[network]\nlevels = " << n.levels << "\nbase_features = " << n.base_features
     << "\ninput_height = " << n.input_height << "\ninput_width = " << n.input_width
     << "\ninput_channels = " << n.input_channels << "\noutput_channels = " << n.output_channels
     << "\nkernel_size = " << n.kernel_size << "\nblock_order = " << to_string(n.block_order)
     << "\nbn_momentum = " << n.bn_momentum << "\nbn_epsilon = " << n.bn_epsilon << "\n\n";
  os << "[optimizer]\nlearning_rate = " << c.optimizer.learning_rate << "\nbeta1 = " << c.optimizer.beta1
     << "\nbeta2 = " << c.optimizer.beta2 << "\nepsilon = " << c.optimizer.epsilon << "\n\n";
  os << "[training]\nepochs = " << c.epochs << "\nbatch_size = " << c.batch_size << "\nmax_steps = " << c.max_steps
     << "\nseed = " << c.seed << "\nfolds = " << c.folds << "\ncheckpoint_every = " << c.checkpoint_every << "\n\n";
  os << "[augmentation]\nenrich = " << c.augmentation.enrich << "\npad_radius = " << c.augmentation.pad_radius
     << "\nnoise_sigma = " << c.augmentation.noise_sigma
     << "\nelastic_amplitude = " << c.augmentation.elastic_amplitude << "\n\n";
  os << "[evaluation]\nthreshold = " << c.evaluation.threshold << "\nmedian_radius = " << c.evaluation.median_radius
     << "\nborder_thinning = " << c.evaluation.border_thinning << "\n\n";
  os << "[predict]\ntta = " << c.tta << "\n";
  return os.str();
}

void apply_environment(TrainConfig& config) {
  if (const char* env = std::getenv("FUSIONNET_SEED")) {
    try {
      std::size_t used = 0;
      const std::string s(env);
      const unsigned long long v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      config.seed = v;
    } catch (const std::logic_error&) {
      throw std::invalid_argument(std::string("FUSIONNET_SEED is not an unsigned integer: '") + env + "'");
    }
  }
}

}  // namespace fusionnet

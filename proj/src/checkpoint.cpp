#include "fusionnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace fusionnet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'F', 'N', 'E', 'T'};
constexpr std::uint64_t kPrefixBytes = 4 + 4 + 8;
constexpr std::uint64_t kMaxHeaderBytes = std::uint64_t{1} << 30;

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

json spec_to_json(const NetworkSpec& s) {
  return {{"levels", s.levels},
          {"base_features", s.base_features},
          {"input_height", s.input_height},
          {"input_width", s.input_width},
          {"input_channels", s.input_channels},
          {"output_channels", s.output_channels},
          {"kernel_size", s.kernel_size},
          {"block_order", to_string(s.block_order)},
          {"bn_momentum", s.bn_momentum},
          {"bn_epsilon", s.bn_epsilon}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec s;
  s.levels = j.at("levels").get<int>();
  s.base_features = j.at("base_features").get<int>();
  s.input_height = j.at("input_height").get<int>();
  s.input_width = j.at("input_width").get<int>();
  s.input_channels = j.at("input_channels").get<int>();
  s.output_channels = j.at("output_channels").get<int>();
  s.kernel_size = j.at("kernel_size").get<int>();
  s.block_order = block_order_from_string(j.at("block_order").get<std::string>());
  s.bn_momentum = j.at("bn_momentum").get<double>();
  s.bn_epsilon = j.at("bn_epsilon").get<double>();
  s.validate();
  return s;
}

struct Entry {
  std::string name;
  std::string kind;
  Shape shape;
};

std::vector<std::pair<Entry, const Tensor<float>*>> layout(const Checkpoint& c) {
  std::vector<std::pair<Entry, const Tensor<float>*>> out;
  for (const auto& t : c.parameters) out.push_back({{t.name, "parameter", t.value.shape()}, &t.value});
  for (const auto& t : c.running_stats) out.push_back({{t.name, "running_stat", t.value.shape()}, &t.value});
  for (const auto& [name, t] : c.optimizer.first_moment) out.push_back({{name, "adam_m", t.shape()}, &t});
  for (const auto& [name, t] : c.optimizer.second_moment) out.push_back({{name, "adam_v", t.shape()}, &t});
  return out;
}

[[noreturn]] void corrupt(const std::string& origin, std::uint64_t offset, const std::string& what) {
  throw std::runtime_error(origin + ": corrupt checkpoint at byte " + std::to_string(offset) + ": " + what);
}

// Validated element count of a header shape, or an error naming the tensor.
std::uint64_t checked_elements(const Entry& e, const std::string& origin, std::uint64_t offset) {
  constexpr std::int64_t kMaxDim = std::int64_t{1} << 31;
  std::uint64_t n = 1;
  for (std::int64_t d : {e.shape.n, e.shape.c, e.shape.h, e.shape.w}) {
    if (d <= 0 || d > kMaxDim) corrupt(origin, offset, "tensor '" + e.name + "' has invalid dimension " + std::to_string(d));
    if (n > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(d)) {
      corrupt(origin, offset, "tensor '" + e.name + "' size overflows");
    }
    n *= static_cast<std::uint64_t>(d);
  }
  return n;
}

}  // namespace

Checkpoint Checkpoint::capture(const FusionNet<float>& net, const AdamState<float>& optimizer, int pad_radius,
                               const TrainProgress& progress) {
  Checkpoint c;
  c.spec = net.spec();
  c.pad_radius = pad_radius;
  for (const auto& p : net.parameters()) c.parameters.push_back({p.name, p.value});
  const auto& names = net.batch_norm_names();
  const auto& stats = net.batch_norm_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    c.running_stats.push_back({names[i] + ".running_mean", stats[i].running_mean});
    c.running_stats.push_back({names[i] + ".running_var", stats[i].running_var});
  }
  c.optimizer = optimizer;
  c.progress = progress;
  return c;
}

FusionNet<float> Checkpoint::network() const {
  FusionNet<float> net = FusionNet<float>::build(spec, 0);
  auto& params = net.parameters();
  if (params.size() != parameters.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(parameters.size()) + " parameters, the spec needs " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != parameters[i].name || params[i].value.shape() != parameters[i].value.shape()) {
      throw std::runtime_error("checkpoint parameter '" + parameters[i].name + "' " +
                               parameters[i].value.shape().to_string() + " does not match '" + params[i].name + "' " +
                               params[i].value.shape().to_string());
    }
    params[i].value = parameters[i].value;
  }
  auto& stats = net.batch_norm_stats();
  if (running_stats.size() != 2 * stats.size()) throw std::runtime_error("checkpoint batch-norm statistics incomplete");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const std::string& base = net.batch_norm_names()[i];
    const NamedTensor& mean = running_stats[2 * i];
    const NamedTensor& var = running_stats[2 * i + 1];
    if (mean.name != base + ".running_mean" || var.name != base + ".running_var" ||
        mean.value.shape() != stats[i].running_mean.shape() || var.value.shape() != stats[i].running_var.shape()) {
      throw std::runtime_error("checkpoint batch-norm statistics do not match '" + base + "'");
    }
    stats[i].running_mean = mean.value;
    stats[i].running_var = var.value;
  }
  return net;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c) {
  json header;
  header["spec"] = spec_to_json(c.spec);
  header["pad_radius"] = c.pad_radius;
  const AdamConfig& a = c.optimizer.config;
  header["optimizer"] = {{"learning_rate", a.learning_rate},
                         {"beta1", a.beta1},
                         {"beta2", a.beta2},
                         {"epsilon", a.epsilon},
                         {"step", c.optimizer.step}};
  header["progress"] = {{"epoch", c.progress.epoch},
                        {"step_in_epoch", c.progress.step_in_epoch},
                        {"global_step", c.progress.global_step},
                        {"shuffle_rng", c.progress.shuffle_rng},
                        {"epoch_order", c.progress.epoch_order}};
  const auto entries = layout(c);
  json tensors = json::array();
  for (const auto& [e, t] : entries) {
    tensors.push_back({{"name", e.name}, {"kind", e.kind}, {"shape", {e.shape.n, e.shape.c, e.shape.h, e.shape.w}}});
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, Checkpoint::kVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [e, t] : entries) {
    for (float v : t->values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return {out.begin(), out.end()};
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin) {
  const std::uint64_t size = bytes.size();
  if (size < kPrefixBytes) corrupt(origin, size, "file is shorter than the " + std::to_string(kPrefixBytes) + "-byte prefix");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) corrupt(origin, 0, "bad magic (expected \"FNET\")");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != Checkpoint::kVersion) {
    corrupt(origin, 4, "unsupported version " + std::to_string(version) + " (expected " +
                           std::to_string(Checkpoint::kVersion) + ")");
  }
  const auto header_bytes = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_bytes > kMaxHeaderBytes || header_bytes > size - kPrefixBytes) {
    corrupt(origin, 8, "header length " + std::to_string(header_bytes) + " exceeds the " +
                           std::to_string(size - kPrefixBytes) + " bytes that follow");
  }

  json header;
  try {
    header = json::parse(bytes.begin() + kPrefixBytes, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefixBytes + header_bytes));
  } catch (const json::exception& e) {
    corrupt(origin, kPrefixBytes, std::string("unreadable header: ") + e.what());
  }

  Checkpoint c;
  std::vector<Entry> entries;
  try {
    c.spec = spec_from_json(header.at("spec"));
    c.pad_radius = header.at("pad_radius").get<int>();
    const json& a = header.at("optimizer");
    c.optimizer.config = {a.at("learning_rate").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                          a.at("epsilon").get<double>()};
    c.optimizer.step = a.at("step").get<std::int64_t>();
    const json& p = header.at("progress");
    c.progress.epoch = p.at("epoch").get<std::int64_t>();
    c.progress.step_in_epoch = p.at("step_in_epoch").get<std::int64_t>();
    c.progress.global_step = p.at("global_step").get<std::int64_t>();
    c.progress.shuffle_rng = p.at("shuffle_rng").get<std::string>();
    c.progress.epoch_order = p.at("epoch_order").get<std::vector<std::int64_t>>();
    for (const json& t : header.at("tensors")) {
      const auto dims = t.at("shape").get<std::vector<std::int64_t>>();
      if (dims.size() != 4) corrupt(origin, kPrefixBytes, "tensor '" + t.at("name").get<std::string>() + "' is not 4-D");
      entries.push_back({t.at("name").get<std::string>(), t.at("kind").get<std::string>(),
                         Shape{dims[0], dims[1], dims[2], dims[3]}});
    }
  } catch (const json::exception& e) {
    corrupt(origin, kPrefixBytes, std::string("malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    corrupt(origin, kPrefixBytes, e.what());
  }

  // Size arithmetic first; nothing is allocated until the payload length is known to match.
  std::uint64_t offset = kPrefixBytes + header_bytes;
  std::uint64_t payload = 0;
  for (const Entry& e : entries) {
    const std::uint64_t n = checked_elements(e, origin, kPrefixBytes);
    if (n > (std::numeric_limits<std::uint64_t>::max() - payload) / 4) corrupt(origin, kPrefixBytes, "payload size overflows");
    payload += 4 * n;
  }
  if (payload != size - offset) {
    corrupt(origin, offset, "header describes " + std::to_string(payload) + " payload bytes, file has " +
                                std::to_string(size - offset));
  }

  for (const Entry& e : entries) {
    Tensor<float> t(e.shape);
    for (auto& v : t.data()) {
      v = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + offset));
      offset += 4;
    }
    if (e.kind == "parameter") c.parameters.push_back({e.name, std::move(t)});
    else if (e.kind == "running_stat") c.running_stats.push_back({e.name, std::move(t)});
    else if (e.kind == "adam_m") c.optimizer.first_moment.emplace(e.name, std::move(t));
    else if (e.kind == "adam_v") c.optimizer.second_moment.emplace(e.name, std::move(t));
    else corrupt(origin, kPrefixBytes, "tensor '" + e.name + "' has unknown kind '" + e.kind + "'");
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  // Write to a sibling and rename so a crash never leaves a half-written checkpoint.
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(path.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open checkpoint");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path.string());
}

}  // namespace fusionnet

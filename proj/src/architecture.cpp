#include "fusionnet/architecture.hpp"

#include <algorithm>

#include "fusionnet/optim.hpp"
#include "fusionnet/random.hpp"

namespace fusionnet {

std::string to_string(BlockOrder order) {
  return order == BlockOrder::conv_relu_bn ? "conv_relu_bn" : "conv_bn_relu";
}

BlockOrder block_order_from_string(const std::string& name) {
  if (name == "conv_relu_bn") return BlockOrder::conv_relu_bn;
  if (name == "conv_bn_relu") return BlockOrder::conv_bn_relu;
  throw std::invalid_argument("unknown block order '" + name + "' (expected conv_relu_bn or conv_bn_relu)");
}

std::int64_t NetworkSpec::features_at(int level) const {
  if (level < 1 || level > levels + 1) {
    throw std::out_of_range("level " + std::to_string(level) + " outside 1.." + std::to_string(levels + 1));
  }
  return static_cast<std::int64_t>(base_features) << (level - 1);
}

void NetworkSpec::validate() const {
  if (levels < 1) throw std::invalid_argument("network: levels must be >= 1");
  if (levels > 16) throw std::invalid_argument("network: levels must be <= 16");
  if (base_features < 1) throw std::invalid_argument("network: base_features must be >= 1");
  if (input_channels < 1 || output_channels < 1) throw std::invalid_argument("network: channel counts must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("network: kernel_size must be odd");
  if (input_height < 1 || input_width < 1 || input_height % size_multiple() != 0 ||
      input_width % size_multiple() != 0) {
    throw std::invalid_argument("network: input size " + std::to_string(input_height) + "x" +
                                std::to_string(input_width) + " must be positive and divisible by 2^levels = " +
                                std::to_string(size_multiple()));
  }
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0) || !(bn_epsilon > 0.0)) {
    throw std::invalid_argument("network: batch-norm momentum must lie in [0, 1] and epsilon be positive");
  }
}

NetworkSpec NetworkSpec::full() {
  NetworkSpec s;
  s.levels = 4;
  s.base_features = 64;
  s.input_height = 640;
  s.input_width = 640;
  return s;
}

NetworkSpec NetworkSpec::desk() { return NetworkSpec{}; }

namespace {

template <typename T>
class Builder {
 public:
  Builder(const NetworkSpec& spec, std::uint64_t seed, std::vector<Parameter<T>>& params,
          std::vector<BatchNormStats<T>>& stats, std::vector<std::string>& stats_names)
      : spec_(spec), seed_(seed), params_(params), stats_(stats), stats_names_(stats_names) {}

  std::size_t weight(const std::string& name, const Shape& shape, std::int64_t fan_in) {
    return add(name, he_init<T>(shape, derive_seed(seed_, {params_.size()}), fan_in));
  }

  std::size_t add(const std::string& name, Tensor<T> value) {
    params_.push_back(Parameter<T>{name, std::move(value), std::nullopt});
    return params_.size() - 1;
  }

  ConvBlock conv_block(const std::string& name, std::int64_t in, std::int64_t out) {
    const std::int64_t k = spec_.kernel_size;
    ConvBlock b;
    b.weight = weight(name + ".conv.weight", {out, in, k, k}, in * k * k);
    b.bias = add(name + ".conv.bias", Tensor<T>({1, out, 1, 1}, T{0}));
    b.gamma = add(name + ".bn.gamma", Tensor<T>({1, out, 1, 1}, T{1}));
    b.beta = add(name + ".bn.beta", Tensor<T>({1, out, 1, 1}, T{0}));
    stats_.push_back(BatchNormStats<T>::initial(out));
    stats_names_.push_back(name + ".bn");
    b.stats = stats_.size() - 1;
    return b;
  }

  Stage stage(const std::string& name, std::int64_t in, std::int64_t width) {
    Stage s;
    s.name = name;
    s.width = width;
    s.conv_in = conv_block(name + ".conv_in", in, width);
    for (int i = 0; i < 3; ++i) s.res.convs[i] = conv_block(name + ".res.conv" + std::to_string(i + 1), width, width);
    s.conv_out = conv_block(name + ".conv_out", width, width);
    return s;
  }

 private:
  const NetworkSpec& spec_;
  std::uint64_t seed_;
  std::vector<Parameter<T>>& params_;
  std::vector<BatchNormStats<T>>& stats_;
  std::vector<std::string>& stats_names_;
};

Shape conv_shape(const Shape& in, const Shape& weight, const std::string& where) {
  if (weight.c != in.c) {
    throw std::logic_error(where + ": weight " + weight.to_string() + " cannot consume input " + in.to_string());
  }
  return {in.n, weight.n, in.h, in.w};
}

}  // namespace

template <typename T>
FusionNet<T> FusionNet<T>::build(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  FusionNet net;
  net.spec_ = spec;
  Builder<T> b(spec, seed, net.params_, net.stats_, net.stats_names_);

  std::int64_t in = spec.input_channels;
  for (int level = 1; level <= spec.levels; ++level) {
    net.encoders_.push_back(b.stage("down" + std::to_string(level), in, spec.features_at(level)));
    in = spec.features_at(level);
  }
  net.bridge_ = b.stage("bridge", in, spec.features_at(spec.levels + 1));

  net.decoders_.resize(static_cast<std::size_t>(spec.levels));
  for (int level = spec.levels; level >= 1; --level) {
    const std::string name = "up" + std::to_string(level);
    const std::int64_t from = spec.features_at(level + 1);
    const std::int64_t width = spec.features_at(level);
    const std::size_t deconv_w = b.weight(name + ".deconv.weight", {from, width, 2, 2}, from);
    const std::size_t deconv_b = b.add(name + ".deconv.bias", Tensor<T>({1, width, 1, 1}, T{0}));
    Stage s = b.stage(name, width, width);
    s.deconv_weight = deconv_w;
    s.deconv_bias = deconv_b;
    net.decoders_[static_cast<std::size_t>(level - 1)] = std::move(s);
  }

  const std::int64_t k = spec.kernel_size;
  const std::int64_t base = spec.features_at(1);
  net.head_weight_ = b.weight("head.conv.weight", {spec.output_channels, base, k, k}, base * k * k);
  net.head_bias_ = b.add("head.conv.bias", Tensor<T>({1, spec.output_channels, 1, 1}, T{0}));

  // Structural self-check: every skip must line up with its decoder merge.
  net.trace_shapes(spec.input_height, spec.input_width);
  return net;
}

template <typename T>
Parameter<T>& FusionNet<T>::parameter(const std::string& name) {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter<T>& p) { return p.name == name; });
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return *it;
}

template <typename T>
std::int64_t FusionNet<T>::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += static_cast<std::int64_t>(p.value.size());
  return total;
}

template <typename T>
void FusionNet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
const Stage& FusionNet<T>::encoder(int level) const {
  if (level < 1 || level > spec_.levels) throw std::out_of_range("encoder level " + std::to_string(level));
  return encoders_[static_cast<std::size_t>(level - 1)];
}

template <typename T>
const Stage& FusionNet<T>::decoder(int level) const {
  if (level < 1 || level > spec_.levels) throw std::out_of_range("decoder level " + std::to_string(level));
  return decoders_[static_cast<std::size_t>(level - 1)];
}

template <typename T>
typename FusionNet<T>::Context FusionNet<T>::context_for(const Var<T>& input, const ForwardOptions& options) {
  return Context{input.tape(), &params_, &stats_, options};
}

template <typename T>
Var<T> FusionNet<T>::param(std::size_t index, const Context& ctx) const {
  if (ctx.tape && ctx.params) return ctx.tape->parameter((*ctx.params)[index]);
  return constant(params_[index].value);
}

template <typename T>
Var<T> FusionNet<T>::run_conv_block(const ConvBlock& block, const Var<T>& x, const Context& ctx) const {
  Var<T> y = conv2d(x, param(block.weight, ctx), param(block.bias, ctx));
  auto normalize = [&](const Var<T>& v) {
    const Var<T> gamma = param(block.gamma, ctx);
    const Var<T> beta = param(block.beta, ctx);
    if (ctx.options.mode == Mode::train) {
      if (!ctx.stats) throw std::logic_error("train-mode forward requires mutable batch-norm statistics");
      return batch_norm(v, gamma, beta, (*ctx.stats)[block.stats], BatchNormMode::train,
                        BatchNormOptions{spec_.bn_momentum, spec_.bn_epsilon});
    }
    return batch_norm_eval(v, gamma, beta, stats_[block.stats], spec_.bn_epsilon);
  };
  if (spec_.block_order == BlockOrder::conv_relu_bn) return normalize(relu(y));
  return relu(normalize(y));
}

template <typename T>
Var<T> FusionNet<T>::run_residual(const Stage& stage, const Var<T>& x, const Context& ctx) const {
  if (x.shape().c != stage.width) {
    throw std::invalid_argument(stage.name + ".res: input has " + std::to_string(x.shape().c) +
                                " channels, block width is " + std::to_string(stage.width));
  }
  if (ctx.options.bypass_residual_branches) return x;
  Var<T> f = x;
  for (const ConvBlock& block : stage.res.convs) f = run_conv_block(block, f, ctx);
  return add(x, f);
}

template <typename T>
Var<T> FusionNet<T>::run_stage_body(const Stage& stage, const Var<T>& x, const Context& ctx) const {
  Var<T> y = run_conv_block(stage.conv_in, x, ctx);
  y = run_residual(stage, y, ctx);
  return run_conv_block(stage.conv_out, y, ctx);
}

template <typename T>
EncoderOutput<T> FusionNet<T>::run_encoder(int level, const Var<T>& x, const Context& ctx) const {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("encoder level " + std::to_string(level) + ": odd spatial size " + s.to_string());
  }
  Var<T> skip = run_stage_body(encoder(level), x, ctx);
  Var<T> pooled = maxpool2x2(skip);
  return {skip, pooled};
}

template <typename T>
Var<T> FusionNet<T>::run_decoder(int level, const Var<T>& x, const Var<T>& skip, const Context& ctx) const {
  const Stage& stage = decoder(level);
  Var<T> up = conv_transpose2d(x, param(stage.deconv_weight, ctx), param(stage.deconv_bias, ctx));
  if (up.shape() != skip.shape()) {
    throw std::invalid_argument(stage.name + ": skip " + skip.shape().to_string() +
                                " does not match upsampled " + up.shape().to_string());
  }
  return run_stage_body(stage, add(up, skip), ctx);
}

template <typename T>
void FusionNet<T>::check_input(const Shape& s) const {
  const std::int64_t m = spec_.size_multiple();
  if (s.c != spec_.input_channels || s.h <= 0 || s.w <= 0 || s.h % m != 0 || s.w % m != 0) {
    throw std::invalid_argument("forward: input " + s.to_string() + " needs " +
                                std::to_string(spec_.input_channels) +
                                " channels and height/width divisible by 2^levels = " + std::to_string(m));
  }
}

template <typename T>
Var<T> FusionNet<T>::run(const Var<T>& input, const Context& ctx) const {
  check_input(input.shape());
  std::vector<Var<T>> skips;
  Var<T> x = input;
  for (int level = 1; level <= spec_.levels; ++level) {
    auto [skip, pooled] = run_encoder(level, x, ctx);
    skips.push_back(skip);
    x = pooled;
  }
  x = run_stage_body(bridge_, x, ctx);
  for (int level = spec_.levels; level >= 1; --level) {
    x = run_decoder(level, x, skips[static_cast<std::size_t>(level - 1)], ctx);
  }
  return sigmoid(conv2d(x, param(head_weight_, ctx), param(head_bias_, ctx)));
}

template <typename T>
Var<T> FusionNet<T>::forward(const Var<T>& input, const ForwardOptions& options) {
  return run(input, context_for(input, options));
}

template <typename T>
Tensor<T> FusionNet<T>::predict(const Tensor<T>& input) const {
  return run(constant(input), Context{}).value();
}

template <typename T>
Var<T> FusionNet<T>::residual_block(const Stage& stage, const Var<T>& x, const ForwardOptions& options) {
  return run_residual(stage, x, context_for(x, options));
}

template <typename T>
EncoderOutput<T> FusionNet<T>::encoder_level(int level, const Var<T>& x, const ForwardOptions& options) {
  return run_encoder(level, x, context_for(x, options));
}

template <typename T>
Var<T> FusionNet<T>::bridge(const Var<T>& x, const ForwardOptions& options) {
  return run_stage_body(bridge_, x, context_for(x, options));
}

template <typename T>
Var<T> FusionNet<T>::decoder_level(int level, const Var<T>& x, const Var<T>& skip, const ForwardOptions& options) {
  return run_decoder(level, x, skip, context_for(x, options));
}

template <typename T>
std::vector<ShapeRow> FusionNet<T>::trace_shapes(std::int64_t height, std::int64_t width) const {
  check_input({1, spec_.input_channels, height, width});
  auto block = [&](const ConvBlock& b, const Shape& in, const std::string& where) {
    return conv_shape(in, params_[b.weight].value.shape(), where);
  };
  auto body = [&](const Stage& s, const Shape& in) {
    Shape y = block(s.conv_in, in, s.name + ".conv_in");
    Shape r = y;
    for (const ConvBlock& c : s.res.convs) r = block(c, r, s.name + ".res");
    if (r != y) throw std::logic_error(s.name + ": residual branch changes shape " + y.to_string());
    return block(s.conv_out, y, s.name + ".conv_out");
  };

  std::vector<ShapeRow> rows;
  Shape x{1, spec_.input_channels, height, width};
  rows.push_back({"inputs", "", {x}});
  std::vector<Shape> skips;
  for (int level = 1; level <= spec_.levels; ++level) {
    Shape skip = body(encoder(level), x);
    Shape pooled{skip.n, skip.c, skip.h / 2, skip.w / 2};
    skips.push_back(skip);
    rows.push_back({"down " + std::to_string(level), "conv + res + conv + maxpooling", {skip, pooled}});
    x = pooled;
  }
  x = body(bridge_, x);
  rows.push_back({"bridge", "conv + res + conv", {x}});
  for (int level = spec_.levels; level >= 1; --level) {
    const Stage& s = decoder(level);
    const Shape& w = params_[s.deconv_weight].value.shape();
    if (w.n != x.c) throw std::logic_error(s.name + ".deconv: weight " + w.to_string() + " vs " + x.to_string());
    Shape up{x.n, w.c, 2 * x.h, 2 * x.w};
    const Shape& skip = skips[static_cast<std::size_t>(level - 1)];
    if (up != skip) {
      throw std::logic_error(s.name + ": encoder skip " + skip.to_string() + " differs from decoder pre-merge " +
                             up.to_string());
    }
    x = body(s, up);
    rows.push_back({"upscaling " + std::to_string(level), "deconv + merge + conv + res + conv", {up, x}});
  }
  x = conv_shape(x, params_[head_weight_].value.shape(), "head");
  rows.push_back({"output", "conv", {x}});
  return rows;
}

template class FusionNet<float>;
template class FusionNet<double>;

}  // namespace fusionnet

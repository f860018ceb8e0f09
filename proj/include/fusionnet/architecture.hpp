#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fusionnet/ops.hpp"

namespace fusionnet {

/// Order of the three layers inside a convolutional ("green") block.
enum class BlockOrder { conv_relu_bn, conv_bn_relu };

std::string to_string(BlockOrder order);
BlockOrder block_order_from_string(const std::string& name);

/// Declarative description of a FusionNet.
///
/// `levels` counts encoder/decoder pairs; the bridge sits below them. The
/// published network is levels = 4 (640 -> 320 -> 160 -> 80 -> 40 bridge),
/// i.e. five distinct resolutions.
struct NetworkSpec {
  int levels = 2;
  int base_features = 8;
  int input_height = 64;
  int input_width = 64;
  int input_channels = 1;
  int output_channels = 1;
  int kernel_size = 3;
  BlockOrder block_order = BlockOrder::conv_relu_bn;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;

  /// Feature maps at encoder/decoder level `level` (1-based); level `levels + 1` is the bridge.
  std::int64_t features_at(int level) const;
  /// Spatial sizes must be divisible by this.
  std::int64_t size_multiple() const { return std::int64_t{1} << levels; }
  void validate() const;

  /// Full-size configuration: 640x640 input, 64 base features, four levels plus bridge.
  static NetworkSpec full();
  /// Small configuration for CPU experiments: 64x64 input, 8 base features, two levels.
  static NetworkSpec desk();

  bool operator==(const NetworkSpec&) const = default;
};

enum class Mode { train, eval };

struct ForwardOptions {
  Mode mode = Mode::eval;
  /// Replaces every residual block x + F(x) by x. Used to trace the identity path.
  bool bypass_residual_branches = false;
};

/// Parameter indices of one convolutional block: conv, then ReLU and batch norm.
struct ConvBlock {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t stats = 0;
};

struct ResidualBlock {
  std::array<ConvBlock, 3> convs;
};

/// conv + res + conv at one resolution; shared by encoder levels, the bridge and decoder levels.
struct Stage {
  std::string name;
  std::int64_t width = 0;
  ConvBlock conv_in;
  ResidualBlock res;
  ConvBlock conv_out;
  // Decoder stages only: the transposed convolution feeding the merge.
  std::size_t deconv_weight = 0;
  std::size_t deconv_bias = 0;
};

/// One row of the structural shape trace: block name, ingredients, output shapes.
struct ShapeRow {
  std::string block;
  std::string ingredients;
  std::vector<Shape> shapes;
};

template <typename T>
struct EncoderOutput {
  Var<T> skip;
  Var<T> pooled;
};

template <typename T>
class FusionNet {
 public:
  /// Instantiates every parameter (He-normal conv weights, zero biases and shifts,
  /// unit scales) in a fixed order determined by `spec` and `seed`.
  static FusionNet build(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<BatchNormStats<T>>& batch_norm_stats() { return stats_; }
  const std::vector<BatchNormStats<T>>& batch_norm_stats() const { return stats_; }
  const std::vector<std::string>& batch_norm_names() const { return stats_names_; }

  Parameter<T>& parameter(const std::string& name);
  std::int64_t parameter_count() const;
  void zero_grad();

  const Stage& encoder(int level) const;
  const Stage& bridge_stage() const { return bridge_; }
  const Stage& decoder(int level) const;

  /// Full network: probability map (N, output_channels, H, W). Parameters are
  /// recorded on the tape of `input` when it has one. Train mode updates
  /// batch-norm running statistics.
  Var<T> forward(const Var<T>& input, const ForwardOptions& options = {});

  /// Eval-mode forward without a tape; does not modify the network.
  Tensor<T> predict(const Tensor<T>& input) const;

  /// y = x + F(x), F = three convolutional blocks of the stage's width.
  Var<T> residual_block(const Stage& stage, const Var<T>& x, const ForwardOptions& options = {});
  /// conv -> res -> conv, then 2x2 max pooling.
  EncoderOutput<T> encoder_level(int level, const Var<T>& x, const ForwardOptions& options = {});
  Var<T> bridge(const Var<T>& x, const ForwardOptions& options = {});
  /// deconv(x) + skip, then conv -> res -> conv. The merge is a sum, never a concatenation.
  Var<T> decoder_level(int level, const Var<T>& x, const Var<T>& skip, const ForwardOptions& options = {});

  /// Per-block feature-map shapes for a (1, C_in, height, width) input, derived
  /// from the instantiated parameter shapes without running any convolution.
  std::vector<ShapeRow> trace_shapes(std::int64_t height, std::int64_t width) const;

 private:
  // Mutable state handed to the const implementation by the non-const entry points.
  struct Context {
    Tape<T>* tape = nullptr;
    std::vector<Parameter<T>>* params = nullptr;
    std::vector<BatchNormStats<T>>* stats = nullptr;
    ForwardOptions options;
  };

  FusionNet() = default;
  Context context_for(const Var<T>& input, const ForwardOptions& options);

  Var<T> param(std::size_t index, const Context& ctx) const;
  Var<T> run_conv_block(const ConvBlock& block, const Var<T>& x, const Context& ctx) const;
  Var<T> run_residual(const Stage& stage, const Var<T>& x, const Context& ctx) const;
  Var<T> run_stage_body(const Stage& stage, const Var<T>& x, const Context& ctx) const;
  EncoderOutput<T> run_encoder(int level, const Var<T>& x, const Context& ctx) const;
  Var<T> run_decoder(int level, const Var<T>& x, const Var<T>& skip, const Context& ctx) const;
  Var<T> run(const Var<T>& input, const Context& ctx) const;
  void check_input(const Shape& shape) const;

  NetworkSpec spec_;
  std::vector<Parameter<T>> params_;
  std::vector<BatchNormStats<T>> stats_;
  std::vector<std::string> stats_names_;
  std::vector<Stage> encoders_;  // index level-1
  Stage bridge_;
  std::vector<Stage> decoders_;  // index level-1
  std::size_t head_weight_ = 0;
  std::size_t head_bias_ = 0;
};

extern template class FusionNet<float>;
extern template class FusionNet<double>;

}  // namespace fusionnet

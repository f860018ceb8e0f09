#pragma once

#include <optional>
#include <utility>

#include "fusionnet/autograd.hpp"

namespace fusionnet {

// Differentiable ops. Each one records itself on the tape of its inputs (if any)
// and never broadcasts: shapes must match exactly.

/// Stride-1 convolution with zero "same" padding.
/// weight: (C_out, C_in, k, k) with k odd; bias: (1, C_out, 1, 1).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

/// Stride-2 transposed convolution with a 2x2 kernel; doubles H and W.
/// weight: (C_in, C_out, 2, 2); bias: (1, C_out, 1, 1).
/// out[n,o,2y+i,2x+j] = bias[o] + sum_c in[n,c,y,x] * weight[c,o,i,j]
/// `output_hw`, when given, must equal (2H, 2W).
template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride = 2,
                        std::optional<std::pair<std::int64_t, std::int64_t>> output_hw = std::nullopt);

/// 2x2 max pooling, stride 2. Ties resolve to the first maximal element in row-major order.
template <typename T>
Var<T> maxpool2x2(const Var<T>& input);

/// max(0, x); the derivative at exactly zero is taken as zero.
template <typename T>
Var<T> relu(const Var<T>& input);

template <typename T>
Var<T> sigmoid(const Var<T>& input);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Mean of squared differences over every element; returns a (1,1,1,1) tensor.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;  // (1, C, 1, 1)
  Tensor<T> running_var;   // (1, C, 1, 1)

  static BatchNormStats initial(std::int64_t channels) {
    return {Tensor<T>({1, channels, 1, 1}, T{0}), Tensor<T>({1, channels, 1, 1}, T{1})};
  }
};

enum class BatchNormMode { train, eval };

struct BatchNormOptions {
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double epsilon = 1e-5;
};

/// Per-channel normalization over (N, H, W). Train mode normalizes with batch
/// statistics and folds them into `stats`; eval mode reads `stats` only.
template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                  BatchNormMode mode, const BatchNormOptions& options = {});

/// Eval-mode batch norm over read-only statistics.
template <typename T>
Var<T> batch_norm_eval(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                       const BatchNormStats<T>& stats, double epsilon = 1e-5);

}  // namespace fusionnet

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusionnet/autograd.hpp"

namespace fusionnet {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
};

/// One bias-corrected Adam update over `params`, then zeroes their gradients.
/// Throws if any parameter has no gradient buffer (never entered a tape).
template <typename T>
void adam_step(std::vector<Parameter<T>*> params, AdamState<T>& state);

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state) {
  std::vector<Parameter<T>*> ptrs;
  ptrs.reserve(params.size());
  for (auto& p : params) ptrs.push_back(&p);
  adam_step(std::move(ptrs), state);
}

/// Zero-mean normal samples with variance 2 / fan_in, deterministic in `seed`.
/// fan_in defaults to C * H * W of `shape` (weights laid out as (C_out, C_in, k, k)).
template <typename T>
Tensor<T> he_init(const Shape& shape, std::uint64_t seed, std::optional<std::int64_t> fan_in = std::nullopt);

}  // namespace fusionnet

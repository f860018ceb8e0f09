#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fusionnet/autograd.hpp"

namespace fusionnet {

/// Scalar-valued graph over leaf inputs, evaluated in 64-bit precision.
using ScalarGraph = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Largest relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) over
/// all inputs, using central differences with the given step. Inputs whose gradients
/// are both below 1e-10 in norm count as exact.
double gradient_error(const ScalarGraph& graph, const std::vector<Tensor<double>>& inputs, double step = 1e-3);

struct GradCheckResult {
  std::string op;
  int trials = 0;
  double max_error = 0.0;
  bool passed = false;
};

/// Finite-difference suite over every differentiable engine op, `trials` random
/// small problems each.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int trials = 20, double step = 1e-3,
                                                double tolerance = 1e-3);

}  // namespace fusionnet

#include "fusionnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fusionnet/ops.hpp"

namespace fusionnet {

double gradient_error(const ScalarGraph& graph, const std::vector<Tensor<double>>& inputs, double step) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(graph(leaves));

  auto evaluate = [&](const std::vector<Tensor<double>>& values) {
    std::vector<Var<double>> vars;
    vars.reserve(values.size());
    for (const auto& t : values) vars.push_back(constant(t));
    return graph(vars).value()[0];
  };

  double worst = 0.0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = leaves[k].grad();
    double diff2 = 0.0;
    double a2 = 0.0;
    double n2 = 0.0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double original = inputs[k][i];
      probe[k][i] = original + step;
      const double plus = evaluate(probe);
      probe[k][i] = original - step;
      const double minus = evaluate(probe);
      probe[k][i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    if (scale < 1e-10) continue;
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

namespace {

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Keeps every element at least `margin` away from zero so the ReLU kink is never crossed.
Tensor<double> away_from_zero(Tensor<double> t, double margin) {
  for (auto& v : t.data()) {
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
  return t;
}

// Distinct values spaced 0.05 apart, shuffled, so no 2x2 window has a near tie.
Tensor<double> separated_tensor(const Shape& shape, std::mt19937_64& rng) {
  Tensor<double> t(shape);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = -1.0 + 0.05 * static_cast<double>(order[i]);
  return t;
}

Var<double> reduce(const Var<double>& y, const Tensor<double>& target) { return mse_loss(y, constant(target)); }

std::int64_t pick(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int trials, double step, double tolerance) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> results;

  auto run = [&](const std::string& name, auto&& make_case) {
    GradCheckResult r{name, trials, 0.0, true};
    for (int t = 0; t < trials; ++t) {
      auto [graph, inputs] = make_case();
      r.max_error = std::max(r.max_error, gradient_error(graph, inputs, step));
    }
    r.passed = r.max_error <= tolerance;
    results.push_back(r);
  };

  run("conv2d", [&] {
    const std::int64_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::int64_t h = pick(rng, 3, 6), w = pick(rng, 3, 6), k = pick(rng, 0, 1) ? 3 : 1;
    auto target = random_tensor({n, cout, h, w}, rng);
    ScalarGraph g = [target](const std::vector<Var<double>>& v) { return reduce(conv2d(v[0], v[1], v[2]), target); };
    return std::pair{g, std::vector{random_tensor({n, cin, h, w}, rng), random_tensor({cout, cin, k, k}, rng),
                                    random_tensor({1, cout, 1, 1}, rng)}};
  });

  run("conv_transpose2d", [&] {
    const std::int64_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::int64_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    auto target = random_tensor({n, cout, 2 * h, 2 * w}, rng);
    ScalarGraph g = [target](const std::vector<Var<double>>& v) {
      return reduce(conv_transpose2d(v[0], v[1], v[2]), target);
    };
    return std::pair{g, std::vector{random_tensor({n, cin, h, w}, rng), random_tensor({cin, cout, 2, 2}, rng),
                                    random_tensor({1, cout, 1, 1}, rng)}};
  });

  run("maxpool2x2", [&] {
    const std::int64_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), h = 2 * pick(rng, 1, 3), w = 2 * pick(rng, 1, 3);
    auto target = random_tensor({n, c, h / 2, w / 2}, rng);
    ScalarGraph g = [target](const std::vector<Var<double>>& v) { return reduce(maxpool2x2(v[0]), target); };
    return std::pair{g, std::vector{separated_tensor({n, c, h, w}, rng)}};
  });

  run("relu", [&] {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    auto target = random_tensor(s, rng);
    ScalarGraph g = [target](const std::vector<Var<double>>& v) { return reduce(relu(v[0]), target); };
    return std::pair{g, std::vector{away_from_zero(random_tensor(s, rng), 1e-2)}};
  });

  run("sigmoid", [&] {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    auto target = random_tensor(s, rng, 0.0, 1.0);
    ScalarGraph g = [target](const std::vector<Var<double>>& v) { return reduce(sigmoid(v[0]), target); };
    return std::pair{g, std::vector{random_tensor(s, rng, -4.0, 4.0)}};
  });

  run("add", [&] {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    auto target = random_tensor(s, rng);
    ScalarGraph g = [target](const std::vector<Var<double>>& v) { return reduce(add(v[0], v[1]), target); };
    return std::pair{g, std::vector{random_tensor(s, rng), random_tensor(s, rng)}};
  });

  run("batch_norm_train", [&] {
    const std::int64_t c = pick(rng, 1, 3);
    const Shape s{pick(rng, 1, 3), c, pick(rng, 2, 4), pick(rng, 2, 4)};
    auto target = random_tensor(s, rng);
    ScalarGraph g = [target, c](const std::vector<Var<double>>& v) {
      auto stats = BatchNormStats<double>::initial(c);
      return reduce(batch_norm(v[0], v[1], v[2], stats, BatchNormMode::train), target);
    };
    return std::pair{g, std::vector{random_tensor(s, rng, -2.0, 2.0), random_tensor({1, c, 1, 1}, rng, 0.5, 1.5),
                                    random_tensor({1, c, 1, 1}, rng)}};
  });

  run("batch_norm_eval", [&] {
    const std::int64_t c = pick(rng, 1, 3);
    const Shape s{pick(rng, 1, 3), c, pick(rng, 1, 4), pick(rng, 1, 4)};
    auto target = random_tensor(s, rng);
    BatchNormStats<double> stats{random_tensor({1, c, 1, 1}, rng), random_tensor({1, c, 1, 1}, rng, 0.5, 2.0)};
    ScalarGraph g = [target, stats](const std::vector<Var<double>>& v) {
      return reduce(batch_norm_eval(v[0], v[1], v[2], stats), target);
    };
    return std::pair{g, std::vector{random_tensor(s, rng), random_tensor({1, c, 1, 1}, rng, 0.5, 1.5),
                                    random_tensor({1, c, 1, 1}, rng)}};
  });

  run("mse_loss", [&] {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    ScalarGraph g = [](const std::vector<Var<double>>& v) { return mse_loss(v[0], v[1]); };
    return std::pair{g, std::vector{random_tensor(s, rng), random_tensor(s, rng)}};
  });

  return results;
}

}  // namespace fusionnet

#include "fusionnet/optim.hpp"

#include <cmath>
#include <random>

namespace fusionnet {

template <typename T>
void adam_step(std::vector<Parameter<T>*> params, AdamState<T>& state) {
  for (const Parameter<T>* p : params) {
    if (!p->grad) throw std::invalid_argument("adam_step: parameter '" + p->name + "' has no gradient");
    if (p->grad->shape() != p->value.shape()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + p->name + "'");
    }
  }
  const AdamConfig& cfg = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (Parameter<T>* p : params) {
    auto [m_it, m_new] = state.first_moment.try_emplace(p->name, p->value.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(p->name, p->value.shape());
    Tensor<T>& m = m_it->second;
    Tensor<T>& v = v_it->second;
    if (m.shape() != p->value.shape() || v.shape() != p->value.shape()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for '" + p->name + "'");
    }
    Tensor<T>& g = *p->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      p->value[i] = static_cast<T>(p->value[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
    g.fill(T{0});
  }
}

template <typename T>
Tensor<T> he_init(const Shape& shape, std::uint64_t seed, std::optional<std::int64_t> fan_in) {
  const std::int64_t fan = fan_in.value_or(shape.c * shape.h * shape.w);
  if (fan <= 0) throw std::invalid_argument("he_init: fan_in must be positive for shape " + shape.to_string());
  Tensor<T> out(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan)));
  for (auto& v : out.data()) v = static_cast<T>(dist(rng));
  return out;
}

template void adam_step(std::vector<Parameter<float>*>, AdamState<float>&);
template void adam_step(std::vector<Parameter<double>*>, AdamState<double>&);
template Tensor<float> he_init(const Shape&, std::uint64_t, std::optional<std::int64_t>);
template Tensor<double> he_init(const Shape&, std::uint64_t, std::optional<std::int64_t>);

}  // namespace fusionnet

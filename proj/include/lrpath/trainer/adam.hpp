#pragma once

#include <cmath>
#include <cstdint>

#include "lrpath/error.hpp"
#include "lrpath/trainer/model.hpp"

namespace lrpath::trainer {

struct AdamState {
  TensorSet first_moment;
  TensorSet second_moment;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const ToyModelConfig& cfg) : first_moment(cfg), second_moment(cfg) {}

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update in place. Nothing is modified when the update
/// would produce a non-finite parameter.
inline void adam_step(ModelState& model, AdamState& adam, const Gradients& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorKind::InvalidArgument, "learning rate must be finite and >= 0");
  if (grads.size() != model.params.size() || adam.first_moment.size() != model.params.size())
    fail(ErrorKind::ShapeMismatch, "gradient or optimizer state does not match the model");

  const auto g = grads.values();
  for (double x : g)
    if (!std::isfinite(x)) fail(ErrorKind::NonFiniteUpdate, "non-finite gradient");

  const std::int64_t t = adam.t + 1;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));
  auto p = model.params.values();
  auto m = adam.first_moment.values();
  auto v = adam.second_moment.values();

  std::vector<double> next_p(p.size()), next_m(p.size()), next_v(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    next_m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
    next_v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
    const double mhat = next_m[i] / c1;
    const double vhat = next_v[i] / c2;
    next_p[i] = p[i] - lr * mhat / (std::sqrt(vhat) + adam.epsilon);
    if (!std::isfinite(next_p[i])) fail(ErrorKind::NonFiniteUpdate, "update produced a non-finite parameter");
  }
  std::copy(next_p.begin(), next_p.end(), p.begin());
  std::copy(next_m.begin(), next_m.end(), m.begin());
  std::copy(next_v.begin(), next_v.end(), v.begin());
  adam.t = t;
  ++model.revision;
}

}  // namespace lrpath::trainer

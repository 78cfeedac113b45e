#pragma once

#include <Eigen/Core>
#include <cmath>
#include <type_traits>

#include "agro/error.hpp"

namespace agro {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global-norm gradient clipping threshold; <= 0 disables clipping.
  double clip_norm = 1.0;
};

/// A bare Eigen object is its own single-tensor parameter set.
template <typename Fn, typename First, typename... Rest>
  requires std::is_base_of_v<Eigen::DenseBase<std::remove_const_t<First>>, std::remove_const_t<First>>
void for_each_tensor(Fn&& fn, First& first, Rest&... rest) {
  fn(first, rest...);
}

template <typename Params>
struct AdamState {
  Params first_moment;
  Params second_moment;
  long step = 0;

  static AdamState for_params(const Params& like) {
    AdamState state{like, like, 0};
    for_each_tensor([](auto& m, auto& v) {
      m.setZero();
      v.setZero();
    }, state.first_moment, state.second_moment);
    return state;
  }
};

template <typename Params>
double global_norm(const Params& grads) {
  double sum = 0.0;
  for_each_tensor([&sum](const auto& g) { sum += static_cast<double>(g.squaredNorm()); }, grads);
  return std::sqrt(sum);
}

/// One bias-corrected Adam update, applied after global-norm clipping.
/// Returns the pre-clipping gradient norm.
template <typename Params>
double adam_step(Params& params, std::type_identity_t<Params> grads, AdamState<Params>& state, const AdamConfig& config) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) fail(Errc::NonFiniteGradient, "adam_step: gradient contains non-finite values");
  if (config.clip_norm > 0.0 && norm > config.clip_norm) {
    const double scale = config.clip_norm / norm;
    for_each_tensor([scale](auto& g) { g *= scale; }, grads);
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for_each_tensor(
      [&](auto& p, auto& g, auto& m, auto& v) {
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
        p.array() -= config.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + config.epsilon);
      },
      params, grads, state.first_moment, state.second_moment);
  return norm;
}

}  // namespace agro

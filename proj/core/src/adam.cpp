#include "numlab/adam.hpp"

#include <cmath>

#include "numlab/error.hpp"

namespace numlab {

namespace {

std::string tensor_name_at(std::span<const TensorInfo> layout, std::size_t index) {
  for (const auto& t : layout) {
    if (index >= t.offset && index < t.offset + t.size()) {
      return t.name + "[" + std::to_string(index - t.offset) + "]";
    }
  }
  return "parameter " + std::to_string(index);
}

}  // namespace

template <typename Scalar>
void adam_step(std::span<Scalar> params, std::span<const Scalar> grads, AdamState<Scalar>& state,
               const AdamConfig& config, std::span<const TensorInfo> layout) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ValidationError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      throw ValidationError("non-finite gradient in " + tensor_name_at(layout, i) + " at step " +
                            std::to_string(state.step + 1));
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<Scalar>(config.beta1);
  const auto b2 = static_cast<Scalar>(config.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(config.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(config.beta2, t));
  const auto lr = static_cast<Scalar>(config.learning_rate);
  const auto eps = static_cast<Scalar>(config.epsilon);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar g = grads[i];
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g * g;
    const Scalar mhat = state.m[i] / c1;
    const Scalar vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, const AdamConfig&,
                               std::span<const TensorInfo>);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, const AdamConfig&,
                                std::span<const TensorInfo>);

}  // namespace numlab

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "numlab/model.hpp"

namespace numlab {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment estimates plus the number of completed steps.
template <typename Scalar>
struct AdamState {
  std::vector<Scalar> m;
  std::vector<Scalar> v;
  std::uint64_t step = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<Scalar>(n, Scalar(0)), std::vector<Scalar>(n, Scalar(0)), 0}; }
};

// One bias-corrected Adam update, in place:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// `layout` names the tensors for diagnostics; a non-finite gradient throws
// ValidationError naming the offending tensor before anything is modified.
template <typename Scalar>
void adam_step(std::span<Scalar> params, std::span<const Scalar> grads, AdamState<Scalar>& state,
               const AdamConfig& config, std::span<const TensorInfo> layout = {});

extern template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, const AdamConfig&,
                                      std::span<const TensorInfo>);
extern template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                       const AdamConfig&, std::span<const TensorInfo>);

}  // namespace numlab

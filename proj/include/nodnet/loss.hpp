#pragma once

// Binary cross-entropy on logits, numerically stable form:
//   loss_i = max(z,0) - z*y + log(1 + exp(-|z|)),  dL/dz_i = (sigmoid(z)-y)/N.

#include <cmath>
#include <stdexcept>
#include <string>

#include "nodnet/tensor.hpp"

namespace nodnet {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <typename T>
struct BceResult {
  double loss = 0.0;
  Tensor<T> grad;  // dL/dlogit, mean reduction
};

template <typename T>
BceResult<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels) {
  if (logits.rank() != 1)
    throw std::invalid_argument("bce: logits must be [N], got " + shape_to_string(logits.shape));
  require_shape(labels, logits.shape, "bce: labels");
  const std::size_t N = logits.numel();

  BceResult<T> r;
  r.grad = Tensor<T>({N});
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double y = static_cast<double>(labels.data[i]);
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument("bce: label at index " + std::to_string(i) +
                                  " is not binary: " + std::to_string(y));
    const double z = static_cast<double>(logits.data[i]);
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    r.grad.data[i] = static_cast<T>((sigmoid(z) - y) / static_cast<double>(N));
  }
  r.loss = total / static_cast<double>(N);
  return r;
}

}  // namespace nodnet

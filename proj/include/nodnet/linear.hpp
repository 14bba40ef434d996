#pragma once

// Fully connected layer: out = input * weights^T + bias.

#include <stdexcept>
#include <string>

#include "nodnet/gemm.hpp"
#include "nodnet/tensor.hpp"

namespace nodnet {

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias) {
  if (input.rank() != 2)
    throw std::invalid_argument("linear: input must be [N,din], got " + shape_to_string(input.shape));
  if (weights.rank() != 2)
    throw std::invalid_argument("linear: weights must be [dout,din], got " +
                                shape_to_string(weights.shape));
  const std::size_t N = input.shape[0], din = input.shape[1];
  const std::size_t dout = weights.shape[0];
  if (weights.shape[1] != din)
    throw std::invalid_argument("linear: inner dimensions disagree: input din=" +
                                std::to_string(din) + ", weights din=" +
                                std::to_string(weights.shape[1]));
  if (bias && bias->shape != Shape{dout})
    throw std::invalid_argument("linear: bias shape " + shape_to_string(bias->shape) +
                                ", expected [" + std::to_string(dout) + "]");

  Tensor<T> out({N, dout});
  detail::gemm(false, true, N, dout, din, input.ptr(), din, weights.ptr(), din, out.ptr(), dout,
               false);
  if (bias) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < dout; ++j)
        out.at(n, j) = static_cast<T>(out.at(n, j) + bias->data[j]);
  }
  return out;
}

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& upstream, const Tensor<T>& saved_input,
                               const Tensor<T>& weights) {
  const std::size_t N = saved_input.shape[0], din = saved_input.shape[1];
  const std::size_t dout = weights.shape[0];
  require_shape(upstream, {N, dout}, "linear_backward: upstream");

  LinearGrads<T> g;
  g.input = Tensor<T>({N, din});
  g.weights = Tensor<T>({dout, din});
  g.bias = Tensor<T>({dout});
  // dW = upstream^T * input
  detail::gemm(true, false, dout, din, N, upstream.ptr(), dout, saved_input.ptr(), din,
               g.weights.ptr(), din, false);
  // dX = upstream * W
  detail::gemm(false, false, N, din, dout, upstream.ptr(), dout, weights.ptr(), din, g.input.ptr(),
               din, false);
  for (std::size_t j = 0; j < dout; ++j) {
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n) s += static_cast<double>(upstream.at(n, j));
    g.bias.data[j] = static_cast<T>(s);
  }
  return g;
}

}  // namespace nodnet

#pragma once

// Adam with bias correction. Moments are kept per parameter, keyed by the
// registration order of the parameter list, which is stable per model.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "nodnet/param.hpp"
#include "nodnet/tensor.hpp"

namespace nodnet {

template <typename T>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step_count = 0;
  std::vector<Tensor<T>> m, v;

  explicit AdamState(double learning_rate = 1e-4) : lr(learning_rate) {
    if (lr <= 0.0) throw std::invalid_argument("adam: lr must be > 0");
  }
};

// One Adam update over `params` using their accumulated .grad buffers.
// Moment tensors are lazily created on the first step.
template <typename T>
void adam_step(std::vector<Param<T>*>& params, AdamState<T>& state) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(Tensor<T>::zeros(p->value.shape));
      state.v.emplace_back(Tensor<T>::zeros(p->value.shape));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam: parameter list changed size since first step");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>& p = *params[k];
    if (p.grad.shape != p.value.shape)
      throw std::invalid_argument("adam: grad shape mismatch for parameter " + p.name);
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = static_cast<double>(p.grad.data[i]);
      if (!std::isfinite(g))
        throw std::runtime_error("adam: non-finite gradient in parameter " + p.name);
      const double mi = state.beta1 * static_cast<double>(m.data[i]) + (1.0 - state.beta1) * g;
      const double vi = state.beta2 * static_cast<double>(v.data[i]) + (1.0 - state.beta2) * g * g;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.value.data[i] =
          static_cast<T>(static_cast<double>(p.value.data[i]) - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace nodnet

#pragma once

// Named trainable parameter with its gradient buffer. Gradients accumulate
// across backward calls (two-stream backbones sum per-stream contributions)
// and are cleared by the training controller before each step.

#include <string>
#include <vector>

#include "nodnet/tensor.hpp"

namespace nodnet {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Non-trainable named state (batch-norm running statistics); saved in
// checkpoints alongside parameters.
template <typename T>
struct NamedTensorRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

template <typename T>
std::vector<NamedTensorRef<T>> named_refs(std::vector<Param<T>*> params) {
  std::vector<NamedTensorRef<T>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back({p->name, &p->value});
  return out;
}

}  // namespace nodnet

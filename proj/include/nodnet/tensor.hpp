#pragma once

// Dense row-major N-d tensor (last axis fastest). The scalar type is the
// dtype: float (f32) or double (f64). Values are immutable by convention
// outside explicit parameter updates.

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nodnet/rng.hpp"

namespace nodnet {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(checked_numel(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_to_string(shape));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  template <typename... Ix>
  T& at(Ix... ix) {
    return data[flat_index({static_cast<std::size_t>(ix)...})];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data[flat_index({static_cast<std::size_t>(ix)...})];
  }

  std::size_t flat_index(std::initializer_list<std::size_t> ix) const {
    if (ix.size() != shape.size()) throw std::invalid_argument("tensor: index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : ix) {
      if (i >= shape[axis])
        throw std::out_of_range("tensor: index " + std::to_string(i) + " out of range on axis " +
                                std::to_string(axis));
      flat = flat * shape[axis] + i;
      ++axis;
    }
    return flat;
  }

  void fill(T v) {
    for (auto& x : data) x = v;
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    t.fill(v);
    return t;
  }

  static Tensor randn(Shape s, RngStream& rng, double mean = 0.0, double sd = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = static_cast<T>(rng.normal(mean, sd));
    return t;
  }

 private:
  static std::size_t checked_numel(const Shape& s) {
    for (std::size_t e : s)
      if (e < 1) throw std::invalid_argument("tensor: all extents must be >= 1, got " + shape_to_string(s));
    return shape_numel(s);
  }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  for (std::size_t i = 0; i < t.numel(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& want, const char* what) {
  if (t.shape != want)
    throw std::invalid_argument(std::string(what) + ": expected shape " + shape_to_string(want) +
                                ", got " + shape_to_string(t.shape));
}

}  // namespace nodnet

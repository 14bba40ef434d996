#pragma once

// Stateful layers: batch normalization, ReLU, inverted dropout.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nodnet/param.hpp"
#include "nodnet/rng.hpp"
#include "nodnet/tensor.hpp"

namespace nodnet {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Batch norm over the channel axis of [N,C] or [N,C,D,H,W] tensors.
// Train mode normalizes with biased batch statistics and updates the running
// estimates by EMA; eval mode normalizes with the running estimates.

template <typename T>
struct BatchNormCache {
  Tensor<T> input;
  std::vector<double> mean, invstd;  // per channel
  Mode mode = Mode::train;
};

template <typename T>
struct BatchNorm {
  Param<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm() = default;
  BatchNorm(const std::string& prefix, std::size_t channels)
      : gamma(prefix + ".gamma", Tensor<T>::full({channels}, T(1))),
        beta(prefix + ".beta", Tensor<T>::zeros({channels})),
        running_mean(Tensor<T>::zeros({channels})),
        running_var(Tensor<T>::full({channels}, T(1))) {}

  std::size_t channels() const { return gamma.value.numel(); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, BatchNormCache<T>* cache = nullptr) {
    const std::size_t C = channels();
    if (x.rank() != 2 && x.rank() != 5)
      throw std::invalid_argument("batchnorm: input must be [N,C] or [N,C,D,H,W], got " +
                                  shape_to_string(x.shape));
    if (x.shape[1] != C)
      throw std::invalid_argument("batchnorm: channel axis has extent " +
                                  std::to_string(x.shape[1]) + ", state has C=" +
                                  std::to_string(C));
    const std::size_t N = x.shape[0];
    const std::size_t S = x.numel() / (N * C);  // spatial size per channel
    const std::size_t m = N * S;                // elements per channel

    std::vector<double> mean(C), var(C);
    if (mode == Mode::train) {
      if (m < 2)
        throw std::invalid_argument("batchnorm: train mode needs >= 2 elements per channel, got " +
                                    std::to_string(m));
      for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.ptr() + (n * C + c) * S;
          for (std::size_t q = 0; q < S; ++q) s += static_cast<double>(p[q]);
        }
        mean[c] = s / static_cast<double>(m);
        double v = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.ptr() + (n * C + c) * S;
          for (std::size_t q = 0; q < S; ++q) {
            const double d = static_cast<double>(p[q]) - mean[c];
            v += d * d;
          }
        }
        var[c] = v / static_cast<double>(m);  // biased
        running_mean.data[c] =
            static_cast<T>((1.0 - momentum) * static_cast<double>(running_mean.data[c]) +
                           momentum * mean[c]);
        running_var.data[c] =
            static_cast<T>((1.0 - momentum) * static_cast<double>(running_var.data[c]) +
                           momentum * var[c]);
      }
    } else {
      for (std::size_t c = 0; c < C; ++c) {
        mean[c] = static_cast<double>(running_mean.data[c]);
        var[c] = static_cast<double>(running_var.data[c]);
      }
    }

    Tensor<T> out(x.shape);
    std::vector<double> invstd(C);
    for (std::size_t c = 0; c < C; ++c) invstd[c] = 1.0 / std::sqrt(var[c] + eps);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T* p = x.ptr() + (n * C + c) * S;
        T* o = out.ptr() + (n * C + c) * S;
        const double g = static_cast<double>(gamma.value.data[c]);
        const double b = static_cast<double>(beta.value.data[c]);
        for (std::size_t q = 0; q < S; ++q)
          o[q] = static_cast<T>((static_cast<double>(p[q]) - mean[c]) * invstd[c] * g + b);
      }

    if (cache) {
      cache->input = x;
      cache->mean = std::move(mean);
      cache->invstd = std::move(invstd);
      cache->mode = mode;
    }
    return out;
  }

  // Accumulates dgamma/dbeta into the params; returns dx.
  Tensor<T> backward(const Tensor<T>& dy, const BatchNormCache<T>& cache) {
    const Tensor<T>& x = cache.input;
    require_shape(dy, x.shape, "batchnorm backward: upstream");
    const std::size_t C = channels();
    const std::size_t N = x.shape[0];
    const std::size_t S = x.numel() / (N * C);
    const std::size_t m = N * S;

    Tensor<T> dx(x.shape);
    for (std::size_t c = 0; c < C; ++c) {
      const double g = static_cast<double>(gamma.value.data[c]);
      const double mu = cache.mean[c];
      const double is = cache.invstd[c];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* xp = x.ptr() + (n * C + c) * S;
        const T* dp = dy.ptr() + (n * C + c) * S;
        for (std::size_t q = 0; q < S; ++q) {
          const double xhat = (static_cast<double>(xp[q]) - mu) * is;
          sum_dy += static_cast<double>(dp[q]);
          sum_dy_xhat += static_cast<double>(dp[q]) * xhat;
        }
      }
      gamma.grad.data[c] = static_cast<T>(static_cast<double>(gamma.grad.data[c]) + sum_dy_xhat);
      beta.grad.data[c] = static_cast<T>(static_cast<double>(beta.grad.data[c]) + sum_dy);

      if (cache.mode == Mode::train) {
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t n = 0; n < N; ++n) {
          const T* xp = x.ptr() + (n * C + c) * S;
          const T* dp = dy.ptr() + (n * C + c) * S;
          T* op = dx.ptr() + (n * C + c) * S;
          for (std::size_t q = 0; q < S; ++q) {
            const double xhat = (static_cast<double>(xp[q]) - mu) * is;
            const double v =
                g * is * (static_cast<double>(dp[q]) - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
            op[q] = static_cast<T>(v);
          }
        }
      } else {
        // running stats are constants in eval mode
        for (std::size_t n = 0; n < N; ++n) {
          const T* dp = dy.ptr() + (n * C + c) * S;
          T* op = dx.ptr() + (n * C + c) * S;
          for (std::size_t q = 0; q < S; ++q)
            op[q] = static_cast<T>(static_cast<double>(dp[q]) * g * is);
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// ReLU. Backward uses the saved output: out > 0 iff in > 0, and the
// subgradient at exactly 0 is 0.

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& saved_output) {
  require_shape(dy, saved_output.shape, "relu backward: upstream");
  Tensor<T> dx(dy.shape);
  for (std::size_t i = 0; i < dy.numel(); ++i)
    dx.data[i] = saved_output.data[i] > T(0) ? dy.data[i] : T(0);
  return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout: train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); eval mode is the identity. The mask comes from the
// caller's counter-based stream, so a fixed stream reproduces a fixed mask.

struct DropoutCache {
  std::vector<std::uint8_t> keep;
  double scale = 1.0;
  bool identity = true;
};

template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& x, double rate, Mode mode, RngStream rng,
                          DropoutCache* cache = nullptr) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) {
    if (cache) {
      cache->identity = true;
      cache->scale = 1.0;
      cache->keep.clear();
    }
    return x;
  }
  const double scale = 1.0 / (1.0 - rate);
  Tensor<T> out(x.shape);
  std::vector<std::uint8_t> keep(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    keep[i] = rng.uniform() >= rate ? 1 : 0;
    out.data[i] = keep[i] ? static_cast<T>(static_cast<double>(x.data[i]) * scale) : T(0);
  }
  if (cache) {
    cache->identity = false;
    cache->scale = scale;
    cache->keep = std::move(keep);
  }
  return out;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, const DropoutCache& cache) {
  if (cache.identity) return dy;
  Tensor<T> dx(dy.shape);
  for (std::size_t i = 0; i < dy.numel(); ++i)
    dx.data[i] = cache.keep[i] ? static_cast<T>(static_cast<double>(dy.data[i]) * cache.scale) : T(0);
  return dx;
}

}  // namespace nodnet

#pragma once

// 3D pooling over [N,C,D,H,W]. Max pooling records the argmax (first index in
// row-major window scan on ties) for the backward pass; average pooling
// spreads the gradient uniformly. global_avg collapses D,H,W to [N,C].

#include <stdexcept>
#include <string>
#include <vector>

#include "nodnet/tensor.hpp"

namespace nodnet {

enum class PoolMode { max, avg, global_avg };

struct Pool3dCache {
  PoolMode mode = PoolMode::max;
  Shape in_shape;
  std::size_t window = 0, stride = 0;
  std::vector<std::size_t> argmax;  // flat input index per output element (max mode)
};

inline std::size_t pool_out_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (window > in)
    throw std::invalid_argument("pool3d: window " + std::to_string(window) +
                                " larger than input extent " + std::to_string(in));
  return (in - window) / stride + 1;
}

template <typename T>
Tensor<T> pool3d_forward(const Tensor<T>& input, PoolMode mode, std::size_t window,
                         std::size_t stride, Pool3dCache* cache = nullptr) {
  if (input.rank() != 5)
    throw std::invalid_argument("pool3d: input must be [N,C,D,H,W], got " +
                                shape_to_string(input.shape));
  const std::size_t N = input.shape[0], C = input.shape[1];
  const std::size_t D = input.shape[2], H = input.shape[3], W = input.shape[4];

  if (cache) {
    cache->mode = mode;
    cache->in_shape = input.shape;
    cache->window = window;
    cache->stride = stride;
    cache->argmax.clear();
  }

  if (mode == PoolMode::global_avg) {
    Tensor<T> out({N, C});
    const double inv = 1.0 / static_cast<double>(D * H * W);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T* in = input.ptr() + (n * C + c) * D * H * W;
        double s = 0.0;
        for (std::size_t q = 0; q < D * H * W; ++q) s += static_cast<double>(in[q]);
        out.at(n, c) = static_cast<T>(s * inv);
      }
    return out;
  }

  if (stride < 1) throw std::invalid_argument("pool3d: stride must be >= 1");
  const std::size_t Do = pool_out_extent(D, window, stride);
  const std::size_t Ho = pool_out_extent(H, window, stride);
  const std::size_t Wo = pool_out_extent(W, window, stride);
  Tensor<T> out({N, C, Do, Ho, Wo});
  if (cache && mode == PoolMode::max) cache->argmax.resize(out.numel());

  const double inv_win = 1.0 / static_cast<double>(window * window * window);
  std::size_t oi = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* in = input.ptr() + (n * C + c) * D * H * W;
      const std::size_t base = (n * C + c) * D * H * W;
      for (std::size_t od = 0; od < Do; ++od)
        for (std::size_t oh = 0; oh < Ho; ++oh)
          for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
            if (mode == PoolMode::max) {
              T best = in[(od * stride * H + oh * stride) * W + ow * stride];
              std::size_t best_ix = (od * stride * H + oh * stride) * W + ow * stride;
              for (std::size_t ki = 0; ki < window; ++ki)
                for (std::size_t kj = 0; kj < window; ++kj)
                  for (std::size_t kl = 0; kl < window; ++kl) {
                    const std::size_t ix =
                        ((od * stride + ki) * H + (oh * stride + kj)) * W + (ow * stride + kl);
                    if (in[ix] > best) {  // strict: first index wins ties
                      best = in[ix];
                      best_ix = ix;
                    }
                  }
              out.data[oi] = best;
              if (cache) cache->argmax[oi] = base + best_ix;
            } else {
              double s = 0.0;
              for (std::size_t ki = 0; ki < window; ++ki)
                for (std::size_t kj = 0; kj < window; ++kj)
                  for (std::size_t kl = 0; kl < window; ++kl)
                    s += static_cast<double>(
                        in[((od * stride + ki) * H + (oh * stride + kj)) * W + (ow * stride + kl)]);
              out.data[oi] = static_cast<T>(s * inv_win);
            }
          }
    }
  return out;
}

template <typename T>
Tensor<T> pool3d_backward(const Tensor<T>& upstream, const Pool3dCache& cache) {
  const std::size_t N = cache.in_shape[0], C = cache.in_shape[1];
  const std::size_t D = cache.in_shape[2], H = cache.in_shape[3], W = cache.in_shape[4];
  Tensor<T> grad(cache.in_shape);

  if (cache.mode == PoolMode::global_avg) {
    require_shape(upstream, {N, C}, "pool3d_backward: upstream");
    const T inv = static_cast<T>(1.0 / static_cast<double>(D * H * W));
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T g = static_cast<T>(upstream.at(n, c) * inv);
        T* gp = grad.ptr() + (n * C + c) * D * H * W;
        for (std::size_t q = 0; q < D * H * W; ++q) gp[q] = g;
      }
    return grad;
  }

  const std::size_t Do = pool_out_extent(D, cache.window, cache.stride);
  const std::size_t Ho = pool_out_extent(H, cache.window, cache.stride);
  const std::size_t Wo = pool_out_extent(W, cache.window, cache.stride);
  require_shape(upstream, {N, C, Do, Ho, Wo}, "pool3d_backward: upstream");

  if (cache.mode == PoolMode::max) {
    for (std::size_t oi = 0; oi < upstream.numel(); ++oi)
      grad.data[cache.argmax[oi]] = static_cast<T>(grad.data[cache.argmax[oi]] + upstream.data[oi]);
    return grad;
  }

  const T inv_win = static_cast<T>(1.0 / static_cast<double>(cache.window * cache.window * cache.window));
  std::size_t oi = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      T* gp = grad.ptr() + (n * C + c) * D * H * W;
      for (std::size_t od = 0; od < Do; ++od)
        for (std::size_t oh = 0; oh < Ho; ++oh)
          for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
            const T g = static_cast<T>(upstream.data[oi] * inv_win);
            for (std::size_t ki = 0; ki < cache.window; ++ki)
              for (std::size_t kj = 0; kj < cache.window; ++kj)
                for (std::size_t kl = 0; kl < cache.window; ++kl) {
                  const std::size_t ix = ((od * cache.stride + ki) * H + (oh * cache.stride + kj)) * W +
                                         (ow * cache.stride + kl);
                  gp[ix] = static_cast<T>(gp[ix] + g);
                }
          }
    }
  return grad;
}

}  // namespace nodnet

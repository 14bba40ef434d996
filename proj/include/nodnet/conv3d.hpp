#pragma once

// 3D convolution, forward and backward, via im2col + GEMM. Zero padding,
// cubic kernels, f64 accumulation inside the GEMM.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nodnet/gemm.hpp"
#include "nodnet/tensor.hpp"

namespace nodnet {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool has_bias = false;
};

inline std::size_t conv_out_extent(const ConvSpec& spec, std::size_t in_extent) {
  const std::size_t padded = in_extent + 2 * spec.padding;
  if (padded < spec.kernel)
    throw std::invalid_argument("conv3d: padded extent " + std::to_string(padded) +
                                " smaller than kernel " + std::to_string(spec.kernel));
  return (padded - spec.kernel) / spec.stride + 1;
}

namespace detail {

template <typename T>
void validate_conv_args(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                        const ConvSpec& spec) {
  if (input.rank() != 5)
    throw std::invalid_argument("conv3d: input must be [N,C,D,H,W], got " +
                                shape_to_string(input.shape));
  if (weights.rank() != 5)
    throw std::invalid_argument("conv3d: weights must be [F,C,k,k,k], got " +
                                shape_to_string(weights.shape));
  if (input.shape[1] != spec.in_channels)
    throw std::invalid_argument("conv3d: input channel axis has extent " +
                                std::to_string(input.shape[1]) + ", spec expects " +
                                std::to_string(spec.in_channels));
  if (weights.shape[0] != spec.out_channels || weights.shape[1] != spec.in_channels)
    throw std::invalid_argument("conv3d: weights channel axes " + shape_to_string(weights.shape) +
                                " disagree with spec (F=" + std::to_string(spec.out_channels) +
                                ", C=" + std::to_string(spec.in_channels) + ")");
  for (int axis = 2; axis < 5; ++axis)
    if (weights.shape[axis] != spec.kernel)
      throw std::invalid_argument("conv3d: weights kernel axis " + std::to_string(axis) +
                                  " has extent " + std::to_string(weights.shape[axis]) +
                                  ", spec expects " + std::to_string(spec.kernel));
  if (spec.has_bias) {
    if (bias == nullptr)
      throw std::invalid_argument("conv3d: spec declares bias but none was given");
    if (bias->shape != Shape{spec.out_channels})
      throw std::invalid_argument("conv3d: bias shape " + shape_to_string(bias->shape) +
                                  ", expected [" + std::to_string(spec.out_channels) + "]");
  } else if (bias != nullptr) {
    throw std::invalid_argument("conv3d: bias given but spec has has_bias=false");
  }
  if (spec.stride < 1) throw std::invalid_argument("conv3d: stride must be >= 1");
}

// Column matrix for one sample: rows indexed by (c, ki, kj, kl), columns by
// output voxel (od, oh, ow). Out-of-bounds taps are zero.
template <typename T>
void im2col(const T* in, std::size_t C, std::size_t D, std::size_t H, std::size_t W,
            const ConvSpec& spec, std::size_t Do, std::size_t Ho, std::size_t Wo, T* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.padding);
  const std::size_t s = spec.stride;
  const std::size_t k = spec.kernel;
  const std::size_t P = Do * Ho * Wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const T* inc = in + c * D * H * W;
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj)
        for (std::size_t kl = 0; kl < k; ++kl, ++row) {
          T* dst = col + row * P;
          for (std::size_t od = 0; od < Do; ++od) {
            const std::ptrdiff_t id = static_cast<std::ptrdiff_t>(od * s + ki) - pad;
            if (id < 0 || id >= static_cast<std::ptrdiff_t>(D)) {
              for (std::size_t q = 0; q < Ho * Wo; ++q) dst[od * Ho * Wo + q] = T(0);
              continue;
            }
            for (std::size_t oh = 0; oh < Ho; ++oh) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + kj) - pad;
              T* drow = dst + (od * Ho + oh) * Wo;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) {
                for (std::size_t ow = 0; ow < Wo; ++ow) drow[ow] = T(0);
                continue;
              }
              const T* irow = inc + (static_cast<std::size_t>(id) * H + static_cast<std::size_t>(ih)) * W;
              for (std::size_t ow = 0; ow < Wo; ++ow) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kl) - pad;
                drow[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W))
                               ? T(0)
                               : irow[static_cast<std::size_t>(iw)];
              }
            }
          }
        }
  }
}

// Adjoint of im2col: scatters column-matrix gradients back onto the input.
template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t D, std::size_t H, std::size_t W,
                const ConvSpec& spec, std::size_t Do, std::size_t Ho, std::size_t Wo, T* grad_in) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.padding);
  const std::size_t s = spec.stride;
  const std::size_t k = spec.kernel;
  const std::size_t P = Do * Ho * Wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    T* gc = grad_in + c * D * H * W;
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj)
        for (std::size_t kl = 0; kl < k; ++kl, ++row) {
          const T* src = col + row * P;
          for (std::size_t od = 0; od < Do; ++od) {
            const std::ptrdiff_t id = static_cast<std::ptrdiff_t>(od * s + ki) - pad;
            if (id < 0 || id >= static_cast<std::ptrdiff_t>(D)) continue;
            for (std::size_t oh = 0; oh < Ho; ++oh) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + kj) - pad;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              T* grow = gc + (static_cast<std::size_t>(id) * H + static_cast<std::size_t>(ih)) * W;
              const T* srow = src + (od * Ho + oh) * Wo;
              for (std::size_t ow = 0; ow < Wo; ++ow) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kl) - pad;
                if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(W))
                  grow[static_cast<std::size_t>(iw)] += srow[ow];
              }
            }
          }
        }
  }
}

template <typename T>
std::vector<T>& conv_col_scratch() {
  static thread_local std::vector<T> buf;
  return buf;
}

template <typename T>
std::vector<T>& conv_colgrad_scratch() {
  static thread_local std::vector<T> buf;
  return buf;
}

}  // namespace detail

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                         const ConvSpec& spec) {
  detail::validate_conv_args(input, weights, bias, spec);
  const std::size_t N = input.shape[0], C = input.shape[1];
  const std::size_t D = input.shape[2], H = input.shape[3], W = input.shape[4];
  const std::size_t Do = conv_out_extent(spec, D), Ho = conv_out_extent(spec, H),
                    Wo = conv_out_extent(spec, W);
  const std::size_t F = spec.out_channels;
  const std::size_t CK = C * spec.kernel * spec.kernel * spec.kernel;
  const std::size_t P = Do * Ho * Wo;

  Tensor<T> out({N, F, Do, Ho, Wo});
  std::vector<T>& col = detail::conv_col_scratch<T>();
  col.resize(CK * P);
  for (std::size_t n = 0; n < N; ++n) {
    detail::im2col(input.ptr() + n * C * D * H * W, C, D, H, W, spec, Do, Ho, Wo, col.data());
    detail::gemm(false, false, F, P, CK, weights.ptr(), CK, col.data(), P,
                 out.ptr() + n * F * P, P, false);
    if (spec.has_bias) {
      T* o = out.ptr() + n * F * P;
      for (std::size_t f = 0; f < F; ++f) {
        const T b = bias->data[f];
        for (std::size_t q = 0; q < P; ++q) o[f * P + q] = static_cast<T>(o[f * P + q] + b);
      }
    }
  }
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::optional<Tensor<T>> bias;
};

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& upstream, const Tensor<T>& saved_input,
                             const Tensor<T>& weights, const ConvSpec& spec) {
  ConvSpec no_bias = spec;
  no_bias.has_bias = false;
  detail::validate_conv_args(saved_input, weights, nullptr, no_bias);
  const std::size_t N = saved_input.shape[0], C = saved_input.shape[1];
  const std::size_t D = saved_input.shape[2], H = saved_input.shape[3], W = saved_input.shape[4];
  const std::size_t Do = conv_out_extent(spec, D), Ho = conv_out_extent(spec, H),
                    Wo = conv_out_extent(spec, W);
  const std::size_t F = spec.out_channels;
  const Shape want{N, F, Do, Ho, Wo};
  if (upstream.shape != want)
    throw std::invalid_argument("conv3d_backward: upstream shape " +
                                shape_to_string(upstream.shape) + " does not match forward output " +
                                shape_to_string(want));
  const std::size_t CK = C * spec.kernel * spec.kernel * spec.kernel;
  const std::size_t P = Do * Ho * Wo;

  ConvGrads<T> g;
  g.input = Tensor<T>({N, C, D, H, W});
  g.weights = Tensor<T>({F, C, spec.kernel, spec.kernel, spec.kernel});
  if (spec.has_bias) g.bias = Tensor<T>({F});

  std::vector<T>& col = detail::conv_col_scratch<T>();
  col.resize(CK * P);
  std::vector<T>& colgrad = detail::conv_colgrad_scratch<T>();
  colgrad.resize(CK * P);
  for (std::size_t n = 0; n < N; ++n) {
    const T* up = upstream.ptr() + n * F * P;
    // dW += upstream_n * col_n^T
    detail::im2col(saved_input.ptr() + n * C * D * H * W, C, D, H, W, spec, Do, Ho, Wo, col.data());
    detail::gemm(false, true, F, CK, P, up, P, col.data(), P, g.weights.ptr(), CK, true);
    // dX_n = col2im(W^T * upstream_n)
    detail::gemm(true, false, CK, P, F, weights.ptr(), CK, up, P, colgrad.data(), P, false);
    detail::col2im_add(colgrad.data(), C, D, H, W, spec, Do, Ho, Wo,
                       g.input.ptr() + n * C * D * H * W);
    if (spec.has_bias) {
      for (std::size_t f = 0; f < F; ++f) {
        double s = 0.0;
        for (std::size_t q = 0; q < P; ++q) s += static_cast<double>(up[f * P + q]);
        g.bias->data[f] = static_cast<T>(static_cast<double>(g.bias->data[f]) + s);
      }
    }
  }
  return g;
}

}  // namespace nodnet

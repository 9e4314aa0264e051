#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "essnet/autograd.hpp"

namespace essnet::ops {

/// Output extent of a strided convolution along one axis.
constexpr int conv_out_size(int n, int kernel, int stride, int pad) {
  return (n + 2 * pad - kernel) / stride + 1;
}

/// Zero-padded 2-D convolution. weight is [Cout, Cin, k, k]; bias [1, Cout, 1, 1]
/// or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              int stride, int pad);

/// Fractionally strided convolution. weight is [Cin, Cout, k, k].
/// Output extent is (n - 1) * stride - 2 * pad + k + out_pad.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight,
                        const Var<T>& bias, int stride, int pad, int out_pad);

template <typename T>
Var<T> reflection_pad2d(const Var<T>& x, int pad);

/// Per-sample, per-channel normalisation over H x W with affine gain and bias
/// ([1, C, 1, 1] each).
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                     T eps = T(1e-5));

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> tanh(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// sum_i weight_i * term_i over scalar terms.
template <typename T>
Var<T> weighted_sum(const std::vector<std::pair<Var<T>, T>>& terms);

/// mean |a - b|.
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

/// mean log(1 + exp(sign * x)), computed stably. With sign = -1 this is
/// -mean log sigmoid(x); with sign = +1 it is -mean log(1 - sigmoid(x)).
template <typename T>
Var<T> mean_softplus(const Var<T>& x, T sign);

/// mean (x - target)^2.
template <typename T>
Var<T> mean_squared_to(const Var<T>& x, T target);

/// Cross-entropy of channel-softmax(logits) against per-pixel class IDs,
/// averaged (or summed) over batch and pixels. labels has N*H*W entries.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits,
                             std::span<const std::uint8_t> labels,
                             bool sum_reduction = false);

/// Channel-wise softmax, no graph.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

}  // namespace essnet::ops

// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <type_traits>

#include "rvsam/tensor.hpp"

namespace rvsam {

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

/// Convolution weights in (c_out, c_in / groups, k, k) layout.
template <typename T>
struct ConvParams {
    Tensor<T> weight;
    std::optional<Tensor<T>> bias;
    ConvGeometry geom;

    std::size_t out_channels() const { return weight.dim(0); }
    std::size_t in_channels() const { return weight.dim(1) * geom.groups; }
    std::size_t kernel() const { return weight.dim(2); }
    bool depthwise() const { return geom.groups == out_channels() && geom.groups == in_channels(); }
};

template <typename T>
struct BatchNormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);

    std::size_t channels() const { return gamma.size(); }

    // gamma = 1, beta = 0, running stats 0 / 1.
    static BatchNormParams identity(std::size_t channels, T eps = T(1e-5));
};

template <typename T>
struct ConvGrads {
    Tensor<T> grad_x;
    Tensor<T> grad_w;
    Tensor<T> grad_b;
};

template <typename T>
struct BatchNormGrads {
    Tensor<T> grad_x;
    Tensor<T> grad_gamma;
    Tensor<T> grad_beta;
};

enum class BnMode { eval, batch_stats };

enum class Activation { relu, gelu, sigmoid };

Activation parse_activation(std::string_view name);

// ---- convolution ----------------------------------------------------------

Shape conv2d_output_shape(const Shape& x, const Shape& weight, ConvGeometry g);

// Cross-correlation with zero padding. Dispatches to blocked kernels; the
// result matches conv2d_forward_reference within 1e-5 max-abs.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias, ConvGeometry g);

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
    return conv2d_forward(x, p.weight, p.bias ? &*p.bias : nullptr, p.geom);
}

// Naive seven-loop convolution.
template <typename T>
Tensor<T> conv2d_forward_reference(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                                   ConvGeometry g);

// grad_b is always the per-channel sum of grad_out, whether or not the
// forward used a bias.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, ConvGeometry g,
                             const Tensor<T>& grad_out);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& grad_out) {
    return conv2d_backward(x, p.weight, p.geom, grad_out);
}

/// Transposed convolution, weight layout (c_in, c_out, k, k), groups = 1.
/// Output spatial size is (in - 1) * stride - 2 * padding + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias, ConvGeometry g);

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const ConvParams<T>& p) {
    return conv_transpose2d(x, p.weight, p.bias ? &*p.bias : nullptr, p.geom);
}

// ---- normalization --------------------------------------------------------

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const BatchNormParams<T>& p);

// Normalizes with batch statistics over (n, h, w) and folds them into the
// running statistics (unbiased variance). Constant input yields beta.
template <typename T>
Tensor<T> batchnorm_forward_training(const Tensor<T>& x, BatchNormParams<T>& p);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& x, const BatchNormParams<T>& p, const Tensor<T>& grad_out,
                                     BnMode mode);

// Layer norm over the last dim of a rank-2 tensor.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

template <typename T>
struct ChannelNormGrads {
    Tensor<T> grad_x;
    Tensor<T> grad_gamma;
    Tensor<T> grad_beta;
};

// Layer norm across channels at every pixel of an NCHW tensor.
template <typename T>
Tensor<T> channel_layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

template <typename T>
ChannelNormGrads<T> channel_layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, T eps,
                                                const Tensor<T>& grad_out);

// ---- elementwise ----------------------------------------------------------

template <typename T>
T gelu(T x);
template <typename T>
T gelu_derivative(T x);
template <typename T>
T sigmoid(T x);

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Activation kind);

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& x, Activation kind, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b);

// ---- pooling / resampling -------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out);

// Bilinear resize of an NCHW tensor, half-pixel (align_corners = false).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

// ---- dense ----------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// a @ b^T without materializing the transpose.
template <typename T>
Tensor<T> matmul_transposed(const Tensor<T>& a, const Tensor<T>& b);

// x (rows, in) against a (out, in) weight, plus optional bias (out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias);

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a);

}  // namespace rvsam

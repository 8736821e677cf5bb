// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "conv_kernels.hpp"

namespace rvsam {
namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

template <typename T>
void require_channel_vector(const Tensor<T>& v, std::size_t channels, const char* op, const char* what) {
    if (v.size() != channels) {
        throw ShapeError(std::string(op) + ": " + what + " has " + std::to_string(v.size()) + " entries for " +
                         std::to_string(channels) + " channels");
    }
}

template <typename T>
void check_bn(const Tensor<T>& x, const BatchNormParams<T>& p, const char* op) {
    require_rank(x, 4, op);
    const std::size_t c = x.c();
    require_channel_vector(p.gamma, c, op, "gamma");
    require_channel_vector(p.beta, c, op, "beta");
    require_channel_vector(p.running_mean, c, op, "running_mean");
    require_channel_vector(p.running_var, c, op, "running_var");
}

}  // namespace

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "gelu") return Activation::gelu;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ConfigError("unknown activation kind '" + std::string(name) + "'");
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t channels, T eps) {
    BatchNormParams p;
    p.gamma = Tensor<T>({channels}, T(1));
    p.beta = Tensor<T>({channels}, T(0));
    p.running_mean = Tensor<T>({channels}, T(0));
    p.running_var = Tensor<T>({channels}, T(1));
    p.eps = eps;
    return p;
}

// ---- convolution ----------------------------------------------------------

Shape conv2d_output_shape(const Shape& x, const Shape& weight, ConvGeometry g) {
    if (x.size() != 4 || weight.size() != 4) throw ShapeError("conv2d: input and weight must be rank 4");
    if (g.stride == 0 || g.groups == 0) throw ShapeError("conv2d: stride and groups must be positive");
    const std::size_t c_out = weight[0];
    const std::size_t cin_g = weight[1];
    const std::size_t k = weight[2];
    if (weight[3] != k) throw ShapeError("conv2d: kernel must be square");
    if (c_out % g.groups != 0) throw ShapeError("conv2d: c_out not divisible by groups");
    if (cin_g * g.groups != x[1]) {
        throw ShapeError("conv2d: input has " + std::to_string(x[1]) + " channels, weight expects " +
                         std::to_string(cin_g * g.groups));
    }
    const std::size_t ph = x[2] + 2 * g.padding;
    const std::size_t pw = x[3] + 2 * g.padding;
    if (ph < k || pw < k) throw ShapeError("conv2d: padded input smaller than kernel");
    return {x[0], c_out, (ph - k) / g.stride + 1, (pw - k) / g.stride + 1};
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias, ConvGeometry g) {
    Tensor<T> out(conv2d_output_shape(x.shape(), weight.shape(), g));
    if (bias) require_channel_vector(*bias, out.c(), "conv2d", "bias");
    if (weight.dim(2) == 1 && g.stride == 1 && g.padding == 0 && g.groups == 1) {
        kernels::conv2d_pointwise(x, weight, bias, out);
    } else {
        kernels::conv2d_rows(x, weight, bias, g, out);
    }
    require_finite(out, "conv2d");
    return out;
}

template <typename T>
Tensor<T> conv2d_forward_reference(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                                   ConvGeometry g) {
    Tensor<T> out(conv2d_output_shape(x.shape(), weight.shape(), g));
    if (bias) require_channel_vector(*bias, out.c(), "conv2d", "bias");
    const std::size_t k = weight.dim(2);
    const std::size_t cin_g = weight.dim(1);
    const std::size_t cout_g = out.c() / g.groups;
    for (std::size_t n = 0; n < out.n(); ++n) {
        for (std::size_t co = 0; co < out.c(); ++co) {
            const std::size_t grp = co / cout_g;
            for (std::size_t oh = 0; oh < out.h(); ++oh) {
                for (std::size_t ow = 0; ow < out.w(); ++ow) {
                    T acc = bias ? (*bias)[co] : T(0);
                    for (std::size_t cig = 0; cig < cin_g; ++cig) {
                        for (std::size_t kh = 0; kh < k; ++kh) {
                            for (std::size_t kw = 0; kw < k; ++kw) {
                                const long ih = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.padding);
                                const long iw = static_cast<long>(ow * g.stride + kw) - static_cast<long>(g.padding);
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(x.h()) ||
                                    iw >= static_cast<long>(x.w())) {
                                    continue;
                                }
                                acc += weight.at(co, cig, kh, kw) *
                                       x.at(n, grp * cin_g + cig, static_cast<std::size_t>(ih),
                                            static_cast<std::size_t>(iw));
                            }
                        }
                    }
                    out.at(n, co, oh, ow) = acc;
                }
            }
        }
    }
    require_finite(out, "conv2d_reference");
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, ConvGeometry g,
                             const Tensor<T>& grad_out) {
    const Shape expected = conv2d_output_shape(x.shape(), weight.shape(), g);
    if (grad_out.shape() != expected) {
        throw ShapeError("conv2d_backward: grad_out " + shape_string(grad_out.shape()) + " vs forward output " +
                         shape_string(expected));
    }
    ConvGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({weight.dim(0)})};
    kernels::conv2d_backward_rows(x, weight, g, grad_out, grads);
    return grads;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias, ConvGeometry g) {
    require_rank(x, 4, "conv_transpose2d");
    require_rank(weight, 4, "conv_transpose2d");
    if (g.groups != 1) throw ShapeError("conv_transpose2d: only groups = 1 is supported");
    if (g.stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
    if (weight.dim(0) != x.c()) throw ShapeError("conv_transpose2d: weight c_in does not match input channels");
    const std::size_t k = weight.dim(2);
    const std::size_t c_out = weight.dim(1);
    const long oh_l = static_cast<long>((x.h() - 1) * g.stride + k) - 2 * static_cast<long>(g.padding);
    const long ow_l = static_cast<long>((x.w() - 1) * g.stride + k) - 2 * static_cast<long>(g.padding);
    if (oh_l <= 0 || ow_l <= 0) throw ShapeError("conv_transpose2d: empty output");
    if (bias) require_channel_vector(*bias, c_out, "conv_transpose2d", "bias");
    Tensor<T> out = Tensor<T>::nchw(x.n(), c_out, static_cast<std::size_t>(oh_l), static_cast<std::size_t>(ow_l));
    const long pad = static_cast<long>(g.padding);
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t co = 0; co < c_out; ++co) {
            T* oplane = out.plane(n, co);
            std::fill(oplane, oplane + oh_l * ow_l, bias ? (*bias)[co] : T(0));
            for (std::size_t ci = 0; ci < x.c(); ++ci) {
                const T* iplane = x.plane(n, ci);
                for (std::size_t kh = 0; kh < k; ++kh) {
                    for (std::size_t kw = 0; kw < k; ++kw) {
                        const T wv = weight.at(ci, co, kh, kw);
                        for (std::size_t ih = 0; ih < x.h(); ++ih) {
                            const long oh = static_cast<long>(ih * g.stride + kh) - pad;
                            if (oh < 0 || oh >= oh_l) continue;
                            for (std::size_t iw = 0; iw < x.w(); ++iw) {
                                const long ow = static_cast<long>(iw * g.stride + kw) - pad;
                                if (ow < 0 || ow >= ow_l) continue;
                                oplane[oh * ow_l + ow] += wv * iplane[ih * x.w() + iw];
                            }
                        }
                    }
                }
            }
        }
    }
    require_finite(out, "conv_transpose2d");
    return out;
}

// ---- normalization --------------------------------------------------------

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const BatchNormParams<T>& p) {
    check_bn(x, p, "batchnorm");
    Tensor<T> y(x.shape());
    const std::size_t hw = x.h() * x.w();
    for (std::size_t c = 0; c < x.c(); ++c) {
        const T denom = p.running_var[c] + p.eps;
        if (!(denom > T(0))) throw NumericError("batchnorm: running_var + eps <= 0");
        const T scale = p.gamma[c] / std::sqrt(denom);
        const T shift = p.beta[c] - p.running_mean[c] * scale;
        for (std::size_t n = 0; n < x.n(); ++n) {
            const T* src = x.plane(n, c);
            T* dst = y.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
        }
    }
    require_finite(y, "batchnorm");
    return y;
}

namespace {

template <typename T>
struct BatchMoments {
    std::vector<T> mean;
    std::vector<T> var;  // biased
};

template <typename T>
BatchMoments<T> batch_moments(const Tensor<T>& x) {
    const std::size_t hw = x.h() * x.w();
    const T count = static_cast<T>(x.n() * hw);
    BatchMoments<T> m{std::vector<T>(x.c()), std::vector<T>(x.c())};
    for (std::size_t c = 0; c < x.c(); ++c) {
        T sum = 0;
        for (std::size_t n = 0; n < x.n(); ++n) {
            const T* src = x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) sum += src[i];
        }
        const T mean = sum / count;
        T sq = 0;
        for (std::size_t n = 0; n < x.n(); ++n) {
            const T* src = x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) sq += (src[i] - mean) * (src[i] - mean);
        }
        m.mean[c] = mean;
        m.var[c] = sq / count;
    }
    return m;
}

}  // namespace

template <typename T>
Tensor<T> batchnorm_forward_training(const Tensor<T>& x, BatchNormParams<T>& p) {
    check_bn(x, p, "batchnorm");
    const std::size_t hw = x.h() * x.w();
    const std::size_t count = x.n() * hw;
    if (count == 0) throw ShapeError("batchnorm: empty batch");
    const BatchMoments<T> m = batch_moments(x);
    Tensor<T> y(x.shape());
    for (std::size_t c = 0; c < x.c(); ++c) {
        const T denom = m.var[c] + p.eps;
        if (!(denom > T(0))) throw NumericError("batchnorm: batch variance + eps <= 0");
        const T inv_std = T(1) / std::sqrt(denom);
        for (std::size_t n = 0; n < x.n(); ++n) {
            const T* src = x.plane(n, c);
            T* dst = y.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) dst[i] = p.gamma[c] * (src[i] - m.mean[c]) * inv_std + p.beta[c];
        }
        const T unbiased = count > 1 ? m.var[c] * static_cast<T>(count) / static_cast<T>(count - 1) : m.var[c];
        p.running_mean[c] = (T(1) - p.momentum) * p.running_mean[c] + p.momentum * m.mean[c];
        p.running_var[c] = (T(1) - p.momentum) * p.running_var[c] + p.momentum * unbiased;
    }
    require_finite(y, "batchnorm");
    return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& x, const BatchNormParams<T>& p, const Tensor<T>& grad_out,
                                     BnMode mode) {
    check_bn(x, p, "batchnorm_backward");
    require_same_shape(x, grad_out, "batchnorm_backward");
    const std::size_t c_count = x.c();
    const std::size_t hw = x.h() * x.w();
    BatchNormGrads<T> g{Tensor<T>(x.shape()), Tensor<T>({c_count}), Tensor<T>({c_count})};

    BatchMoments<T> moments;
    if (mode == BnMode::batch_stats) {
        moments = batch_moments(x);
    } else {
        moments.mean.assign(p.running_mean.data().begin(), p.running_mean.data().end());
        moments.var.assign(p.running_var.data().begin(), p.running_var.data().end());
    }
    const T count = static_cast<T>(x.n() * hw);

    for (std::size_t c = 0; c < c_count; ++c) {
        const T denom = moments.var[c] + p.eps;
        if (!(denom > T(0))) throw NumericError("batchnorm_backward: variance + eps <= 0");
        const T inv_std = T(1) / std::sqrt(denom);
        T sum_g = 0;
        T sum_gx = 0;
        for (std::size_t n = 0; n < x.n(); ++n) {
            const T* src = x.plane(n, c);
            const T* go = grad_out.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                sum_g += go[i];
                sum_gx += go[i] * (src[i] - moments.mean[c]) * inv_std;
            }
        }
        g.grad_gamma[c] = sum_gx;
        g.grad_beta[c] = sum_g;
        for (std::size_t n = 0; n < x.n(); ++n) {
            const T* src = x.plane(n, c);
            const T* go = grad_out.plane(n, c);
            T* gx = g.grad_x.plane(n, c);
            if (mode == BnMode::eval) {
                const T s = p.gamma[c] * inv_std;
                for (std::size_t i = 0; i < hw; ++i) gx[i] = go[i] * s;
            } else {
                const T s = p.gamma[c] * inv_std / count;
                for (std::size_t i = 0; i < hw; ++i) {
                    const T xhat = (src[i] - moments.mean[c]) * inv_std;
                    gx[i] = s * (count * go[i] - sum_g - xhat * sum_gx);
                }
            }
        }
    }
    require_finite(g.grad_x, "batchnorm_backward");
    return g;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    require_rank(x, 2, "layer_norm");
    const std::size_t rows = x.dim(0);
    const std::size_t cols = x.dim(1);
    require_channel_vector(gamma, cols, "layer_norm", "gamma");
    require_channel_vector(beta, cols, "layer_norm", "beta");
    if (eps < T(0)) throw ConfigError("layer_norm: eps must be non-negative");
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = x.data().data() + r * cols;
        T* dst = y.data().data() + r * cols;
        T mean = 0;
        for (std::size_t j = 0; j < cols; ++j) mean += src[j];
        mean /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t j = 0; j < cols; ++j) var += (src[j] - mean) * (src[j] - mean);
        var /= static_cast<T>(cols);
        if (!(var + eps > T(0))) throw NumericError("layer_norm: zero variance with eps = 0");
        const T inv_std = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) dst[j] = (src[j] - mean) * inv_std * gamma[j] + beta[j];
    }
    require_finite(y, "layer_norm");
    return y;
}

template <typename T>
Tensor<T> channel_layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    require_rank(x, 4, "channel_layer_norm");
    const std::size_t channels = x.c();
    require_channel_vector(gamma, channels, "channel_layer_norm", "gamma");
    require_channel_vector(beta, channels, "channel_layer_norm", "beta");
    if (!(eps > T(0))) throw ConfigError("channel_layer_norm: eps must be positive");
    const std::size_t hw = x.h() * x.w();
    Tensor<T> y(x.shape());
    std::vector<T> mean(hw);
    std::vector<T> var(hw);
    for (std::size_t n = 0; n < x.n(); ++n) {
        std::fill(mean.begin(), mean.end(), T(0));
        std::fill(var.begin(), var.end(), T(0));
        for (std::size_t c = 0; c < channels; ++c) {
            const T* src = x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) mean[i] += src[i];
        }
        for (T& m : mean) m /= static_cast<T>(channels);
        for (std::size_t c = 0; c < channels; ++c) {
            const T* src = x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) var[i] += (src[i] - mean[i]) * (src[i] - mean[i]);
        }
        for (T& v : var) v = T(1) / std::sqrt(v / static_cast<T>(channels) + eps);
        for (std::size_t c = 0; c < channels; ++c) {
            const T* src = x.plane(n, c);
            T* dst = y.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) dst[i] = (src[i] - mean[i]) * var[i] * gamma[c] + beta[c];
        }
    }
    require_finite(y, "channel_layer_norm");
    return y;
}

template <typename T>
ChannelNormGrads<T> channel_layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, T eps,
                                                const Tensor<T>& grad_out) {
    require_rank(x, 4, "channel_layer_norm_backward");
    require_same_shape(x, grad_out, "channel_layer_norm_backward");
    const std::size_t channels = x.c();
    require_channel_vector(gamma, channels, "channel_layer_norm_backward", "gamma");
    const std::size_t hw = x.h() * x.w();
    const T cf = static_cast<T>(channels);
    ChannelNormGrads<T> g{Tensor<T>(x.shape()), Tensor<T>({channels}), Tensor<T>({channels})};
    std::vector<T> mean(hw), inv_std(hw), sum_g(hw), sum_gx(hw);
    for (std::size_t n = 0; n < x.n(); ++n) {
        std::fill(mean.begin(), mean.end(), T(0));
        std::fill(inv_std.begin(), inv_std.end(), T(0));
        std::fill(sum_g.begin(), sum_g.end(), T(0));
        std::fill(sum_gx.begin(), sum_gx.end(), T(0));
        for (std::size_t c = 0; c < channels; ++c) {
            const T* src = x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) mean[i] += src[i];
        }
        for (T& m : mean) m /= cf;
        for (std::size_t c = 0; c < channels; ++c) {
            const T* src = x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) inv_std[i] += (src[i] - mean[i]) * (src[i] - mean[i]);
        }
        for (T& v : inv_std) v = T(1) / std::sqrt(v / cf + eps);
        for (std::size_t c = 0; c < channels; ++c) {
            const T* src = x.plane(n, c);
            const T* go = grad_out.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                const T xhat = (src[i] - mean[i]) * inv_std[i];
                const T gh = go[i] * gamma[c];
                sum_g[i] += gh;
                sum_gx[i] += gh * xhat;
                g.grad_gamma[c] += go[i] * xhat;
                g.grad_beta[c] += go[i];
            }
        }
        for (std::size_t c = 0; c < channels; ++c) {
            const T* src = x.plane(n, c);
            const T* go = grad_out.plane(n, c);
            T* gx = g.grad_x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                const T xhat = (src[i] - mean[i]) * inv_std[i];
                gx[i] = inv_std[i] / cf * (cf * go[i] * gamma[c] - sum_g[i] - xhat * sum_gx[i]);
            }
        }
    }
    require_finite(g.grad_x, "channel_layer_norm_backward");
    return g;
}

// ---- elementwise ----------------------------------------------------------

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    return cdf + x * pdf;
}

template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Activation kind) {
    Tensor<T> y(x.shape());
    auto src = x.data();
    auto dst = y.data();
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
            break;
        case Activation::gelu:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = gelu(src[i]);
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
            break;
    }
    require_finite(y, "activation");
    return y;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& x, Activation kind, const Tensor<T>& grad_out) {
    require_same_shape(x, grad_out, "activation_backward");
    Tensor<T> g(x.shape());
    auto src = x.data();
    auto go = grad_out.data();
    auto dst = g.data();
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? go[i] : T(0);
            break;
        case Activation::gelu:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = go[i] * gelu_derivative(src[i]);
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < src.size(); ++i) {
                const T s = sigmoid(src[i]);
                dst[i] = go[i] * s * (T(1) - s);
            }
            break;
    }
    require_finite(g, "activation_backward");
    return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = a;
    add_inplace(out, b);
    return out;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
    require_same_shape(acc, b, "add");
    auto dst = acc.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---- pooling / resampling -------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    require_rank(x, 4, "global_avg_pool");
    const std::size_t hw = x.h() * x.w();
    if (hw == 0) throw ShapeError("global_avg_pool: empty spatial dims");
    Tensor<T> out = Tensor<T>::nchw(x.n(), x.c(), 1, 1);
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T* src = x.plane(n, c);
            T sum = 0;
            for (std::size_t i = 0; i < hw; ++i) sum += src[i];
            out.at(n, c, 0, 0) = sum / static_cast<T>(hw);
        }
    }
    require_finite(out, "global_avg_pool");
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
    if (input_shape.size() != 4) throw ShapeError("global_avg_pool_backward: input must be rank 4");
    const std::size_t hw = input_shape[2] * input_shape[3];
    if (hw == 0) throw ShapeError("global_avg_pool_backward: empty spatial dims");
    if (grad_out.shape() != Shape{input_shape[0], input_shape[1], 1, 1}) {
        throw ShapeError("global_avg_pool_backward: grad_out must be (n, c, 1, 1)");
    }
    Tensor<T> g(input_shape);
    for (std::size_t n = 0; n < input_shape[0]; ++n) {
        for (std::size_t c = 0; c < input_shape[1]; ++c) {
            const T v = grad_out.at(n, c, 0, 0) / static_cast<T>(hw);
            std::fill_n(g.plane(n, c), hw, v);
        }
    }
    return g;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 4, "bilinear_resize");
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: target dims must be >= 1");
    if (x.h() == 0 || x.w() == 0) throw ShapeError("bilinear_resize: empty input");
    if (out_h == x.h() && out_w == x.w()) return x;

    struct Tap {
        std::size_t i0, i1;
        T l0, l1;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t o = 0; o < out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            std::size_t i0 = static_cast<std::size_t>(src);
            if (i0 > in - 1) i0 = in - 1;
            const std::size_t i1 = i0 < in - 1 ? i0 + 1 : i0;
            const double l1 = src - static_cast<double>(i0);
            t[o] = {i0, i1, static_cast<T>(1.0 - l1), static_cast<T>(l1)};
        }
        return t;
    };
    const std::vector<Tap> ty = taps(x.h(), out_h);
    const std::vector<Tap> tx = taps(x.w(), out_w);
    Tensor<T> out = Tensor<T>::nchw(x.n(), x.c(), out_h, out_w);
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (std::size_t oy = 0; oy < out_h; ++oy) {
                const Tap& a = ty[oy];
                const T* r0 = src + a.i0 * x.w();
                const T* r1 = src + a.i1 * x.w();
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    const Tap& b = tx[ox];
                    dst[oy * out_w + ox] = a.l0 * (b.l0 * r0[b.i0] + b.l1 * r0[b.i1]) +
                                           a.l1 * (b.l0 * r1[b.i0] + b.l1 * r1[b.i1]);
                }
            }
        }
    }
    require_finite(out, "bilinear_resize");
    return out;
}

// ---- dense ----------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dims differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor<T> out({m, n});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* row = po + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T s = pa[i * k + p];
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
    }
    require_finite(out, "matmul");
    return out;
}

template <typename T>
Tensor<T> matmul_transposed(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 2, "matmul_transposed");
    require_rank(b, 2, "matmul_transposed");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) {
        throw ShapeError("matmul_transposed: inner dims differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
    }
    Tensor<T> out({m, n});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = pb + j * k;
            T acc = 0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            po[i * n + j] = acc;
        }
    }
    require_finite(out, "matmul_transposed");
    return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias) {
    require_rank(weight, 2, "linear");
    // Transposing the (out, in) weight once lets matmul stream contiguous rows.
    const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
    Tensor<T> wt({in_dim, out_dim});
    for (std::size_t o = 0; o < out_dim; ++o) {
        for (std::size_t i = 0; i < in_dim; ++i) wt[i * out_dim + o] = weight[o * in_dim + i];
    }
    Tensor<T> out = matmul(x, wt);
    if (bias) {
        require_channel_vector(*bias, out.dim(1), "linear", "bias");
        const std::size_t cols = out.dim(1);
        for (std::size_t r = 0; r < out.dim(0); ++r) {
            for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] += (*bias)[j];
        }
    }
    return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    require_rank(a, 2, "softmax_rows");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    Tensor<T> out(a.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = a.data().data() + r * cols;
        T* dst = out.data().data() + r * cols;
        const T mx = *std::max_element(src, src + cols);
        T sum = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        for (std::size_t j = 0; j < cols; ++j) dst[j] /= sum;
    }
    require_finite(out, "softmax_rows");
    return out;
}

#define RVSAM_INSTANTIATE_NN(T)                                                                                   \
    template struct BatchNormParams<T>;                                                                           \
    template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, ConvGeometry);        \
    template Tensor<T> conv2d_forward_reference(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,             \
                                                ConvGeometry);                                                    \
    template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, ConvGeometry, const Tensor<T>&);    \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, ConvGeometry);      \
    template Tensor<T> batchnorm_forward(const Tensor<T>&, const BatchNormParams<T>&);                            \
    template Tensor<T> batchnorm_forward_training(const Tensor<T>&, BatchNormParams<T>&);                         \
    template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const BatchNormParams<T>&, const Tensor<T>&,  \
                                                  BnMode);                                                        \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                       \
    template Tensor<T> channel_layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);               \
    template ChannelNormGrads<T> channel_layer_norm_backward(const Tensor<T>&, const Tensor<T>&, T,               \
                                                             const Tensor<T>&);                                   \
    template T gelu(T);                                                                                           \
    template T gelu_derivative(T);                                                                                \
    template T sigmoid(T);                                                                                        \
    template Tensor<T> activation_forward(const Tensor<T>&, Activation);                                          \
    template Tensor<T> activation_backward(const Tensor<T>&, Activation, const Tensor<T>&);                       \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                   \
    template void add_inplace(Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                                         \
    template Tensor<T> global_avg_pool_backward(const Shape&, const Tensor<T>&);                                  \
    template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);                               \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                                \
    template Tensor<T> matmul_transposed(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);                              \
    template Tensor<T> softmax_rows(const Tensor<T>&);

RVSAM_INSTANTIATE_NN(float)
RVSAM_INSTANTIATE_NN(double)

#undef RVSAM_INSTANTIATE_NN

}  // namespace rvsam

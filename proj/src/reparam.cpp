// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/reparam.hpp"

#include <cmath>
#include <set>

#include "rvsam/encoder.hpp"

namespace rvsam {
namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string strip(const std::string& s, const std::string& suffix) { return s.substr(0, s.size() - suffix.size()); }

}  // namespace

template <typename T>
ConvParams<T> fuse_conv_bn(const ConvParams<T>& conv, const BatchNormParams<T>& bn) {
    const std::size_t cout = conv.out_channels();
    if (bn.channels() != cout) {
        throw ShapeError("fuse_conv_bn: conv has " + std::to_string(cout) + " outputs, bn has " +
                         std::to_string(bn.channels()) + " channels");
    }
    ConvParams<T> out;
    out.geom = conv.geom;
    out.weight = conv.weight;
    Tensor<T> bias({cout});
    const std::size_t per_out = conv.weight.size() / cout;
    for (std::size_t o = 0; o < cout; ++o) {
        if (!(static_cast<double>(bn.running_var[o]) + static_cast<double>(bn.eps) > 0.0)) {
            throw NumericError("fuse_conv_bn: running_var + eps <= 0 at channel " + std::to_string(o));
        }
        const double scale = static_cast<double>(bn.gamma[o]) /
                             std::sqrt(static_cast<double>(bn.running_var[o]) + static_cast<double>(bn.eps));
        T* w = out.weight.data().data() + o * per_out;
        for (std::size_t i = 0; i < per_out; ++i) w[i] = static_cast<T>(static_cast<double>(w[i]) * scale);
        const double b = conv.bias ? static_cast<double>((*conv.bias)[o]) : 0.0;
        bias[o] = static_cast<T>((b - static_cast<double>(bn.running_mean[o])) * scale +
                                 static_cast<double>(bn.beta[o]));
    }
    out.bias = std::move(bias);
    require_finite(out.weight, "fuse_conv_bn");
    require_finite(*out.bias, "fuse_conv_bn");
    return out;
}

template <typename T>
Tensor<T> pad_kernel_to_3x3(const Tensor<T>& kernel) {
    if (kernel.rank() != 4 || kernel.h() != kernel.w() || (kernel.h() != 1 && kernel.h() != 3)) {
        throw ShapeError("pad_kernel_to_3x3: expected a 1x1 or 3x3 kernel, got " + shape_string(kernel.shape()));
    }
    if (kernel.h() == 3) return kernel;
    Tensor<T> out({kernel.n(), kernel.c(), 3, 3});
    for (std::size_t o = 0; o < kernel.n(); ++o) {
        for (std::size_t i = 0; i < kernel.c(); ++i) out.at(o, i, 1, 1) = kernel.at(o, i, 0, 0);
    }
    return out;
}

template <typename T>
Tensor<T> identity_as_dw3x3(std::size_t channels) {
    Tensor<T> out({channels, 1, 3, 3});
    for (std::size_t c = 0; c < channels; ++c) out.at(c, 0, 1, 1) = T(1);
    return out;
}

template <typename T>
FusedDWConv<T> fuse_repdw(const RepDWBranches<T>& b) {
    const std::size_t c = b.channels();
    if (b.conv3x3.weight.shape() != Shape{c, 1, 3, 3}) {
        throw ShapeError("fuse_repdw: conv3x3 must be depthwise (c,1,3,3), got " +
                         shape_string(b.conv3x3.weight.shape()));
    }
    if (b.conv1x1.weight.shape() != Shape{c, 1, 1, 1}) {
        throw ShapeError("fuse_repdw: conv1x1 must be depthwise (c,1,1,1), got " +
                         shape_string(b.conv1x1.weight.shape()));
    }
    if (b.conv3x3.geom.stride != 1 || b.conv1x1.geom.stride != 1) throw ShapeError("fuse_repdw: branches must have stride 1");
    const ConvParams<T> k3 = fuse_conv_bn(b.conv3x3, b.bn3x3);
    ConvParams<T> sum;
    sum.geom = {1, 1, c};
    sum.weight = k3.weight;
    add_inplace(sum.weight, pad_kernel_to_3x3(b.conv1x1.weight));
    add_inplace(sum.weight, identity_as_dw3x3<T>(c));
    Tensor<T> bias = *k3.bias;
    if (b.conv1x1.bias) add_inplace(bias, *b.conv1x1.bias);
    sum.bias = std::move(bias);
    return {fuse_conv_bn(sum, b.outer_bn)};
}

template <typename T>
Tensor<T> repdw_forward(const Tensor<T>& x, const RepDWBranches<T>& b) {
    const std::size_t c = b.channels();
    Tensor<T> y = batchnorm_forward(conv2d_forward(x, b.conv3x3.weight, nullptr, {1, 1, c}), b.bn3x3);
    add_inplace(y, conv2d_forward(x, b.conv1x1.weight, b.conv1x1.bias ? &*b.conv1x1.bias : nullptr, {1, 0, c}));
    add_inplace(y, x);
    return batchnorm_forward(y, b.outer_bn);
}

template <typename T>
EncoderWeights<T> fuse_encoder(const EncoderWeights<T>& w) {
    if (w.form == WeightForm::deploy) throw DataError("fuse: weights are already fused");
    EncoderWeights<T> out;
    out.form = WeightForm::deploy;
    std::set<std::string> consumed;
    auto take = [&](const std::string& name) -> const Tensor<T>& {
        consumed.insert(name);
        return w.get(name);
    };
    auto take_bn = [&](const std::string& prefix) {
        BatchNormParams<T> p = bn_params(w.tensors, prefix);
        for (const char* leaf : {".bn.weight", ".bn.bias", ".bn.running_mean", ".bn.running_var"}) {
            consumed.insert(prefix + leaf);
        }
        return p;
    };
    auto emit = [&](const std::string& prefix, const ConvParams<T>& conv) {
        out.tensors.emplace(prefix + ".conv.weight", conv.weight);
        out.tensors.emplace(prefix + ".conv.bias", *conv.bias);
    };

    for (const auto& [name, t] : w.tensors) {
        if (!ends_with(name, ".conv1.weight") || ends_with(name, "neck.conv1.weight")) continue;
        const std::string p = strip(name, ".conv1.weight");
        RepDWBranches<T> b;
        b.conv3x3.weight = take(p + ".conv3.conv.weight");
        b.conv3x3.geom = {1, 1, t.dim(0)};
        b.bn3x3 = take_bn(p + ".conv3");
        b.conv1x1.weight = take(name);
        b.conv1x1.bias = take(p + ".conv1.bias");
        b.conv1x1.geom = {1, 0, t.dim(0)};
        b.outer_bn = take_bn(p);
        emit(p, fuse_repdw(b).conv);
    }

    for (const auto& [name, t] : w.tensors) {
        if (consumed.count(name) || !ends_with(name, ".bn.weight")) continue;
        const std::string p = strip(name, ".bn.weight");
        ConvParams<T> conv;
        conv.weight = take(p + ".conv.weight");
        emit(p, fuse_conv_bn(conv, take_bn(p)));
    }

    for (const auto& [name, t] : w.tensors) {
        if (consumed.count(name)) continue;
        if (ends_with(name, ".running_mean") || ends_with(name, ".running_var")) {
            throw ShapeError("fuse: orphan BatchNorm statistic '" + name + "'");
        }
        out.tensors.emplace(name, t);
    }
    return out;
}

#define RVSAM_INSTANTIATE_REPARAM(T)                                                             \
    template ConvParams<T> fuse_conv_bn(const ConvParams<T>&, const BatchNormParams<T>&);       \
    template Tensor<T> pad_kernel_to_3x3(const Tensor<T>&);                                      \
    template Tensor<T> identity_as_dw3x3<T>(std::size_t);                                        \
    template FusedDWConv<T> fuse_repdw(const RepDWBranches<T>&);                                 \
    template Tensor<T> repdw_forward(const Tensor<T>&, const RepDWBranches<T>&);                 \
    template EncoderWeights<T> fuse_encoder(const EncoderWeights<T>&);

RVSAM_INSTANTIATE_REPARAM(float)
RVSAM_INSTANTIATE_REPARAM(double)

#undef RVSAM_INSTANTIATE_REPARAM

}  // namespace rvsam

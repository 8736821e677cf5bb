// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rvsam/nn.hpp"
#include "rvsam/weights.hpp"

namespace rvsam {

/// Train-form depthwise token mixer:
///   outer_bn(bn3x3(conv3x3(x)) + conv1x1(x) + x)
/// conv3x3 has no bias; conv1x1 carries one.
template <typename T>
struct RepDWBranches {
    ConvParams<T> conv3x3;
    BatchNormParams<T> bn3x3;
    ConvParams<T> conv1x1;
    BatchNormParams<T> outer_bn;

    std::size_t channels() const { return conv3x3.out_channels(); }
};

// Single depthwise 3x3 with bias, stride 1, pad 1.
template <typename T>
struct FusedDWConv {
    ConvParams<T> conv;
};

// Absorbs an eval-mode BatchNorm into the preceding convolution.
template <typename T>
ConvParams<T> fuse_conv_bn(const ConvParams<T>& conv, const BatchNormParams<T>& bn);

// Embeds a 1x1 kernel at the centre of a zero 3x3; 3x3 passes through.
template <typename T>
Tensor<T> pad_kernel_to_3x3(const Tensor<T>& kernel);

// Depthwise 3x3 kernel (channels, 1, 3, 3) that is the identity at pad 1.
template <typename T>
Tensor<T> identity_as_dw3x3(std::size_t channels);

template <typename T>
FusedDWConv<T> fuse_repdw(const RepDWBranches<T>& b);

// Unfused reference forward of the branch set.
template <typename T>
Tensor<T> repdw_forward(const Tensor<T>& x, const RepDWBranches<T>& b);

// Converts a train-form encoder into deploy form. Throws when the weights
// are already fused or a branch tensor is missing.
template <typename T>
EncoderWeights<T> fuse_encoder(const EncoderWeights<T>& w);

}  // namespace rvsam

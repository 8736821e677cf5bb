// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rvsam/config.hpp"
#include "rvsam/nn.hpp"
#include "rvsam/weights.hpp"

namespace rvsam {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kNeckNormEps = 1e-6;
inline constexpr std::size_t kSeReduction = 4;

// Name helpers shared by the encoder, the fuser and the converter tooling.
namespace names {
std::string stem(std::size_t i);                                // stem.{i}
std::string block(std::size_t stage, std::size_t index);        // stages.{s}.blocks.{b}
std::string downsample(std::size_t i);                          // downsample.{i}
}  // namespace names

// BatchNorm tensors under `<prefix>.bn.{weight,bias,running_mean,running_var}`.
template <typename T>
BatchNormParams<T> bn_params(const TensorMap<T>& tensors, const std::string& prefix);

/// (1, embed_channels, s, s) with s = EncoderConfig::embedding_size().
template <typename T>
using ImageEmbedding = Tensor<T>;

template <typename T>
struct SeParams {
    ConvParams<T> reduce;  // c -> c/4, followed by ReLU
    ConvParams<T> expand;  // c/4 -> c, followed by sigmoid
};

template <typename T>
struct SeCache {
    Tensor<T> input;
    Tensor<T> pooled;
    Tensor<T> reduced;      // pre-ReLU
    Tensor<T> gate_logits;  // pre-sigmoid
};

template <typename T>
struct SeGrads {
    Tensor<T> grad_x;
    ConvGrads<T> reduce;
    ConvGrads<T> expand;
};

// y = x * sigmoid(expand(relu(reduce(avgpool(x))))) broadcast over h, w.
template <typename T>
Tensor<T> se_forward(const Tensor<T>& x, const SeParams<T>& p, SeCache<T>* cache = nullptr);

template <typename T>
SeGrads<T> se_backward(const SeCache<T>& cache, const SeParams<T>& p, const Tensor<T>& grad_out);

// ---- construction -----------------------------------------------------------

// Seeded initialisation of a train-form encoder, uniform in +-1/sqrt(fan_in).
template <typename T>
EncoderWeights<T> build_encoder(const EncoderConfig& cfg, std::uint64_t seed);

// Checks that every tensor the config requires exists with the right shape,
// and that the weight set matches its declared form.
template <typename T>
void validate_encoder_weights(const EncoderConfig& cfg, const EncoderWeights<T>& w);

// Recovers widths, depths, SE placement and embed channels from tensor
// shapes. Non-structural fields keep the values in `base`.
template <typename T>
EncoderConfig infer_encoder_structure(const EncoderWeights<T>& w, EncoderConfig base = {});

// ---- forward / backward -----------------------------------------------------

template <typename T>
ImageEmbedding<T> encoder_forward(const EncoderConfig& cfg, const EncoderWeights<T>& w, const Tensor<T>& x);

template <typename T>
struct ConvBnCache {
    std::string prefix;
    ConvGeometry geom;
    Tensor<T> input;
    Tensor<T> pre_norm;  // conv output; empty for deploy form
};

template <typename T>
struct MixerCache {
    std::string prefix;
    Tensor<T> input;
    ConvBnCache<T> conv3x3;  // deploy form: the fused conv at `prefix`
    Tensor<T> branch_sum;
};

template <typename T>
struct FfnCache {
    Tensor<T> input;
    ConvBnCache<T> expand;
    Tensor<T> hidden;  // pre-GELU
    ConvBnCache<T> project;
};

template <typename T>
struct BlockCache {
    std::string prefix;
    MixerCache<T> mixer;
    std::optional<SeCache<T>> se;
    FfnCache<T> ffn;
};

template <typename T>
struct EncoderCache {
    WeightForm form = WeightForm::train;
    BnMode mode = BnMode::eval;
    ConvBnCache<T> stem0;
    Tensor<T> stem_hidden;  // pre-GELU output of stem.0
    ConvBnCache<T> stem1;
    std::vector<ConvBnCache<T>> downsample_dw;
    std::vector<ConvBnCache<T>> downsample_pw;
    std::vector<std::vector<BlockCache<T>>> stages;
    Tensor<T> neck_input;
    Tensor<T> neck_conv1;
    Tensor<T> neck_norm1;
    Tensor<T> neck_conv2;
    bool valid = false;
};

template <typename T>
struct TrainForward {
    ImageEmbedding<T> embedding;
    EncoderCache<T> cache;
    // Spatial size of each stage's output, for shape assertions.
    std::array<std::size_t, 4> stage_sizes{};
};

// Forward that records intermediates for encoder_backward. With
// BnMode::batch_stats the running statistics in `w` are updated.
template <typename T>
TrainForward<T> encoder_forward_train(const EncoderConfig& cfg, EncoderWeights<T>& w, const Tensor<T>& x,
                                      BnMode mode = BnMode::eval);

// Gradients for every trainable tensor (running statistics excluded),
// keyed by weight name.
template <typename T>
TensorMap<T> encoder_backward(const EncoderConfig& cfg, const EncoderWeights<T>& w, const EncoderCache<T>& cache,
                              const Tensor<T>& grad_embedding);

// Running statistics are buffers, not trainable parameters.
bool is_trainable_name(const std::string& name);

}  // namespace rvsam

// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "rvsam/config.hpp"
#include "rvsam/image.hpp"
#include "rvsam/weights.hpp"

namespace rvsam {

inline constexpr float kDecoderNormEps = 1e-5f;
inline constexpr float kUpscaleNormEps = 1e-6f;

struct PointPrompt {
    double x = 0;
    double y = 0;
    bool foreground = true;
};

struct BoxPrompt {
    double x1 = 0;
    double y1 = 0;
    double x2 = 0;
    double y2 = 0;
};

/// Points and boxes in original-image pixel coordinates.
struct Prompt {
    std::vector<PointPrompt> points;
    std::vector<BoxPrompt> boxes;

    bool empty() const { return points.empty() && boxes.empty(); }
};

/// Prompt encoder and mask decoder tensors. Names:
///   prompt.{pe_gaussian, point_embeddings.{0..3}, not_a_point, no_mask_embed}
///   iou_token, mask_tokens
///   transformer.layers.{i}.{self_attn, cross_attn_token_to_image, cross_attn_image_to_token}.{q,k,v,out}_proj
///   transformer.layers.{i}.{norm1..norm4, mlp.lin1, mlp.lin2}
///   transformer.{final_attn_token_to_image, norm_final_attn}
///   output_upscaling.{0,1,3}, output_hypernetworks_mlps.{i}.layers.{0,1,2}, iou_prediction_head.layers.{0,1,2}
/// Linear weights are (out, in); transposed convolutions are (in, out, 2, 2).
struct DecoderWeights {
    TensorMap<float> tensors;

    const Tensor<float>& get(const std::string& name) const { return lookup(tensors, name); }
    Tensor<float>& get(const std::string& name) { return lookup(tensors, name); }
    bool contains(const std::string& name) const { return tensors.count(name) != 0; }
    std::size_t parameter_count() const { return element_count(tensors); }
};

// `dim` is the embedding channel count.
DecoderWeights build_decoder(const DecoderConfig& cfg, std::size_t dim, std::uint64_t seed);
void validate_decoder_weights(const DecoderConfig& cfg, std::size_t dim, const DecoderWeights& w);

// [sin(2 pi B p'), cos(2 pi B p')] with p' = 2p - 1 and B = prompt.pe_gaussian (2, d/2).
// Coordinates must lie in [0, 1].
std::vector<float> encode_position(const Tensor<float>& gaussian, double x, double y);

// Positional encoding at the pixel centres of a size x size grid, (1, d, size, size).
Tensor<float> dense_positional_encoding(const Tensor<float>& gaussian, std::size_t size);

// Pixel coordinate in the original image to the normalised [0, 1] frame of the
// padded input.
double normalize_coordinate(double v, const PreprocessRecord& rec);

/// Sparse tokens (t, d): points first, then two corner tokens per box.
Tensor<float> encode_prompts(const Prompt& prompt, const PreprocessRecord& rec, const DecoderWeights& w);

struct MaskPrediction {
    Tensor<float> mask_logits;  // (num_mask_tokens, 4 s, 4 s)
    std::vector<float> iou_scores;
    std::size_t selected = 0;  // argmax of iou_scores
};

MaskPrediction decoder_forward(const DecoderConfig& cfg, const Tensor<float>& embedding, const Tensor<float>& dense_pe,
                               const Tensor<float>& tokens, const DecoderWeights& w);

// Selected logits resized to the original image and passed through sigmoid, (orig_h, orig_w).
Tensor<float> postprocess_mask(const MaskPrediction& mp, const PreprocessRecord& rec);

// Probability > 0.5.
Tensor<float> binarize(const Tensor<float>& prob);

}  // namespace rvsam

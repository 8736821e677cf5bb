// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>

#include "rvsam/decoder.hpp"
#include "rvsam/encoder.hpp"
#include "rvsam/weights_io.hpp"

namespace rvsam {

inline const std::string kEncoderPrefix = "encoder.";
inline const std::string kDecoderPrefix = "decoder.";

/// Encoder plus optional decoder, as stored in one .rvsw file with
/// `encoder.` and `decoder.` name prefixes.
struct Model {
    ModelConfig config;
    EncoderWeights<float> encoder;
    std::optional<DecoderWeights> decoder;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

WeightFile to_weight_file(const EncoderWeights<float>& encoder, const DecoderWeights* decoder);

// Splits and shape-validates against `cfg`. Tensors outside both prefixes are
// an error.
Model model_from_weight_file(const WeightFile& file, const ModelConfig& cfg);

Model load_model(const std::filesystem::path& weights, const ModelConfig& cfg);
void save_model(const std::filesystem::path& path, const Model& model);

}  // namespace rvsam

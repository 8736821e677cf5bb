// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace rvsam {

struct EncoderConfig {
    std::array<std::size_t, 4> widths{80, 160, 320, 640};
    std::array<std::size_t, 4> depths{6, 6, 34, 2};
    double ffn_ratio = 2.0;
    bool se_every_other = true;
    bool final_stride_one = true;
    std::size_t input_size = 1024;
    std::size_t embed_channels = 256;
    std::array<double, 3> pixel_mean{123.675, 116.28, 103.53};
    std::array<double, 3> pixel_std{58.395, 57.12, 57.375};

    // widths [8,16,32,64], depths [1,1,2,1], 64 px input, 16 embedding channels.
    static EncoderConfig toy();

    void validate() const;

    std::size_t stem_channels() const { return widths[0] / 2; }
    std::size_t ffn_hidden(std::size_t stage) const;
    // input_size / 16 with the stride-1 final downsample, input_size / 32 without.
    std::size_t embedding_size() const { return input_size / (final_stride_one ? 16 : 32); }
    bool has_se(std::size_t block) const { return se_every_other && block % 2 == 0; }
};

struct DecoderConfig {
    std::size_t num_heads = 8;
    std::size_t mlp_dim = 2048;
    std::size_t depth = 2;
    std::size_t num_mask_tokens = 4;
    std::size_t iou_head_hidden = 256;
    // Cross-attention projects to dim / attention_downsample channels.
    std::size_t attention_downsample = 2;
    double pe_scale = 1.0;

    static DecoderConfig toy();

    void validate(std::size_t dim) const;
};

struct DistillConfig {
    std::size_t epochs = 8;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double fraction = 1.0;
    // 0 means no cap beyond epochs x images.
    std::size_t max_steps = 0;

    void validate() const;
};

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;

    static ModelConfig toy() { return {EncoderConfig::toy(), DecoderConfig::toy()}; }
    void validate() const {
        encoder.validate();
        decoder.validate(encoder.embed_channels);
    }
};

/// Parsed `key=value` lines. `#` starts a comment; blank lines are ignored.
class ConfigFile {
public:
    static ConfigFile parse(std::string_view text);
    static ConfigFile load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& raw(const std::string& key) const;
    const std::map<std::string, std::string>& values() const { return values_; }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

private:
    std::map<std::string, std::string> values_;
};

// Both reject keys they do not recognise (decoder.* and distill.* keys are
// tolerated by the other reader).
ModelConfig model_config_from(const ConfigFile& file);
DistillConfig distill_config_from(const ConfigFile& file);

std::string to_config_text(const ModelConfig& cfg);

}  // namespace rvsam

// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rvsam/config.hpp"
#include "rvsam/tensor.hpp"

namespace rvsam {

/// 8-bit image with interleaved channels (1 = gray, 3 = RGB), row-major.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch = 0) {
        return pixels[(y * width + x) * channels + ch];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch = 0) const {
        return pixels[(y * width + x) * channels + ch];
    }
    bool empty() const { return width == 0 || height == 0; }
};

// Binary P5 (PGM) and P6 (PPM) with maxval 255.
Image8 read_pnm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image8& gray);
void write_ppm(const std::filesystem::path& path, const Image8& rgb);

// Row-major (h, w) map to a gray image; values are clamped to [0, 1].
Image8 probability_to_gray(const Tensor<float>& map);
// Pixels > 127 map to 1.
Tensor<float> gray_to_binary(const Image8& gray);
// Gray values scaled to [0, 1].
Tensor<float> gray_to_unit(const Image8& gray);

struct PreprocessRecord {
    std::size_t orig_h = 0;
    std::size_t orig_w = 0;
    std::size_t scaled_h = 0;
    std::size_t scaled_w = 0;
    double scale = 1.0;
    std::size_t input_size = 0;
};

struct Preprocessed {
    Tensor<float> tensor;  // (1, 3, input_size, input_size)
    PreprocessRecord record;
};

// Longest side resized to input_size, per-channel (x - mean) / std, zero
// padding on the bottom and right.
Preprocessed preprocess_image(const Image8& image, const EncoderConfig& cfg);

}  // namespace rvsam

// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "rvsam/nn.hpp"

namespace rvsam {
namespace {

class HeaderReader {
public:
    HeaderReader(const std::vector<char>& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::string token() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
        std::string out;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) out += bytes_[pos_++];
        if (out.empty()) throw DataError(path_ + ": truncated PNM header");
        return out;
    }

    std::size_t number() {
        const std::string t = token();
        if (!std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) || t.size() > 9) {
            throw DataError(path_ + ": bad PNM header field '" + t + "'");
        }
        return std::stoul(t);
    }

    // Exactly one whitespace byte separates the header from the raster.
    std::size_t raster_offset() const { return pos_ + 1; }

private:
    const std::vector<char>& bytes_;
    const std::string& path_;
    std::size_t pos_ = 0;
};

void write_pnm(const std::filesystem::path& path, const Image8& img, const char* magic, std::size_t channels) {
    if (img.channels != channels) {
        throw DataError(path.string() + ": expected a " + std::to_string(channels) + "-channel image");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << magic << '\n' << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

Image8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read image " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = path.string();
    HeaderReader header(bytes, name);
    const std::string magic = header.token();
    std::size_t channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw DataError(name + ": unsupported image format '" + magic + "' (binary PGM/PPM only)");
    }
    const std::size_t w = header.number();
    const std::size_t h = header.number();
    const std::size_t maxval = header.number();
    if (maxval != 255) throw DataError(name + ": only maxval 255 is supported");
    if (w == 0 || h == 0) throw DataError(name + ": empty image");
    Image8 img(w, h, channels);
    const std::size_t offset = header.raster_offset();
    if (bytes.size() < offset + img.pixels.size()) throw DataError(name + ": truncated raster");
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset), img.pixels.size(), img.pixels.begin());
    return img;
}

void write_pgm(const std::filesystem::path& path, const Image8& gray) { write_pnm(path, gray, "P5", 1); }

void write_ppm(const std::filesystem::path& path, const Image8& rgb) { write_pnm(path, rgb, "P6", 3); }

Image8 probability_to_gray(const Tensor<float>& map) {
    if (map.rank() != 2) throw ShapeError("probability_to_gray: expected (h, w), got " + shape_string(map.shape()));
    Image8 img(map.dim(1), map.dim(0), 1);
    for (std::size_t i = 0; i < map.size(); ++i) {
        const float v = std::clamp(map[i], 0.0f, 1.0f);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return img;
}

Tensor<float> gray_to_binary(const Image8& gray) {
    if (gray.channels != 1) throw DataError("expected a single-channel mask image");
    Tensor<float> out({gray.height, gray.width});
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) out[i] = gray.pixels[i] > 127 ? 1.0f : 0.0f;
    return out;
}

Tensor<float> gray_to_unit(const Image8& gray) {
    if (gray.channels != 1) throw DataError("expected a single-channel score image");
    Tensor<float> out({gray.height, gray.width});
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) out[i] = static_cast<float>(gray.pixels[i]) / 255.0f;
    return out;
}

Preprocessed preprocess_image(const Image8& image, const EncoderConfig& cfg) {
    if (image.empty()) throw DataError("preprocess: empty image");
    if (image.channels != 1 && image.channels != 3) throw DataError("preprocess: expected 1 or 3 channels");
    const std::size_t s = cfg.input_size;
    PreprocessRecord rec;
    rec.orig_h = image.height;
    rec.orig_w = image.width;
    rec.input_size = s;
    rec.scale = static_cast<double>(s) / static_cast<double>(std::max(image.height, image.width));
    rec.scaled_h = std::clamp<std::size_t>(
        static_cast<std::size_t>(static_cast<double>(image.height) * rec.scale + 0.5), 1, s);
    rec.scaled_w = std::clamp<std::size_t>(
        static_cast<std::size_t>(static_cast<double>(image.width) * rec.scale + 0.5), 1, s);

    Tensor<float> raw = Tensor<float>::nchw(1, 3, image.height, image.width);
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src_c = image.channels == 1 ? 0 : c;
        float* dst = raw.plane(0, c);
        for (std::size_t i = 0; i < image.height * image.width; ++i) {
            dst[i] = static_cast<float>(image.pixels[i * image.channels + src_c]);
        }
    }
    const Tensor<float> resized = bilinear_resize(raw, rec.scaled_h, rec.scaled_w);

    Preprocessed out;
    out.tensor = Tensor<float>::nchw(1, 3, s, s);
    for (std::size_t c = 0; c < 3; ++c) {
        const float mean = static_cast<float>(cfg.pixel_mean[c]);
        const float inv_std = static_cast<float>(1.0 / cfg.pixel_std[c]);
        for (std::size_t y = 0; y < rec.scaled_h; ++y) {
            for (std::size_t x = 0; x < rec.scaled_w; ++x) {
                out.tensor.at(0, c, y, x) = (resized.at(0, c, y, x) - mean) * inv_std;
            }
        }
    }
    out.record = rec;
    return out;
}

}  // namespace rvsam

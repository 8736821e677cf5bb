// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "rvsam/error.hpp"

namespace rvsam {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

template <std::size_t N>
std::array<std::size_t, N> to_size_array(const std::string& key, const std::string& v) {
    const auto items = split_list(v);
    if (items.size() != N) throw ConfigError("config: '" + key + "' expects " + std::to_string(N) + " values");
    std::array<std::size_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = to_size(key, items[i]);
    return out;
}

template <std::size_t N>
std::array<double, N> to_double_array(const std::string& key, const std::string& v) {
    const auto items = split_list(v);
    if (items.size() != N) throw ConfigError("config: '" + key + "' expects " + std::to_string(N) + " values");
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = to_double(key, items[i]);
    return out;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "input_size",        "widths",           "depths",          "ffn_ratio",
        "se_every_other",    "final_stride_one", "embed_channels",  "pixel_mean",
        "pixel_std",         "decoder.num_heads", "decoder.mlp_dim", "decoder.depth",
        "decoder.num_mask_tokens", "decoder.iou_head_hidden", "decoder.attention_downsample",
        "decoder.pe_scale",  "distill.epochs",   "distill.learning_rate", "distill.beta1",
        "distill.beta2",     "distill.adam_eps", "distill.seed",    "distill.fraction",
        "distill.max_steps",
    };
    return keys;
}

void reject_unknown(const ConfigFile& file) {
    for (const auto& [key, value] : file.values()) {
        if (!known_keys().count(key)) throw ConfigError("config: unknown key '" + key + "'");
    }
}

template <typename T, std::size_t N>
std::string join(const std::array<T, N>& a) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < N; ++i) {
        if (i) os << ',';
        os << a[i];
    }
    return os.str();
}

}  // namespace

EncoderConfig EncoderConfig::toy() {
    EncoderConfig c;
    c.widths = {8, 16, 32, 64};
    c.depths = {1, 1, 2, 1};
    c.input_size = 64;
    c.embed_channels = 16;
    return c;
}

std::size_t EncoderConfig::ffn_hidden(std::size_t stage) const {
    return static_cast<std::size_t>(static_cast<double>(widths.at(stage)) * ffn_ratio + 0.5);
}

void EncoderConfig::validate() const {
    for (std::size_t i = 0; i < 4; ++i) {
        if (widths[i] < 1) throw ConfigError("encoder: widths must be >= 1");
        if (depths[i] < 1) throw ConfigError("encoder: depths must be >= 1");
        if (se_every_other && widths[i] % 4 != 0) {
            throw ConfigError("encoder: stage width " + std::to_string(widths[i]) +
                              " not divisible by the SE reduction ratio 4");
        }
        if (ffn_hidden(i) < 1) throw ConfigError("encoder: ffn_ratio yields an empty hidden layer");
    }
    if (widths[0] % 2 != 0) throw ConfigError("encoder: widths[0] must be even (stem uses widths[0] / 2)");
    if (!(ffn_ratio > 0)) throw ConfigError("encoder: ffn_ratio must be positive");
    if (input_size == 0 || input_size % 64 != 0) throw ConfigError("encoder: input_size must be a multiple of 64");
    if (embed_channels < 1) throw ConfigError("encoder: embed_channels must be >= 1");
    for (double s : pixel_std) {
        if (!(s > 0)) throw ConfigError("encoder: pixel_std entries must be positive");
    }
}

DecoderConfig DecoderConfig::toy() {
    DecoderConfig c;
    c.num_heads = 2;
    c.mlp_dim = 32;
    c.iou_head_hidden = 16;
    return c;
}

void DecoderConfig::validate(std::size_t dim) const {
    if (num_heads == 0 || depth == 0 || num_mask_tokens == 0 || attention_downsample == 0 || mlp_dim == 0 ||
        iou_head_hidden == 0) {
        throw ConfigError("decoder: counts must be positive");
    }
    if (dim % 8 != 0) throw ConfigError("decoder: embedding dim must be divisible by 8 for the upscaling path");
    if (dim % 2 != 0) throw ConfigError("decoder: embedding dim must be even");
    if (dim % num_heads != 0 || (dim / attention_downsample) % num_heads != 0) {
        throw ConfigError("decoder: attention dims must divide evenly across heads");
    }
    if (!(pe_scale > 0)) throw ConfigError("decoder: pe_scale must be positive");
}

void DistillConfig::validate() const {
    if (epochs < 1) throw ConfigError("distill: epochs must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("distill: learning_rate must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("distill: betas must be in [0,1)");
    if (!(adam_eps > 0)) throw ConfigError("distill: adam_eps must be positive");
    if (!(fraction > 0 && fraction <= 1)) throw ConfigError("distill: fraction must be in (0,1]");
}

ConfigFile ConfigFile::parse(std::string_view text) {
    ConfigFile file;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (file.values_.count(key)) {
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        file.values_[key] = value;
    }
    return file;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const std::string& ConfigFile::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
}

ModelConfig model_config_from(const ConfigFile& file) {
    reject_unknown(file);
    ModelConfig cfg;
    EncoderConfig& e = cfg.encoder;
    DecoderConfig& d = cfg.decoder;
    const auto& v = file.values();
    auto get = [&](const char* k) -> const std::string* {
        const auto it = v.find(k);
        return it == v.end() ? nullptr : &it->second;
    };
    if (auto s = get("input_size")) e.input_size = to_size("input_size", *s);
    if (auto s = get("widths")) e.widths = to_size_array<4>("widths", *s);
    if (auto s = get("depths")) e.depths = to_size_array<4>("depths", *s);
    if (auto s = get("ffn_ratio")) e.ffn_ratio = to_double("ffn_ratio", *s);
    if (auto s = get("se_every_other")) e.se_every_other = to_bool("se_every_other", *s);
    if (auto s = get("final_stride_one")) e.final_stride_one = to_bool("final_stride_one", *s);
    if (auto s = get("embed_channels")) e.embed_channels = to_size("embed_channels", *s);
    if (auto s = get("pixel_mean")) e.pixel_mean = to_double_array<3>("pixel_mean", *s);
    if (auto s = get("pixel_std")) e.pixel_std = to_double_array<3>("pixel_std", *s);
    if (auto s = get("decoder.num_heads")) d.num_heads = to_size("decoder.num_heads", *s);
    if (auto s = get("decoder.mlp_dim")) d.mlp_dim = to_size("decoder.mlp_dim", *s);
    if (auto s = get("decoder.depth")) d.depth = to_size("decoder.depth", *s);
    if (auto s = get("decoder.num_mask_tokens")) d.num_mask_tokens = to_size("decoder.num_mask_tokens", *s);
    if (auto s = get("decoder.iou_head_hidden")) d.iou_head_hidden = to_size("decoder.iou_head_hidden", *s);
    if (auto s = get("decoder.attention_downsample")) {
        d.attention_downsample = to_size("decoder.attention_downsample", *s);
    }
    if (auto s = get("decoder.pe_scale")) d.pe_scale = to_double("decoder.pe_scale", *s);
    cfg.validate();
    return cfg;
}

DistillConfig distill_config_from(const ConfigFile& file) {
    reject_unknown(file);
    DistillConfig c;
    const auto& v = file.values();
    auto get = [&](const char* k) -> const std::string* {
        const auto it = v.find(k);
        return it == v.end() ? nullptr : &it->second;
    };
    if (auto s = get("distill.epochs")) c.epochs = to_size("distill.epochs", *s);
    if (auto s = get("distill.learning_rate")) c.learning_rate = to_double("distill.learning_rate", *s);
    if (auto s = get("distill.beta1")) c.beta1 = to_double("distill.beta1", *s);
    if (auto s = get("distill.beta2")) c.beta2 = to_double("distill.beta2", *s);
    if (auto s = get("distill.adam_eps")) c.adam_eps = to_double("distill.adam_eps", *s);
    if (auto s = get("distill.seed")) c.seed = to_size("distill.seed", *s);
    if (auto s = get("distill.fraction")) c.fraction = to_double("distill.fraction", *s);
    if (auto s = get("distill.max_steps")) c.max_steps = to_size("distill.max_steps", *s);
    c.validate();
    return c;
}

std::string to_config_text(const ModelConfig& cfg) {
    const EncoderConfig& e = cfg.encoder;
    const DecoderConfig& d = cfg.decoder;
    std::ostringstream os;
    os.precision(17);
    os << "input_size=" << e.input_size << '\n'
       << "widths=" << join(e.widths) << '\n'
       << "depths=" << join(e.depths) << '\n'
       << "ffn_ratio=" << e.ffn_ratio << '\n'
       << "se_every_other=" << (e.se_every_other ? "true" : "false") << '\n'
       << "final_stride_one=" << (e.final_stride_one ? "true" : "false") << '\n'
       << "embed_channels=" << e.embed_channels << '\n'
       << "pixel_mean=" << join(e.pixel_mean) << '\n'
       << "pixel_std=" << join(e.pixel_std) << '\n'
       << "decoder.num_heads=" << d.num_heads << '\n'
       << "decoder.mlp_dim=" << d.mlp_dim << '\n'
       << "decoder.depth=" << d.depth << '\n'
       << "decoder.num_mask_tokens=" << d.num_mask_tokens << '\n'
       << "decoder.iou_head_hidden=" << d.iou_head_hidden << '\n'
       << "decoder.attention_downsample=" << d.attention_downsample << '\n'
       << "decoder.pe_scale=" << d.pe_scale << '\n';
    return os.str();
}

}  // namespace rvsam

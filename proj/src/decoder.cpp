// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rvsam/nn.hpp"

namespace rvsam {
namespace {

enum class Init { uniform_fan_in, normal, ones, zeros };

struct ParamSpec {
    std::string name;
    Shape shape;
    Init init;
    std::size_t fan_in;
};

class SpecList {
public:
    void linear(const std::string& prefix, std::size_t out, std::size_t in) {
        add(prefix + ".weight", {out, in}, Init::uniform_fan_in, in);
        add(prefix + ".bias", {out}, Init::uniform_fan_in, in);
    }
    void norm(const std::string& prefix, std::size_t d) {
        add(prefix + ".weight", {d}, Init::ones, 0);
        add(prefix + ".bias", {d}, Init::zeros, 0);
    }
    void attention(const std::string& prefix, std::size_t d, std::size_t internal) {
        linear(prefix + ".q_proj", internal, d);
        linear(prefix + ".k_proj", internal, d);
        linear(prefix + ".v_proj", internal, d);
        linear(prefix + ".out_proj", d, internal);
    }
    void add(std::string name, Shape shape, Init init, std::size_t fan_in) {
        specs.push_back({std::move(name), std::move(shape), init, fan_in});
    }

    std::vector<ParamSpec> specs;
};

std::string layer(std::size_t i) { return "transformer.layers." + std::to_string(i); }

std::vector<ParamSpec> decoder_param_specs(const DecoderConfig& cfg, std::size_t d) {
    cfg.validate(d);
    const std::size_t cross = d / cfg.attention_downsample;
    SpecList s;
    s.add("prompt.pe_gaussian", {2, d / 2}, Init::normal, 0);
    for (std::size_t i = 0; i < 4; ++i) s.add("prompt.point_embeddings." + std::to_string(i), {1, d}, Init::normal, 0);
    s.add("prompt.not_a_point", {1, d}, Init::normal, 0);
    s.add("prompt.no_mask_embed", {1, d}, Init::normal, 0);
    s.add("iou_token", {1, d}, Init::normal, 0);
    s.add("mask_tokens", {cfg.num_mask_tokens, d}, Init::normal, 0);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::string p = layer(i);
        s.attention(p + ".self_attn", d, d);
        s.norm(p + ".norm1", d);
        s.attention(p + ".cross_attn_token_to_image", d, cross);
        s.norm(p + ".norm2", d);
        s.linear(p + ".mlp.lin1", cfg.mlp_dim, d);
        s.linear(p + ".mlp.lin2", d, cfg.mlp_dim);
        s.norm(p + ".norm3", d);
        s.norm(p + ".norm4", d);
        s.attention(p + ".cross_attn_image_to_token", d, cross);
    }
    s.attention("transformer.final_attn_token_to_image", d, cross);
    s.norm("transformer.norm_final_attn", d);
    s.add("output_upscaling.0.weight", {d, d / 4, 2, 2}, Init::uniform_fan_in, d / 4 * 4);
    s.add("output_upscaling.0.bias", {d / 4}, Init::uniform_fan_in, d / 4 * 4);
    s.norm("output_upscaling.1", d / 4);
    s.add("output_upscaling.3.weight", {d / 4, d / 8, 2, 2}, Init::uniform_fan_in, d / 8 * 4);
    s.add("output_upscaling.3.bias", {d / 8}, Init::uniform_fan_in, d / 8 * 4);
    for (std::size_t i = 0; i < cfg.num_mask_tokens; ++i) {
        const std::string p = "output_hypernetworks_mlps." + std::to_string(i) + ".layers.";
        s.linear(p + "0", d, d);
        s.linear(p + "1", d, d);
        s.linear(p + "2", d / 8, d);
    }
    s.linear("iou_prediction_head.layers.0", cfg.iou_head_hidden, d);
    s.linear("iou_prediction_head.layers.1", cfg.iou_head_hidden, cfg.iou_head_hidden);
    s.linear("iou_prediction_head.layers.2", cfg.num_mask_tokens, cfg.iou_head_hidden);
    return std::move(s.specs);
}

Tensor<float> row(const Tensor<float>& t, std::size_t r) {
    const std::size_t cols = t.dim(1);
    return Tensor<float>({1, cols}, std::vector<float>(t.values().begin() + r * cols, t.values().begin() + (r + 1) * cols));
}

Tensor<float> concat_rows(const std::vector<const Tensor<float>*>& parts) {
    std::size_t rows = 0;
    const std::size_t cols = parts.front()->dim(1);
    for (const auto* p : parts) {
        if (p->rank() != 2 || p->dim(1) != cols) throw ShapeError("concat_rows: column count mismatch");
        rows += p->dim(0);
    }
    std::vector<float> values;
    values.reserve(rows * cols);
    for (const auto* p : parts) values.insert(values.end(), p->values().begin(), p->values().end());
    return Tensor<float>({rows, cols}, std::move(values));
}

// (1, c, h, w) -> (h*w, c)
Tensor<float> to_sequence(const Tensor<float>& x) {
    const std::size_t c = x.c();
    const std::size_t hw = x.h() * x.w();
    Tensor<float> out({hw, c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const float* src = x.plane(0, ch);
        for (std::size_t i = 0; i < hw; ++i) out[i * c + ch] = src[i];
    }
    return out;
}

// (h*w, c) -> (1, c, h, w)
Tensor<float> from_sequence(const Tensor<float>& seq, std::size_t h, std::size_t w) {
    const std::size_t c = seq.dim(1);
    Tensor<float> out = Tensor<float>::nchw(1, c, h, w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        float* dst = out.plane(0, ch);
        for (std::size_t i = 0; i < h * w; ++i) dst[i] = seq[i * c + ch];
    }
    return out;
}

class DecoderRunner {
public:
    DecoderRunner(const DecoderConfig& cfg, const DecoderWeights& w) : cfg_(cfg), w_(w) {}

    Tensor<float> linear(const std::string& prefix, const Tensor<float>& x) const {
        return rvsam::linear(x, w_.get(prefix + ".weight"), &w_.get(prefix + ".bias"));
    }

    Tensor<float> norm(const std::string& prefix, const Tensor<float>& x) const {
        return layer_norm(x, w_.get(prefix + ".weight"), w_.get(prefix + ".bias"), kDecoderNormEps);
    }

    // ReLU between layers, none after the last.
    Tensor<float> mlp(const std::string& prefix, std::size_t layers, Tensor<float> x) const {
        for (std::size_t i = 0; i < layers; ++i) {
            x = linear(prefix + "." + std::to_string(i), x);
            if (i + 1 < layers) x = activation_forward(x, Activation::relu);
        }
        return x;
    }

    Tensor<float> attention(const std::string& prefix, const Tensor<float>& q, const Tensor<float>& k,
                            const Tensor<float>& v) const {
        const Tensor<float> qp = linear(prefix + ".q_proj", q);
        const Tensor<float> kp = linear(prefix + ".k_proj", k);
        const Tensor<float> vp = linear(prefix + ".v_proj", v);
        const std::size_t internal = qp.dim(1);
        const std::size_t heads = cfg_.num_heads;
        const std::size_t hd = internal / heads;
        const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
        Tensor<float> out({qp.dim(0), internal});
        for (std::size_t h = 0; h < heads; ++h) {
            const Tensor<float> qh = columns(qp, h * hd, hd);
            const Tensor<float> kh = columns(kp, h * hd, hd);
            const Tensor<float> vh = columns(vp, h * hd, hd);
            Tensor<float> scores = matmul_transposed(qh, kh);
            for (float& s : scores.data()) s *= scale;
            const Tensor<float> oh = matmul(softmax_rows(scores), vh);
            for (std::size_t r = 0; r < oh.dim(0); ++r) {
                std::copy_n(&oh.at(r, 0), hd, &out.at(r, h * hd));
            }
        }
        return linear(prefix + ".out_proj", out);
    }

    MaskPrediction run(const Tensor<float>& embedding, const Tensor<float>& dense_pe, const Tensor<float>& sparse) const {
        const std::size_t d = embedding.c();
        const std::size_t s = embedding.h();
        if (embedding.rank() != 4 || embedding.n() != 1 || embedding.w() != s) {
            throw ShapeError("decoder: expected a square (1, d, s, s) embedding, got " + shape_string(embedding.shape()));
        }
        if (d != w_.get("iou_token").dim(1)) {
            throw ShapeError("decoder: embedding has " + std::to_string(d) + " channels, decoder expects " +
                             std::to_string(w_.get("iou_token").dim(1)));
        }
        if (dense_pe.shape() != embedding.shape()) {
            throw ShapeError("decoder: dense PE " + shape_string(dense_pe.shape()) + " does not match embedding " +
                             shape_string(embedding.shape()));
        }
        if (sparse.rank() != 2 || sparse.dim(0) == 0 || sparse.dim(1) != d) {
            throw ShapeError("decoder: expected (t>0, " + std::to_string(d) + ") prompt tokens, got " +
                             shape_string(sparse.shape()));
        }

        const Tensor<float> tokens = concat_rows({&w_.get("iou_token"), &w_.get("mask_tokens"), &sparse});
        Tensor<float> keys = to_sequence(embedding);
        const Tensor<float>& no_mask = w_.get("prompt.no_mask_embed");
        for (std::size_t i = 0; i < keys.dim(0); ++i) {
            for (std::size_t c = 0; c < d; ++c) keys.at(i, c) += no_mask[c];
        }
        const Tensor<float> key_pe = to_sequence(dense_pe);
        const Tensor<float>& query_pe = tokens;
        Tensor<float> queries = tokens;

        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            const std::string p = layer(i);
            if (i == 0) {
                queries = attention(p + ".self_attn", queries, queries, queries);
            } else {
                const Tensor<float> q = add(queries, query_pe);
                add_inplace(queries, attention(p + ".self_attn", q, q, queries));
            }
            queries = norm(p + ".norm1", queries);

            Tensor<float> q = add(queries, query_pe);
            Tensor<float> k = add(keys, key_pe);
            add_inplace(queries, attention(p + ".cross_attn_token_to_image", q, k, keys));
            queries = norm(p + ".norm2", queries);

            Tensor<float> m = activation_forward(linear(p + ".mlp.lin1", queries), Activation::relu);
            add_inplace(queries, linear(p + ".mlp.lin2", m));
            queries = norm(p + ".norm3", queries);

            q = add(queries, query_pe);
            add_inplace(keys, attention(p + ".cross_attn_image_to_token", k, q, queries));
            keys = norm(p + ".norm4", keys);
        }
        {
            const Tensor<float> q = add(queries, query_pe);
            const Tensor<float> k = add(keys, key_pe);
            add_inplace(queries, attention("transformer.final_attn_token_to_image", q, k, keys));
            queries = norm("transformer.norm_final_attn", queries);
        }

        Tensor<float> up = from_sequence(keys, s, s);
        up = conv_transpose2d(up, w_.get("output_upscaling.0.weight"), &w_.get("output_upscaling.0.bias"), {2, 0, 1});
        up = channel_layer_norm(up, w_.get("output_upscaling.1.weight"), w_.get("output_upscaling.1.bias"),
                                kUpscaleNormEps);
        up = activation_forward(up, Activation::gelu);
        up = conv_transpose2d(up, w_.get("output_upscaling.3.weight"), &w_.get("output_upscaling.3.bias"), {2, 0, 1});
        up = activation_forward(up, Activation::gelu);

        const std::size_t t = cfg_.num_mask_tokens;
        const std::size_t dc = up.c();
        const std::size_t side = up.h();
        Tensor<float> hyper({t, dc});
        for (std::size_t i = 0; i < t; ++i) {
            const Tensor<float> h = mlp("output_hypernetworks_mlps." + std::to_string(i) + ".layers", 3, row(queries, 1 + i));
            std::copy_n(h.values().begin(), dc, &hyper.at(i, 0));
        }
        const Tensor<float> flat = up.reshaped({dc, side * side});

        MaskPrediction mp;
        mp.mask_logits = matmul(hyper, flat).reshaped({t, side, side});
        const Tensor<float> iou = mlp("iou_prediction_head.layers", 3, row(queries, 0));
        mp.iou_scores.assign(iou.values().begin(), iou.values().end());
        mp.selected = static_cast<std::size_t>(
            std::max_element(mp.iou_scores.begin(), mp.iou_scores.end()) - mp.iou_scores.begin());
        require_finite(mp.mask_logits, "decoder_forward");
        require_finite(iou, "decoder_forward");
        return mp;
    }

private:
    static Tensor<float> columns(const Tensor<float>& x, std::size_t start, std::size_t count) {
        Tensor<float> out({x.dim(0), count});
        for (std::size_t r = 0; r < x.dim(0); ++r) std::copy_n(&x.at(r, start), count, &out.at(r, 0));
        return out;
    }

    const DecoderConfig& cfg_;
    const DecoderWeights& w_;
};

}  // namespace

DecoderWeights build_decoder(const DecoderConfig& cfg, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DecoderWeights w;
    for (const ParamSpec& spec : decoder_param_specs(cfg, dim)) {
        Tensor<float> t(spec.shape);
        switch (spec.init) {
            case Init::uniform_fan_in: {
                const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
                std::uniform_real_distribution<double> dist(-bound, bound);
                for (float& v : t.data()) v = static_cast<float>(dist(rng));
                break;
            }
            case Init::normal:
                for (float& v : t.data()) v = static_cast<float>(normal(rng));
                break;
            case Init::ones:
                t.fill(1.0f);
                break;
            case Init::zeros:
                break;
        }
        if (spec.name == "prompt.pe_gaussian") {
            for (float& v : t.data()) v *= static_cast<float>(cfg.pe_scale);
        }
        w.tensors.emplace(spec.name, std::move(t));
    }
    return w;
}

void validate_decoder_weights(const DecoderConfig& cfg, std::size_t dim, const DecoderWeights& w) {
    const auto specs = decoder_param_specs(cfg, dim);
    for (const ParamSpec& spec : specs) {
        const auto it = w.tensors.find(spec.name);
        if (it == w.tensors.end()) throw ShapeError("decoder weights: missing tensor '" + spec.name + "'");
        if (it->second.shape() != spec.shape) {
            throw ShapeError("decoder weights: '" + spec.name + "' has shape " + shape_string(it->second.shape()) +
                             ", config expects " + shape_string(spec.shape));
        }
    }
    if (specs.size() != w.tensors.size()) {
        for (const auto& [name, t] : w.tensors) {
            const bool known = std::any_of(specs.begin(), specs.end(), [&](const ParamSpec& s) { return s.name == name; });
            if (!known) throw ShapeError("decoder weights: unexpected tensor '" + name + "'");
        }
    }
}

std::vector<float> encode_position(const Tensor<float>& gaussian, double x, double y) {
    if (gaussian.rank() != 2 || gaussian.dim(0) != 2) {
        throw ShapeError("encode_position: expected a (2, d/2) matrix, got " + shape_string(gaussian.shape()));
    }
    if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) {
        throw DataError("encode_position: coordinates (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") outside [0, 1]");
    }
    const std::size_t half = gaussian.dim(1);
    const double px = 2.0 * x - 1.0;
    const double py = 2.0 * y - 1.0;
    std::vector<float> v(2 * half);
    for (std::size_t j = 0; j < half; ++j) {
        const double phase = 2.0 * std::numbers::pi *
                             (px * static_cast<double>(gaussian.at(0, j)) + py * static_cast<double>(gaussian.at(1, j)));
        v[j] = static_cast<float>(std::sin(phase));
        v[half + j] = static_cast<float>(std::cos(phase));
    }
    return v;
}

Tensor<float> dense_positional_encoding(const Tensor<float>& gaussian, std::size_t size) {
    const std::size_t d = 2 * gaussian.dim(1);
    Tensor<float> out = Tensor<float>::nchw(1, d, size, size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const auto v = encode_position(gaussian, (static_cast<double>(x) + 0.5) / static_cast<double>(size),
                                           (static_cast<double>(y) + 0.5) / static_cast<double>(size));
            for (std::size_t c = 0; c < d; ++c) out.at(0, c, y, x) = v[c];
        }
    }
    return out;
}

double normalize_coordinate(double v, const PreprocessRecord& rec) {
    if (rec.input_size == 0) throw DataError("prompt: missing preprocess record");
    return std::clamp((v * rec.scale + 0.5) / static_cast<double>(rec.input_size), 0.0, 1.0);
}

Tensor<float> encode_prompts(const Prompt& prompt, const PreprocessRecord& rec, const DecoderWeights& w) {
    if (prompt.empty()) throw DataError("prompt: no points or boxes");
    const Tensor<float>& gaussian = w.get("prompt.pe_gaussian");
    const std::size_t d = 2 * gaussian.dim(1);
    const std::size_t count = prompt.points.size() + 2 * prompt.boxes.size();
    Tensor<float> tokens({count, d});
    std::size_t r = 0;
    auto emit = [&](double x, double y, std::size_t kind) {
        const auto pe = encode_position(gaussian, normalize_coordinate(x, rec), normalize_coordinate(y, rec));
        const Tensor<float>& type = w.get("prompt.point_embeddings." + std::to_string(kind));
        for (std::size_t c = 0; c < d; ++c) tokens.at(r, c) = pe[c] + type[c];
        ++r;
    };
    for (const PointPrompt& p : prompt.points) emit(p.x, p.y, p.foreground ? 1 : 0);
    for (const BoxPrompt& b : prompt.boxes) {
        if (!(b.x1 < b.x2 && b.y1 < b.y2)) throw DataError("prompt: box corners must satisfy x1 < x2 and y1 < y2");
        emit(b.x1, b.y1, 2);
        emit(b.x2, b.y2, 3);
    }
    return tokens;
}

MaskPrediction decoder_forward(const DecoderConfig& cfg, const Tensor<float>& embedding, const Tensor<float>& dense_pe,
                               const Tensor<float>& tokens, const DecoderWeights& w) {
    return DecoderRunner(cfg, w).run(embedding, dense_pe, tokens);
}

Tensor<float> postprocess_mask(const MaskPrediction& mp, const PreprocessRecord& rec) {
    if (rec.input_size == 0 || rec.orig_h == 0 || rec.orig_w == 0) {
        throw DataError("postprocess: missing preprocess record");
    }
    const std::size_t side = mp.mask_logits.dim(1);
    const std::size_t plane = side * side;
    Tensor<float> sel = Tensor<float>::nchw(1, 1, side, mp.mask_logits.dim(2));
    std::copy_n(mp.mask_logits.values().begin() + static_cast<std::ptrdiff_t>(mp.selected * plane), plane,
                sel.values().begin());
    const Tensor<float> full = bilinear_resize(sel, rec.input_size, rec.input_size);
    Tensor<float> crop = Tensor<float>::nchw(1, 1, rec.scaled_h, rec.scaled_w);
    for (std::size_t y = 0; y < rec.scaled_h; ++y) {
        std::copy_n(&full.at(0, 0, y, 0), rec.scaled_w, &crop.at(0, 0, y, 0));
    }
    Tensor<float> out = bilinear_resize(crop, rec.orig_h, rec.orig_w);
    for (float& v : out.data()) v = sigmoid(v);
    return out.reshaped({rec.orig_h, rec.orig_w});
}

Tensor<float> binarize(const Tensor<float>& prob) {
    Tensor<float> out(prob.shape());
    for (std::size_t i = 0; i < prob.size(); ++i) out[i] = prob[i] > 0.5f ? 1.0f : 0.0f;
    return out;
}

}  // namespace rvsam

// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/encoder.hpp"

#include <cmath>
#include <random>

namespace rvsam {

namespace names {
std::string stem(std::size_t i) { return "stem." + std::to_string(i); }
std::string block(std::size_t stage, std::size_t index) {
    return "stages." + std::to_string(stage) + ".blocks." + std::to_string(index);
}
std::string downsample(std::size_t i) { return "downsample." + std::to_string(i); }
}  // namespace names

bool is_trainable_name(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        const std::string s(suffix);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return !ends_with(".running_mean") && !ends_with(".running_var");
}

template <typename T>
BatchNormParams<T> bn_params(const TensorMap<T>& tensors, const std::string& prefix) {
    BatchNormParams<T> p;
    p.gamma = lookup(tensors, prefix + ".bn.weight");
    p.beta = lookup(tensors, prefix + ".bn.bias");
    p.running_mean = lookup(tensors, prefix + ".bn.running_mean");
    p.running_var = lookup(tensors, prefix + ".bn.running_var");
    p.eps = static_cast<T>(kBatchNormEps);
    p.momentum = static_cast<T>(kBatchNormMomentum);
    return p;
}

namespace {

enum class Init { conv_weight, conv_bias, ones, zeros };

struct ParamSpec {
    std::string name;
    Shape shape;
    Init init;
    std::size_t fan_in;
};

class SpecBuilder {
public:
    explicit SpecBuilder(WeightForm form) : form_(form) {}

    void conv_bn(const std::string& prefix, std::size_t cout, std::size_t cin_g, std::size_t k) {
        const std::size_t fan_in = cin_g * k * k;
        add(prefix + ".conv.weight", {cout, cin_g, k, k}, Init::conv_weight, fan_in);
        if (form_ == WeightForm::deploy) {
            add(prefix + ".conv.bias", {cout}, Init::zeros, fan_in);
            return;
        }
        bn(prefix, cout);
    }

    void bn(const std::string& prefix, std::size_t c) {
        add(prefix + ".bn.weight", {c}, Init::ones, 0);
        add(prefix + ".bn.bias", {c}, Init::zeros, 0);
        add(prefix + ".bn.running_mean", {c}, Init::zeros, 0);
        add(prefix + ".bn.running_var", {c}, Init::ones, 0);
    }

    void conv(const std::string& prefix, std::size_t cout, std::size_t cin_g, std::size_t k, bool bias) {
        const std::size_t fan_in = cin_g * k * k;
        add(prefix + ".weight", {cout, cin_g, k, k}, Init::conv_weight, fan_in);
        if (bias) add(prefix + ".bias", {cout}, Init::conv_bias, fan_in);
    }

    void norm(const std::string& prefix, std::size_t c) {
        add(prefix + ".weight", {c}, Init::ones, 0);
        add(prefix + ".bias", {c}, Init::zeros, 0);
    }

    WeightForm form() const { return form_; }
    std::vector<ParamSpec> take() { return std::move(specs_); }

private:
    void add(std::string name, Shape shape, Init init, std::size_t fan_in) {
        specs_.push_back({std::move(name), std::move(shape), init, fan_in});
    }

    WeightForm form_;
    std::vector<ParamSpec> specs_;
};

// Parameter list in construction order.
std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& cfg, WeightForm form) {
    SpecBuilder b(form);
    b.conv_bn(names::stem(0), cfg.stem_channels(), 3, 3);
    b.conv_bn(names::stem(1), cfg.widths[0], cfg.stem_channels(), 3);
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t c = cfg.widths[s];
        if (s > 0) {
            const std::string ds = names::downsample(s - 1);
            b.conv_bn(ds + ".dw", cfg.widths[s - 1], 1, 3);
            b.conv_bn(ds + ".pw", c, cfg.widths[s - 1], 1);
        }
        for (std::size_t j = 0; j < cfg.depths[s]; ++j) {
            const std::string p = names::block(s, j);
            if (form == WeightForm::train) {
                b.conv_bn(p + ".mixer.conv3", c, 1, 3);
                b.conv(p + ".mixer.conv1", c, 1, 1, true);
                b.bn(p + ".mixer", c);
            } else {
                b.conv_bn(p + ".mixer", c, 1, 3);
            }
            if (cfg.has_se(j)) {
                b.conv(p + ".se.reduce", c / kSeReduction, c, 1, true);
                b.conv(p + ".se.expand", c, c / kSeReduction, 1, true);
            }
            const std::size_t hidden = cfg.ffn_hidden(s);
            b.conv_bn(p + ".ffn.expand", hidden, c, 1);
            b.conv_bn(p + ".ffn.project", c, hidden, 1);
        }
    }
    b.conv("neck.conv1", cfg.embed_channels, cfg.widths[3], 1, false);
    b.norm("neck.norm1", cfg.embed_channels);
    b.conv("neck.conv2", cfg.embed_channels, cfg.embed_channels, 3, false);
    b.norm("neck.norm2", cfg.embed_channels);
    return b.take();
}

ConvGeometry dw3x3(std::size_t channels, std::size_t stride) { return {stride, 1, channels}; }
constexpr ConvGeometry kPointwise{1, 0, 1};

template <typename T>
ConvParams<T> conv_params(const TensorMap<T>& m, const std::string& prefix, ConvGeometry g, bool bias) {
    ConvParams<T> p;
    p.weight = lookup(m, prefix + ".weight");
    if (bias) p.bias = lookup(m, prefix + ".bias");
    p.geom = g;
    return p;
}

template <typename T>
SeParams<T> se_params(const TensorMap<T>& m, const std::string& prefix) {
    return {conv_params(m, prefix + ".se.reduce", kPointwise, true),
            conv_params(m, prefix + ".se.expand", kPointwise, true)};
}

template <typename T>
void accumulate(TensorMap<T>& grads, const std::string& name, const Tensor<T>& g) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        grads.emplace(name, g);
    } else {
        add_inplace(it->second, g);
    }
}

template <typename T>
class ForwardRunner {
public:
    ForwardRunner(const EncoderConfig& cfg, const EncoderWeights<T>& w, EncoderWeights<T>* mutable_w, BnMode mode,
                  EncoderCache<T>* cache)
        : cfg_(cfg), w_(w), mutable_w_(mutable_w), mode_(mode), cache_(cache) {}

    ImageEmbedding<T> run(const Tensor<T>& x, std::array<std::size_t, 4>& stage_sizes) {
        const std::size_t s = cfg_.input_size;
        if (x.shape() != Shape{1, 3, s, s}) {
            throw ShapeError("encoder: expected input (1,3," + std::to_string(s) + "," + std::to_string(s) +
                             "), got " + shape_string(x.shape()));
        }
        if (cache_) {
            cache_->form = w_.form;
            cache_->mode = mode_;
            cache_->stages.assign(4, {});
            cache_->downsample_dw.assign(3, {});
            cache_->downsample_pw.assign(3, {});
        }
        Tensor<T> h = conv_bn(names::stem(0), x, {2, 1, 1}, cache_ ? &cache_->stem0 : nullptr);
        if (cache_) cache_->stem_hidden = h;
        h = activation_forward(h, Activation::gelu);
        h = conv_bn(names::stem(1), h, {2, 1, 1}, cache_ ? &cache_->stem1 : nullptr);

        for (std::size_t st = 0; st < 4; ++st) {
            if (st > 0) {
                const std::string ds = names::downsample(st - 1);
                const bool last = st == 3;
                const std::size_t stride = last && cfg_.final_stride_one ? 1 : 2;
                h = conv_bn(ds + ".dw", h, dw3x3(cfg_.widths[st - 1], stride),
                            cache_ ? &cache_->downsample_dw[st - 1] : nullptr);
                h = conv_bn(ds + ".pw", h, kPointwise, cache_ ? &cache_->downsample_pw[st - 1] : nullptr);
            }
            for (std::size_t j = 0; j < cfg_.depths[st]; ++j) {
                BlockCache<T>* bc = nullptr;
                if (cache_) bc = &cache_->stages[st].emplace_back();
                h = block(st, j, h, bc);
            }
            stage_sizes[st] = h.h();
        }

        if (cache_) cache_->neck_input = h;
        const T ln_eps = static_cast<T>(kNeckNormEps);
        Tensor<T> n = conv2d_forward(h, w_.get("neck.conv1.weight"), nullptr, kPointwise);
        if (cache_) cache_->neck_conv1 = n;
        n = channel_layer_norm(n, w_.get("neck.norm1.weight"), w_.get("neck.norm1.bias"), ln_eps);
        if (cache_) cache_->neck_norm1 = n;
        n = conv2d_forward(n, w_.get("neck.conv2.weight"), nullptr, ConvGeometry{1, 1, 1});
        if (cache_) cache_->neck_conv2 = n;
        n = channel_layer_norm(n, w_.get("neck.norm2.weight"), w_.get("neck.norm2.bias"), ln_eps);
        if (cache_) cache_->valid = true;
        return n;
    }

private:
    Tensor<T> conv_bn(const std::string& prefix, const Tensor<T>& x, ConvGeometry g, ConvBnCache<T>* c) {
        if (c) {
            c->prefix = prefix;
            c->geom = g;
            c->input = x;
        }
        const Tensor<T>& weight = w_.get(prefix + ".conv.weight");
        if (w_.form == WeightForm::deploy) {
            return conv2d_forward(x, weight, &w_.get(prefix + ".conv.bias"), g);
        }
        Tensor<T> z = conv2d_forward(x, weight, nullptr, g);
        if (c) c->pre_norm = z;
        return batch_norm(prefix, z);
    }

    Tensor<T> batch_norm(const std::string& prefix, const Tensor<T>& z) {
        if (mode_ == BnMode::eval) return batchnorm_forward(z, bn_params(w_.tensors, prefix));
        BatchNormParams<T> p = bn_params(mutable_w_->tensors, prefix);
        Tensor<T> y = batchnorm_forward_training(z, p);
        mutable_w_->get(prefix + ".bn.running_mean") = p.running_mean;
        mutable_w_->get(prefix + ".bn.running_var") = p.running_var;
        return y;
    }

    Tensor<T> block(std::size_t stage, std::size_t j, const Tensor<T>& x, BlockCache<T>* bc) {
        const std::string p = names::block(stage, j);
        const std::size_t c = cfg_.widths[stage];
        if (bc) bc->prefix = p;

        Tensor<T> m = mixer(p + ".mixer", c, x, bc ? &bc->mixer : nullptr);
        if (cfg_.has_se(j)) {
            SeCache<T>* sc = nullptr;
            if (bc) sc = &bc->se.emplace();
            m = se_forward(m, se_params(w_.tensors, p), sc);
        }
        FfnCache<T>* fc = bc ? &bc->ffn : nullptr;
        if (fc) fc->input = m;
        Tensor<T> f = conv_bn(p + ".ffn.expand", m, kPointwise, fc ? &fc->expand : nullptr);
        if (fc) fc->hidden = f;
        f = activation_forward(f, Activation::gelu);
        f = conv_bn(p + ".ffn.project", f, kPointwise, fc ? &fc->project : nullptr);
        add_inplace(f, m);
        return f;
    }

    Tensor<T> mixer(const std::string& prefix, std::size_t c, const Tensor<T>& x, MixerCache<T>* mc) {
        if (mc) {
            mc->prefix = prefix;
            mc->input = x;
        }
        if (w_.form == WeightForm::deploy) return conv_bn(prefix, x, dw3x3(c, 1), mc ? &mc->conv3x3 : nullptr);
        Tensor<T> sum = conv_bn(prefix + ".conv3", x, dw3x3(c, 1), mc ? &mc->conv3x3 : nullptr);
        add_inplace(sum, conv2d_forward(x, w_.get(prefix + ".conv1.weight"), &w_.get(prefix + ".conv1.bias"),
                                        ConvGeometry{1, 0, c}));
        add_inplace(sum, x);
        if (mc) mc->branch_sum = sum;
        return batch_norm(prefix, sum);
    }

    const EncoderConfig& cfg_;
    const EncoderWeights<T>& w_;
    EncoderWeights<T>* mutable_w_;
    BnMode mode_;
    EncoderCache<T>* cache_;
};

template <typename T>
class BackwardRunner {
public:
    BackwardRunner(const EncoderConfig& cfg, const EncoderWeights<T>& w, const EncoderCache<T>& cache)
        : cfg_(cfg), w_(w), cache_(cache) {}

    TensorMap<T> run(const Tensor<T>& grad_embedding) {
        const T ln_eps = static_cast<T>(kNeckNormEps);
        auto n2 = channel_layer_norm_backward(cache_.neck_conv2, w_.get("neck.norm2.weight"), ln_eps, grad_embedding);
        accumulate(grads_, "neck.norm2.weight", n2.grad_gamma);
        accumulate(grads_, "neck.norm2.bias", n2.grad_beta);
        auto c2 = conv2d_backward(cache_.neck_norm1, w_.get("neck.conv2.weight"), ConvGeometry{1, 1, 1}, n2.grad_x);
        accumulate(grads_, "neck.conv2.weight", c2.grad_w);
        auto n1 = channel_layer_norm_backward(cache_.neck_conv1, w_.get("neck.norm1.weight"), ln_eps, c2.grad_x);
        accumulate(grads_, "neck.norm1.weight", n1.grad_gamma);
        accumulate(grads_, "neck.norm1.bias", n1.grad_beta);
        auto c1 = conv2d_backward(cache_.neck_input, w_.get("neck.conv1.weight"), kPointwise, n1.grad_x);
        accumulate(grads_, "neck.conv1.weight", c1.grad_w);

        Tensor<T> g = std::move(c1.grad_x);
        for (std::size_t st = 4; st-- > 0;) {
            const auto& blocks = cache_.stages[st];
            for (std::size_t j = blocks.size(); j-- > 0;) g = block(st, blocks[j], g);
            if (st > 0) {
                g = conv_bn(cache_.downsample_pw[st - 1], g);
                g = conv_bn(cache_.downsample_dw[st - 1], g);
            }
        }
        g = conv_bn(cache_.stem1, g);
        g = activation_backward(cache_.stem_hidden, Activation::gelu, g);
        conv_bn(cache_.stem0, g);
        return std::move(grads_);
    }

private:
    Tensor<T> conv_bn(const ConvBnCache<T>& c, const Tensor<T>& grad_out) {
        const Tensor<T>& weight = w_.get(c.prefix + ".conv.weight");
        if (cache_.form == WeightForm::deploy) {
            auto cg = conv2d_backward(c.input, weight, c.geom, grad_out);
            accumulate(grads_, c.prefix + ".conv.weight", cg.grad_w);
            accumulate(grads_, c.prefix + ".conv.bias", cg.grad_b);
            return std::move(cg.grad_x);
        }
        const Tensor<T> gz = batch_norm(c.prefix, c.pre_norm, grad_out);
        auto cg = conv2d_backward(c.input, weight, c.geom, gz);
        accumulate(grads_, c.prefix + ".conv.weight", cg.grad_w);
        return std::move(cg.grad_x);
    }

    Tensor<T> batch_norm(const std::string& prefix, const Tensor<T>& z, const Tensor<T>& grad_out) {
        auto bg = batchnorm_backward(z, bn_params(w_.tensors, prefix), grad_out, cache_.mode);
        accumulate(grads_, prefix + ".bn.weight", bg.grad_gamma);
        accumulate(grads_, prefix + ".bn.bias", bg.grad_beta);
        return std::move(bg.grad_x);
    }

    Tensor<T> block(std::size_t stage, const BlockCache<T>& bc, const Tensor<T>& grad_out) {
        const FfnCache<T>& fc = bc.ffn;
        Tensor<T> g = conv_bn(fc.project, grad_out);
        g = activation_backward(fc.hidden, Activation::gelu, g);
        g = conv_bn(fc.expand, g);
        add_inplace(g, grad_out);

        if (bc.se) {
            auto sg = se_backward(*bc.se, se_params(w_.tensors, bc.prefix), g);
            accumulate(grads_, bc.prefix + ".se.reduce.weight", sg.reduce.grad_w);
            accumulate(grads_, bc.prefix + ".se.reduce.bias", sg.reduce.grad_b);
            accumulate(grads_, bc.prefix + ".se.expand.weight", sg.expand.grad_w);
            accumulate(grads_, bc.prefix + ".se.expand.bias", sg.expand.grad_b);
            g = std::move(sg.grad_x);
        }
        return mixer(cfg_.widths[stage], bc.mixer, g);
    }

    Tensor<T> mixer(std::size_t c, const MixerCache<T>& mc, const Tensor<T>& grad_out) {
        if (cache_.form == WeightForm::deploy) return conv_bn(mc.conv3x3, grad_out);
        const Tensor<T> gs = batch_norm(mc.prefix, mc.branch_sum, grad_out);
        Tensor<T> gx = gs;
        auto c1 = conv2d_backward(mc.input, w_.get(mc.prefix + ".conv1.weight"), ConvGeometry{1, 0, c}, gs);
        accumulate(grads_, mc.prefix + ".conv1.weight", c1.grad_w);
        accumulate(grads_, mc.prefix + ".conv1.bias", c1.grad_b);
        add_inplace(gx, c1.grad_x);
        add_inplace(gx, conv_bn(mc.conv3x3, gs));
        return gx;
    }

    const EncoderConfig& cfg_;
    const EncoderWeights<T>& w_;
    const EncoderCache<T>& cache_;
    TensorMap<T> grads_;
};

}  // namespace

// ---- squeeze-and-excitation ---------------------------------------------------

template <typename T>
Tensor<T> se_forward(const Tensor<T>& x, const SeParams<T>& p, SeCache<T>* cache) {
    if (x.rank() != 4) throw ShapeError("se: input must be rank 4");
    if (x.c() % kSeReduction != 0) throw ShapeError("se: channel count not divisible by 4");
    if (p.reduce.out_channels() != x.c() / kSeReduction || p.expand.out_channels() != x.c()) {
        throw ShapeError("se: reduce/expand weights do not match " + std::to_string(x.c()) + " channels");
    }
    Tensor<T> pooled = global_avg_pool(x);
    Tensor<T> reduced = conv2d_forward(pooled, p.reduce);
    Tensor<T> logits = conv2d_forward(activation_forward(reduced, Activation::relu), p.expand);
    Tensor<T> y(x.shape());
    const std::size_t hw = x.h() * x.w();
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T gate = sigmoid(logits.at(n, c, 0, 0));
            const T* src = x.plane(n, c);
            T* dst = y.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * gate;
        }
    }
    if (cache) {
        cache->input = x;
        cache->pooled = std::move(pooled);
        cache->reduced = std::move(reduced);
        cache->gate_logits = std::move(logits);
    }
    return y;
}

template <typename T>
SeGrads<T> se_backward(const SeCache<T>& cache, const SeParams<T>& p, const Tensor<T>& grad_out) {
    const Tensor<T>& x = cache.input;
    require_same_shape(x, grad_out, "se_backward");
    const std::size_t hw = x.h() * x.w();
    SeGrads<T> g;
    g.grad_x = Tensor<T>(x.shape());
    Tensor<T> grad_logits(cache.gate_logits.shape());
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const T gate = sigmoid(cache.gate_logits.at(n, c, 0, 0));
            const T* src = x.plane(n, c);
            const T* go = grad_out.plane(n, c);
            T* gx = g.grad_x.plane(n, c);
            T dgate = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                gx[i] = go[i] * gate;
                dgate += go[i] * src[i];
            }
            grad_logits.at(n, c, 0, 0) = dgate * gate * (T(1) - gate);
        }
    }
    const Tensor<T> activated = activation_forward(cache.reduced, Activation::relu);
    g.expand = conv2d_backward(activated, p.expand, grad_logits);
    const Tensor<T> grad_reduced = activation_backward(cache.reduced, Activation::relu, g.expand.grad_x);
    g.reduce = conv2d_backward(cache.pooled, p.reduce, grad_reduced);
    add_inplace(g.grad_x, global_avg_pool_backward(x.shape(), g.reduce.grad_x));
    return g;
}

// ---- construction -----------------------------------------------------------

template <typename T>
EncoderWeights<T> build_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    EncoderWeights<T> w;
    w.form = WeightForm::train;
    for (const ParamSpec& spec : encoder_param_specs(cfg, WeightForm::train)) {
        Tensor<T> t(spec.shape);
        switch (spec.init) {
            case Init::conv_weight: {
                // He-uniform with a = sqrt(5): bound 1 / sqrt(fan_in).
                const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
                std::uniform_real_distribution<double> dist(-bound, bound);
                for (T& v : t.data()) v = static_cast<T>(dist(rng));
                break;
            }
            case Init::conv_bias: {
                const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
                std::uniform_real_distribution<double> dist(-bound, bound);
                for (T& v : t.data()) v = static_cast<T>(dist(rng));
                break;
            }
            case Init::ones:
                t.fill(T(1));
                break;
            case Init::zeros:
                break;
        }
        w.tensors.emplace(spec.name, std::move(t));
    }
    return w;
}

template <typename T>
void validate_encoder_weights(const EncoderConfig& cfg, const EncoderWeights<T>& w) {
    cfg.validate();
    const auto specs = encoder_param_specs(cfg, w.form);
    for (const ParamSpec& spec : specs) {
        const auto it = w.tensors.find(spec.name);
        if (it == w.tensors.end()) {
            throw ShapeError("encoder weights: missing tensor '" + spec.name + "' for " +
                             (w.form == WeightForm::train ? "train" : "deploy") + " form");
        }
        if (it->second.shape() != spec.shape) {
            throw ShapeError("encoder weights: '" + spec.name + "' has shape " + shape_string(it->second.shape()) +
                             ", config expects " + shape_string(spec.shape));
        }
    }
    if (specs.size() != w.tensors.size()) {
        for (const auto& [name, t] : w.tensors) {
            bool known = false;
            for (const ParamSpec& s : specs) known = known || s.name == name;
            if (!known) throw ShapeError("encoder weights: unexpected tensor '" + name + "'");
        }
    }
}

template <typename T>
EncoderConfig infer_encoder_structure(const EncoderWeights<T>& w, EncoderConfig base) {
    EncoderConfig cfg = base;
    for (std::size_t s = 0; s < 4; ++s) {
        std::size_t depth = 0;
        while (w.contains(names::block(s, depth) + ".ffn.project.conv.weight")) ++depth;
        if (depth == 0) throw ShapeError("encoder weights: stage " + std::to_string(s) + " has no blocks");
        cfg.depths[s] = depth;
        const Tensor<T>& project = w.get(names::block(s, 0) + ".ffn.project.conv.weight");
        cfg.widths[s] = project.dim(0);
        if (s == 0) {
            cfg.ffn_ratio = static_cast<double>(project.dim(1)) / static_cast<double>(project.dim(0));
        }
    }
    cfg.se_every_other = w.contains(names::block(0, 0) + ".se.reduce.weight");
    cfg.embed_channels = w.get("neck.conv1.weight").dim(0);
    return cfg;
}

// ---- forward / backward -----------------------------------------------------

template <typename T>
ImageEmbedding<T> encoder_forward(const EncoderConfig& cfg, const EncoderWeights<T>& w, const Tensor<T>& x) {
    std::array<std::size_t, 4> sizes{};
    return ForwardRunner<T>(cfg, w, nullptr, BnMode::eval, nullptr).run(x, sizes);
}

template <typename T>
TrainForward<T> encoder_forward_train(const EncoderConfig& cfg, EncoderWeights<T>& w, const Tensor<T>& x,
                                      BnMode mode) {
    TrainForward<T> out;
    out.embedding = ForwardRunner<T>(cfg, w, &w, mode, &out.cache).run(x, out.stage_sizes);
    return out;
}

template <typename T>
TensorMap<T> encoder_backward(const EncoderConfig& cfg, const EncoderWeights<T>& w, const EncoderCache<T>& cache,
                              const Tensor<T>& grad_embedding) {
    if (!cache.valid) throw Error("encoder_backward: missing training cache");
    if (cache.form != w.form) throw ShapeError("encoder_backward: cache form differs from weight form");
    if (grad_embedding.shape() != cache.neck_conv2.shape()) {
        throw ShapeError("encoder_backward: grad_embedding shape " + shape_string(grad_embedding.shape()) +
                         " differs from embedding " + shape_string(cache.neck_conv2.shape()));
    }
    return BackwardRunner<T>(cfg, w, cache).run(grad_embedding);
}

#define RVSAM_INSTANTIATE_ENCODER(T)                                                                             \
    template BatchNormParams<T> bn_params(const TensorMap<T>&, const std::string&);                               \
    template Tensor<T> se_forward(const Tensor<T>&, const SeParams<T>&, SeCache<T>*);                             \
    template SeGrads<T> se_backward(const SeCache<T>&, const SeParams<T>&, const Tensor<T>&);                     \
    template EncoderWeights<T> build_encoder(const EncoderConfig&, std::uint64_t);                                \
    template void validate_encoder_weights(const EncoderConfig&, const EncoderWeights<T>&);                       \
    template EncoderConfig infer_encoder_structure(const EncoderWeights<T>&, EncoderConfig);                      \
    template ImageEmbedding<T> encoder_forward(const EncoderConfig&, const EncoderWeights<T>&, const Tensor<T>&); \
    template TrainForward<T> encoder_forward_train(const EncoderConfig&, EncoderWeights<T>&, const Tensor<T>&,    \
                                                   BnMode);                                                       \
    template TensorMap<T> encoder_backward(const EncoderConfig&, const EncoderWeights<T>&,                        \
                                           const EncoderCache<T>&, const Tensor<T>&);

RVSAM_INSTANTIATE_ENCODER(float)
RVSAM_INSTANTIATE_ENCODER(double)

#undef RVSAM_INSTANTIATE_ENCODER

}  // namespace rvsam

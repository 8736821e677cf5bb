// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "rvsam/image.hpp"
#include "rvsam/weights_io.hpp"

namespace rvsam {
namespace {

constexpr const char* kManifestName = "manifest.txt";

std::string entry_name(const std::string& id) { return "emb/" + id; }

std::filesystem::path entry_path(const std::filesystem::path& dir, const std::string& id) {
    return dir / (id + ".rvsw");
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename T>
double loss_at(const EncoderConfig& cfg, EncoderWeights<T> w, const Tensor<T>& input, const Tensor<T>& target,
               BnMode mode) {
    const TrainForward<T> tf = encoder_forward_train(cfg, w, input, mode);
    return mse_loss(tf.embedding, target).loss;
}

}  // namespace

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& student, const Tensor<T>& teacher) {
    require_same_shape(student, teacher, "mse_loss");
    if (student.empty()) throw ShapeError("mse_loss: empty tensors");
    LossResult<T> r;
    r.grad = Tensor<T>(student.shape());
    const double n = static_cast<double>(student.size());
    double sum = 0;
    for (std::size_t i = 0; i < student.size(); ++i) {
        const double d = static_cast<double>(student[i]) - static_cast<double>(teacher[i]);
        sum += d * d;
        r.grad[i] = static_cast<T>(2.0 * d / n);
    }
    r.loss = sum / n;
    if (!std::isfinite(r.loss)) throw NumericError("mse_loss: loss is not finite");
    return r;
}

template <typename T>
void adam_step(TensorMap<T>& params, const TensorMap<T>& grads, AdamState<T>& state, const DistillConfig& cfg) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& [name, g] : grads) {
        Tensor<T>& p = lookup(params, name);
        require_same_shape(p, g, "adam_step");
        auto [mit, m_new] = state.m.try_emplace(name, g.shape());
        auto [vit, v_new] = state.v.try_emplace(name, g.shape());
        Tensor<T>& m = mit->second;
        Tensor<T>& v = vit->second;
        require_same_shape(m, g, "adam_step");
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
            p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
        }
        require_finite(p, "adam_step");
    }
}

std::vector<ImageEntry> list_images(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<ImageEntry> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") out.push_back({e.path().stem().string(), e.path()});
    }
    std::sort(out.begin(), out.end(), [](const ImageEntry& a, const ImageEntry& b) { return a.path < b.path; });
    return out;
}

std::string teacher_hash(const EncoderConfig& cfg, const EncoderWeights<float>& teacher) {
    std::uint64_t h = 14695981039346656037ull;
    const std::string text = to_config_text(ModelConfig{cfg, DecoderConfig{}});
    h = fnv1a(h, text.data(), text.size());
    WeightFile f;
    f.flags = teacher.form == WeightForm::deploy ? kFlagDeploy : 0;
    for (const auto& [name, t] : teacher.tensors) f.tensors.emplace(name, t);
    const auto bytes = encode_weights(f);
    h = fnv1a(h, bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

CacheManifest read_manifest(const std::filesystem::path& cache_dir) {
    CacheManifest m;
    std::istringstream in(read_text(cache_dir / kManifestName));
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("teacher=", 0) == 0) {
            m.teacher_hash = line.substr(8);
        } else if (line.rfind("id=", 0) == 0) {
            m.ids.push_back(line.substr(3));
        } else if (!line.empty()) {
            throw DataError("cache manifest: unexpected line '" + line + "'");
        }
    }
    return m;
}

PrecomputeStats precompute_embeddings(const EncoderConfig& cfg, const EncoderWeights<float>& teacher,
                                      const std::vector<ImageEntry>& images, const std::filesystem::path& cache_dir) {
    if (images.empty()) throw DataError("precompute: no images");
    std::filesystem::create_directories(cache_dir);
    const std::string hash = teacher_hash(cfg, teacher);
    const CacheManifest existing = read_manifest(cache_dir);
    const bool reusable = existing.teacher_hash == hash;

    PrecomputeStats stats;
    Shape dims;
    std::ostringstream manifest;
    manifest << "teacher=" << hash << '\n';
    for (const ImageEntry& img : images) {
        if (img.id.empty() || img.id.find('/') != std::string::npos) throw DataError("precompute: bad image id");
        const auto path = entry_path(cache_dir, img.id);
        Tensor<float> emb;
        if (reusable && std::filesystem::exists(path) &&
            std::find(existing.ids.begin(), existing.ids.end(), img.id) != existing.ids.end()) {
            emb = read_weights(path).f32(entry_name(img.id));
            ++stats.reused;
        } else {
            const Preprocessed pre = preprocess_image(read_pnm(img.path), cfg);
            emb = encoder_forward(cfg, teacher, pre.tensor);
            ++stats.teacher_forwards;
            WeightFile f;
            f.tensors.emplace(entry_name(img.id), emb);
            write_weights(path, f);
        }
        if (dims.empty()) dims = emb.shape();
        if (emb.shape() != dims) {
            throw DataError("precompute: embedding for '" + img.id + "' has dims " + shape_string(emb.shape()) +
                            ", earlier entries have " + shape_string(dims));
        }
        manifest << "id=" << img.id << '\n';
    }
    const std::string text = manifest.str();
    const auto manifest_path = cache_dir / kManifestName;
    if (read_text(manifest_path) != text) {
        std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + manifest_path.string());
        out << text;
    }
    return stats;
}

Tensor<float> load_cached_embedding(const std::filesystem::path& cache_dir, const std::string& id) {
    return read_weights(entry_path(cache_dir, id)).f32(entry_name(id));
}

double mean_loss(const EncoderConfig& cfg, const EncoderWeights<float>& w, const std::vector<DistillSample>& data) {
    if (data.empty()) throw DataError("distill: empty dataset");
    double sum = 0;
    for (const DistillSample& s : data) sum += mse_loss(encoder_forward(cfg, w, s.input), s.target).loss;
    return sum / static_cast<double>(data.size());
}

DistillResult distill(const EncoderConfig& cfg, EncoderWeights<float> student, const std::vector<DistillSample>& data,
                      const DistillConfig& dc) {
    dc.validate();
    if (data.empty()) throw DataError("distill: empty cache");
    if (student.form != WeightForm::train) throw DataError("distill: student must be in train form");
    const Tensor<float> probe = encoder_forward(cfg, student, data.front().input);
    for (const DistillSample& s : data) {
        if (s.target.shape() != probe.shape()) {
            throw ShapeError("distill: student embedding " + shape_string(probe.shape()) + " vs cached '" + s.id +
                             "' " + shape_string(s.target.shape()));
        }
    }

    std::mt19937_64 rng(dc.seed);
    std::vector<std::size_t> pool(data.size());
    std::iota(pool.begin(), pool.end(), 0);
    const auto used = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(dc.fraction * static_cast<double>(data.size()) - 1e-9)));
    if (used < data.size()) {
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(used);
        std::sort(pool.begin(), pool.end());
    }
    std::vector<DistillSample> subset;
    for (std::size_t i : pool) subset.push_back(data[i]);

    std::size_t total = dc.epochs * subset.size();
    if (dc.max_steps > 0) total = std::min(total, dc.max_steps);

    DistillResult r;
    r.initial_loss = mean_loss(cfg, student, subset);
    AdamState<float> adam;
    std::vector<std::size_t> order(subset.size());
    std::iota(order.begin(), order.end(), 0);
    while (r.steps < total) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) {
            if (r.steps == total) break;
            const DistillSample& s = subset[i];
            TrainForward<float> tf = encoder_forward_train(cfg, student, s.input, BnMode::eval);
            LossResult<float> loss = mse_loss(tf.embedding, s.target);
            r.loss_curve.push_back(loss.loss);
            TensorMap<float> grads = encoder_backward(cfg, student, tf.cache, loss.grad);
            adam_step(student.tensors, grads, adam, dc);
            ++r.steps;
        }
    }
    r.final_loss = mean_loss(cfg, student, subset);
    r.weights = std::move(student);
    return r;
}

double relative_error(double analytic, double numeric) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-12) return 0.0;
    return std::abs(analytic - numeric) / std::max(scale, kRelativeErrorFloor);
}

GradientCheckResult gradient_check(const EncoderConfig& cfg, EncoderWeights<double> w, const Tensor<double>& input,
                                   const Tensor<double>& target, std::size_t n_params, double eps, std::uint64_t seed,
                                   BnMode mode) {
    EncoderWeights<double> scratch = w;
    const TrainForward<double> tf = encoder_forward_train(cfg, scratch, input, mode);
    const LossResult<double> loss = mse_loss(tf.embedding, target);
    const TensorMap<double> grads = encoder_backward(cfg, w, tf.cache, loss.grad);

    std::vector<std::string> names;
    std::vector<std::size_t> offsets{0};
    for (const auto& [name, t] : w.tensors) {
        if (!is_trainable_name(name)) continue;
        names.push_back(name);
        offsets.push_back(offsets.back() + t.size());
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, offsets.back() - 1);

    GradientCheckResult r;
    for (std::size_t k = 0; k < n_params; ++k) {
        const std::size_t flat = pick(rng);
        const std::size_t slot =
            static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
        GradientSample s;
        s.name = names[slot];
        s.index = flat - offsets[slot];
        const auto git = grads.find(s.name);
        s.analytic = git == grads.end() ? 0.0 : git->second[s.index];

        EncoderWeights<double> plus = w;
        plus.get(s.name)[s.index] += eps;
        EncoderWeights<double> minus = w;
        minus.get(s.name)[s.index] -= eps;
        s.numeric = (loss_at(cfg, std::move(plus), input, target, mode) -
                     loss_at(cfg, std::move(minus), input, target, mode)) /
                    (2.0 * eps);
        s.rel_error = relative_error(s.analytic, s.numeric);
        r.max_rel_error = std::max(r.max_rel_error, s.rel_error);
        r.samples.push_back(std::move(s));
    }
    return r;
}

GradientCheckResult gradient_check(const EncoderConfig& cfg, std::size_t n_params, double eps, std::uint64_t seed,
                                   BnMode mode) {
    EncoderWeights<double> w = build_encoder<double>(cfg, seed);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor<double> input = Tensor<double>::nchw(1, 3, cfg.input_size, cfg.input_size);
    for (double& v : input.data()) v = normal(rng);
    const std::size_t s = cfg.embedding_size();
    Tensor<double> target = Tensor<double>::nchw(1, cfg.embed_channels, s, s);
    for (double& v : target.data()) v = normal(rng);
    return gradient_check(cfg, std::move(w), input, target, n_params, eps, seed, mode);
}

template LossResult<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> mse_loss(const Tensor<double>&, const Tensor<double>&);
template void adam_step(TensorMap<float>&, const TensorMap<float>&, AdamState<float>&, const DistillConfig&);
template void adam_step(TensorMap<double>&, const TensorMap<double>&, AdamState<double>&, const DistillConfig&);

}  // namespace rvsam

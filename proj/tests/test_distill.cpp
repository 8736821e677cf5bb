// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "rvsam/distill.hpp"
#include "rvsam/image.hpp"
#include "rvsam/weights_io.hpp"
#include "test_util.hpp"

namespace rvsam {
namespace {

using testing::fd_max_rel_error;
using testing::random_tensor;
using testing::TempDir;

// Random rectangles over a colour ramp.
Image8 synthetic_image(std::size_t size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<std::size_t> pos(0, size - 1);
    Image8 img(size, size, 3);
    const int base[3] = {byte(rng), byte(rng), byte(rng)};
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>((base[c] + x + 2 * y) % 256);
        }
    }
    for (int r = 0; r < 3; ++r) {
        const std::size_t x0 = pos(rng);
        const std::size_t y0 = pos(rng);
        const std::size_t x1 = std::min(size, x0 + 4 + pos(rng) / 2);
        const std::size_t y1 = std::min(size, y0 + 4 + pos(rng) / 2);
        const int colour[3] = {byte(rng), byte(rng), byte(rng)};
        for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
                for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>(colour[c]);
            }
        }
    }
    return img;
}

std::vector<DistillSample> make_samples(const EncoderConfig& cfg, const EncoderWeights<float>& teacher,
                                        std::size_t n) {
    std::vector<DistillSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        DistillSample s;
        s.id = "img" + std::to_string(i);
        s.input = preprocess_image(synthetic_image(cfg.input_size, 1000 + i), cfg).tensor;
        s.target = encoder_forward(cfg, teacher, s.input);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

TEST(MseLoss, IdenticalTensors) {
    const Tensor<double> a = random_tensor<double>({1, 4, 3, 3}, 1);
    const LossResult<double> r = mse_loss(a, a);
    EXPECT_EQ(r.loss, 0.0);
    for (double g : r.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(MseLoss, ConstantOffset) {
    const Tensor<double> t = random_tensor<double>({1, 2, 5, 5}, 2);
    Tensor<double> s = t;
    for (double& v : s.data()) v += 1.0;
    const LossResult<double> r = mse_loss(s, t);
    EXPECT_NEAR(r.loss, 1.0, 1e-12);
    for (double g : r.grad.data()) EXPECT_NEAR(g, 2.0 / 50, 1e-12);
}

TEST(MseLoss, GradientFiniteDifferences) {
    const Tensor<double> s = random_tensor<double>({1, 3, 4, 4}, 3);
    const Tensor<double> t = random_tensor<double>({1, 3, 4, 4}, 4);
    const LossResult<double> r = mse_loss(s, t);
    const double err =
        fd_max_rel_error([&](const Tensor<double>& v) { return mse_loss(v, t).loss; }, s, r.grad, 1e-4);
    EXPECT_LT(err, 1e-6);
}

TEST(MseLoss, NonNegativeAndZeroOnlyWhenEqual) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor<float> a = random_tensor<float>({1, 2, 3, 3}, seed);
        Tensor<float> b = a;
        b[seed % b.size()] += 1e-3f;
        EXPECT_GT(mse_loss(a, b).loss, 0.0);
        EXPECT_EQ(mse_loss(a, a).loss, 0.0);
    }
}

TEST(MseLoss, Errors) {
    EXPECT_THROW(mse_loss(Tensor<float>({2, 2}), Tensor<float>({4})), ShapeError);
    Tensor<float> nan({2}, std::numeric_limits<float>::quiet_NaN());
    EXPECT_THROW(mse_loss(nan, Tensor<float>({2})), NumericError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    TensorMap<double> params = {{"w", random_tensor<double>({3}, 5)}};
    const TensorMap<double> before = params;
    AdamState<double> st;
    adam_step(params, {{"w", Tensor<double>({3})}}, st, DistillConfig{});
    EXPECT_EQ(params, before);
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepIsLearningRate) {
    DistillConfig cfg;
    TensorMap<double> params = {{"w", Tensor<double>({1}, 0.5)}};
    AdamState<double> st;
    adam_step(params, {{"w", Tensor<double>({1}, 1.0)}}, st, cfg);
    EXPECT_NEAR(params.at("w")[0], 0.5 - cfg.learning_rate, 1e-10);
    adam_step(params, {{"w", Tensor<double>({1}, 1.0)}}, st, cfg);
    EXPECT_NEAR(params.at("w")[0], 0.5 - 2 * cfg.learning_rate, 1e-10);
}

TEST(Adam, HandArithmeticSecondStep) {
    DistillConfig cfg;
    cfg.learning_rate = 0.1;
    TensorMap<double> params = {{"w", Tensor<double>({1}, 0.0)}};
    AdamState<double> st;
    adam_step(params, {{"w", Tensor<double>({1}, 2.0)}}, st, cfg);
    adam_step(params, {{"w", Tensor<double>({1}, -1.0)}}, st, cfg);
    const double m = 0.9 * (0.1 * 2.0) + 0.1 * -1.0;
    const double v = 0.999 * (0.001 * 4.0) + 0.001 * 1.0;
    const double mh = m / (1 - 0.81);
    const double vh = v / (1 - 0.999 * 0.999);
    const double first = -0.1 * 2.0 / (2.0 + 1e-8);
    EXPECT_NEAR(params.at("w")[0], first - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
}

TEST(Adam, Errors) {
    TensorMap<double> params = {{"w", Tensor<double>({2})}};
    AdamState<double> st;
    EXPECT_THROW(adam_step(params, {{"w", Tensor<double>({3})}}, st, DistillConfig{}), ShapeError);
    EXPECT_THROW(adam_step(params, {{"q", Tensor<double>({2})}}, st, DistillConfig{}), ShapeError);
}

TEST(Distill, FixedPointWhenStudentIsTeacher) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> teacher = build_encoder<float>(cfg, 1);
    const auto data = make_samples(cfg, teacher, 3);
    DistillConfig dc;
    dc.epochs = 1;
    const DistillResult r = distill(cfg, teacher, data, dc);
    EXPECT_EQ(r.initial_loss, 0.0);
    ASSERT_FALSE(r.loss_curve.empty());
    EXPECT_EQ(r.loss_curve.front(), 0.0);
    EXPECT_EQ(r.weights.tensors, teacher.tensors);
}

TEST(Distill, Converges) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> teacher = build_encoder<float>(cfg, 1);
    const auto data = make_samples(cfg, teacher, 16);
    DistillConfig dc;
    dc.epochs = 13;
    dc.max_steps = 200;
    const DistillResult r = distill(cfg, build_encoder<float>(cfg, 2), data, dc);
    EXPECT_EQ(r.steps, 200u);
    EXPECT_EQ(r.loss_curve.size(), 200u);
    for (double l : r.loss_curve) EXPECT_TRUE(std::isfinite(l));
    EXPECT_LE(r.final_loss, 0.1 * r.initial_loss) << r.initial_loss << " -> " << r.final_loss;
    EXPECT_EQ(r.weights.form, WeightForm::train);
}

TEST(Distill, EpochCount) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> teacher = build_encoder<float>(cfg, 1);
    const auto data = make_samples(cfg, teacher, 3);
    const DistillResult r = distill(cfg, build_encoder<float>(cfg, 2), data, DistillConfig{});
    EXPECT_EQ(DistillConfig{}.epochs, 8u);
    EXPECT_EQ(r.steps, 8u * 3);
}

TEST(Distill, FractionSelectsSubset) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> teacher = build_encoder<float>(cfg, 1);
    const auto data = make_samples(cfg, teacher, 5);
    DistillConfig dc;
    dc.epochs = 2;
    dc.fraction = 0.3;
    EXPECT_EQ(distill(cfg, build_encoder<float>(cfg, 2), data, dc).steps, 2u * 2);
    dc.fraction = 0.01;
    EXPECT_EQ(distill(cfg, build_encoder<float>(cfg, 2), data, dc).steps, 2u);
}

TEST(Distill, Deterministic) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> teacher = build_encoder<float>(cfg, 1);
    const auto data = make_samples(cfg, teacher, 4);
    DistillConfig dc;
    dc.epochs = 2;
    dc.seed = 7;
    const DistillResult a = distill(cfg, build_encoder<float>(cfg, 2), data, dc);
    const DistillResult b = distill(cfg, build_encoder<float>(cfg, 2), data, dc);
    EXPECT_EQ(a.loss_curve, b.loss_curve);
    EXPECT_EQ(a.weights.tensors, b.weights.tensors);
    dc.seed = 8;
    EXPECT_NE(distill(cfg, build_encoder<float>(cfg, 2), data, dc).loss_curve, a.loss_curve);
}

TEST(Distill, RunningStatisticsStayFrozen) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> teacher = build_encoder<float>(cfg, 1);
    const EncoderWeights<float> student = build_encoder<float>(cfg, 2);
    DistillConfig dc;
    dc.epochs = 1;
    const DistillResult r = distill(cfg, student, make_samples(cfg, teacher, 2), dc);
    for (const auto& [name, t] : student.tensors) {
        if (!is_trainable_name(name)) EXPECT_EQ(r.weights.get(name), t) << name;
    }
}

TEST(Distill, DivergenceAborts) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> teacher = build_encoder<float>(cfg, 1);
    auto data = make_samples(cfg, teacher, 2);
    data[1].target.fill(std::numeric_limits<float>::infinity());
    EXPECT_THROW(distill(cfg, build_encoder<float>(cfg, 2), data, DistillConfig{}), NumericError);
}

TEST(Distill, Errors) {
    const EncoderConfig cfg = EncoderConfig::toy();
    const EncoderWeights<float> w = build_encoder<float>(cfg, 1);
    EXPECT_THROW(distill(cfg, w, {}, DistillConfig{}), DataError);
    auto data = make_samples(cfg, w, 1);
    data[0].target = Tensor<float>({1, 16, 2, 2});
    EXPECT_THROW(distill(cfg, w, data, DistillConfig{}), ShapeError);
    DistillConfig bad;
    bad.epochs = 0;
    EXPECT_THROW(distill(cfg, w, make_samples(cfg, w, 1), bad), ConfigError);
}

TEST(GradientCheck, DegenerateZeroCase) {
    EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_EQ(relative_error(1e-13, -5e-13), 0.0);
    EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
}

TEST(GradientCheck, ZeroInputZeroTarget) {
    const EncoderConfig cfg = EncoderConfig::toy();
    EncoderWeights<double> w = build_encoder<double>(cfg, 3);
    for (auto& [name, t] : w.tensors) {
        if (is_trainable_name(name)) t.fill(0.0);
    }
    const GradientCheckResult r =
        gradient_check(cfg, w, Tensor<double>::nchw(1, 3, 64, 64), Tensor<double>::nchw(1, 16, 4, 4), 20, 1e-6, 4);
    EXPECT_EQ(r.max_rel_error, 0.0);
}

class CacheTest : public ::testing::Test {
protected:
    void SetUp() override {
        std::filesystem::create_directories(images_);
        for (int i = 0; i < 3; ++i) {
            write_ppm(images_ / ("im" + std::to_string(i) + ".ppm"), synthetic_image(48 + 8 * i, 50 + i));
        }
    }

    TempDir dir_{"cache"};
    std::filesystem::path images_ = dir_ / "images";
    std::filesystem::path cache_ = dir_ / "cache";
    EncoderConfig cfg_ = EncoderConfig::toy();
    EncoderWeights<float> teacher_ = build_encoder<float>(cfg_, 1);
};

TEST_F(CacheTest, ListsImagesSorted) {
    std::ofstream(images_ / "notes.txt") << "x";
    const auto list = list_images(images_);
    ASSERT_EQ(list.size(), 3u);
    EXPECT_EQ(list[0].id, "im0");
    EXPECT_EQ(list[2].id, "im2");
    EXPECT_THROW(list_images(dir_ / "nope"), DataError);
}

TEST_F(CacheTest, ManifestAndReuse) {
    const auto images = list_images(images_);
    const PrecomputeStats first = precompute_embeddings(cfg_, teacher_, images, cache_);
    EXPECT_EQ(first.teacher_forwards, 3u);
    EXPECT_EQ(first.reused, 0u);
    const CacheManifest m = read_manifest(cache_);
    EXPECT_EQ(m.ids, (std::vector<std::string>{"im0", "im1", "im2"}));
    EXPECT_EQ(m.teacher_hash, teacher_hash(cfg_, teacher_));

    std::map<std::filesystem::path, std::vector<std::uint8_t>> snapshot;
    for (const auto& e : std::filesystem::directory_iterator(cache_)) snapshot[e.path()] = slurp(e.path());
    const PrecomputeStats second = precompute_embeddings(cfg_, teacher_, images, cache_);
    EXPECT_EQ(second.teacher_forwards, 0u);
    EXPECT_EQ(second.reused, 3u);
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(cache_)) {
        EXPECT_EQ(slurp(e.path()), snapshot.at(e.path())) << e.path();
        ++files;
    }
    EXPECT_EQ(files, snapshot.size());
}

TEST_F(CacheTest, EntryEqualsDirectForward) {
    const auto images = list_images(images_);
    precompute_embeddings(cfg_, teacher_, images, cache_);
    const Tensor<float> direct =
        encoder_forward(cfg_, teacher_, preprocess_image(read_pnm(images[1].path), cfg_).tensor);
    EXPECT_EQ(load_cached_embedding(cache_, "im1"), direct);
    EXPECT_THROW(load_cached_embedding(cache_, "missing"), DataError);
}

TEST_F(CacheTest, NewTeacherInvalidates) {
    const auto images = list_images(images_);
    precompute_embeddings(cfg_, teacher_, images, cache_);
    const EncoderWeights<float> other = build_encoder<float>(cfg_, 2);
    EXPECT_NE(teacher_hash(cfg_, other), teacher_hash(cfg_, teacher_));
    const PrecomputeStats s = precompute_embeddings(cfg_, other, images, cache_);
    EXPECT_EQ(s.teacher_forwards, 3u);
    EXPECT_EQ(read_manifest(cache_).teacher_hash, teacher_hash(cfg_, other));
}

TEST_F(CacheTest, AddedImageOnlyForwardsNewEntry) {
    precompute_embeddings(cfg_, teacher_, list_images(images_), cache_);
    write_pgm(images_ / "im3.pgm", Image8(40, 40, 1, 77));
    const PrecomputeStats s = precompute_embeddings(cfg_, teacher_, list_images(images_), cache_);
    EXPECT_EQ(s.teacher_forwards, 1u);
    EXPECT_EQ(s.reused, 3u);
    EXPECT_EQ(read_manifest(cache_).ids.size(), 4u);
}

TEST_F(CacheTest, DimensionDriftRejected) {
    const auto images = list_images(images_);
    precompute_embeddings(cfg_, teacher_, images, cache_);
    WeightFile f;
    f.tensors.emplace("emb/im2", Tensor<float>({1, 16, 2, 2}));
    write_weights(cache_ / "im2.rvsw", f);
    std::filesystem::remove(cache_ / "im0.rvsw");
    EXPECT_THROW(precompute_embeddings(cfg_, teacher_, images, cache_), DataError);
}

TEST_F(CacheTest, UnreadableImage) {
    std::ofstream(images_ / "broken.pgm") << "P5\n";
    EXPECT_THROW(precompute_embeddings(cfg_, teacher_, list_images(images_), cache_), DataError);
}

}  // namespace
}  // namespace rvsam

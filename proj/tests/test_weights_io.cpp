// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "rvsam/model.hpp"
#include "rvsam/weights_io.hpp"
#include "test_util.hpp"

namespace rvsam {
namespace {

using Bytes = std::vector<std::uint8_t>;
using testing::random_tensor;
using testing::TempDir;

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_ref(const std::uint8_t* p, std::size_t n) {
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) {
        c ^= p[i];
        for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
    }
    return ~c;
}

void put_u16(Bytes& b, std::uint16_t v) {
    b.push_back(v & 0xFF);
    b.push_back(v >> 8);
}

void put_u32(Bytes& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}

void put_f32(Bytes& b, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(b, u);
}

Bytes header(std::uint32_t version, std::uint32_t flags, std::uint32_t count) {
    Bytes b = {'R', 'V', 'S', 'W'};
    put_u32(b, version);
    put_u32(b, flags);
    put_u32(b, count);
    return b;
}

void put_record_f32(Bytes& b, const std::string& name, const std::vector<std::uint32_t>& dims,
                    const std::vector<float>& values) {
    put_u16(b, static_cast<std::uint16_t>(name.size()));
    b.insert(b.end(), name.begin(), name.end());
    b.push_back(0);
    b.push_back(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) put_u32(b, d);
    for (float v : values) put_f32(b, v);
}

void seal(Bytes& b) { put_u32(b, crc32_ref(b.data(), b.size())); }

void reseal(Bytes& b) {
    b.resize(b.size() - 4);
    seal(b);
}

WeightsFault fault_of(const Bytes& b) {
    try {
        decode_weights(b);
    } catch (const WeightsFormatError& e) {
        return e.fault();
    }
    ADD_FAILURE() << "decode succeeded";
    return WeightsFault::bad_record;
}

WeightFile sample_file() {
    WeightFile f;
    f.flags = kFlagDeploy;
    f.tensors.emplace("b.weight", random_tensor<float>({3, 2}, 1));
    f.tensors.emplace("a.bias", random_tensor<double>({4}, 2));
    f.tensors.emplace("c", Tensor<float>({1, 2, 2, 2}, 0.25f));
    return f;
}

TEST(WeightsFormat, EmptyMap) {
    const Bytes b = encode_weights(WeightFile{});
    Bytes expected = header(1, 0, 0);
    seal(expected);
    EXPECT_EQ(b, expected);
    EXPECT_EQ(b.size(), 20u);
    const WeightFile back = decode_weights(b);
    EXPECT_EQ(back.flags, 0u);
    EXPECT_TRUE(back.tensors.empty());
}

TEST(WeightsFormat, SingleTensorMatchesHandEncoding) {
    WeightFile f;
    std::vector<float> values(8);
    for (std::size_t i = 0; i < 8; ++i) values[i] = 0.5f * static_cast<float>(i) - 1.0f;
    f.tensors.emplace("w", Tensor<float>({1, 2, 2, 2}, values));
    const Bytes b = encode_weights(f);
    Bytes expected = header(1, 0, 1);
    put_record_f32(expected, "w", {1, 2, 2, 2}, values);
    seal(expected);
    EXPECT_EQ(b, expected);
    // header 16 + name_len 2 + name 1 + dtype 1 + rank 1 + dims 16 + payload 32 + crc 4
    EXPECT_EQ(b.size(), 16u + 2 + 1 + 1 + 1 + 16 + 32 + 4);
    const WeightFile back = decode_weights(b);
    EXPECT_EQ(std::get<Tensor<float>>(back.tensors.at("w")), std::get<Tensor<float>>(f.tensors.at("w")));
}

TEST(WeightsFormat, RecordsOrderedByName) {
    Bytes expected = header(1, 0, 2);
    put_record_f32(expected, "alpha", {1}, {1.0f});
    put_record_f32(expected, "beta", {1}, {2.0f});
    seal(expected);
    WeightFile f;
    f.tensors.emplace("beta", Tensor<float>({1}, 2.0f));
    f.tensors.emplace("alpha", Tensor<float>({1}, 1.0f));
    EXPECT_EQ(encode_weights(f), expected);
}

TEST(WeightsFormat, DoublePayload) {
    WeightFile f;
    f.tensors.emplace("d", Tensor<double>({2}, std::vector<double>{1.0, -0.1}));
    const Bytes b = encode_weights(f);
    EXPECT_EQ(b.size(), 16u + 2 + 1 + 1 + 1 + 4 + 16 + 4);
    EXPECT_EQ(b[16 + 2 + 1], 1);  // dtype
    const WeightFile back = decode_weights(b);
    EXPECT_EQ(std::get<Tensor<double>>(back.tensors.at("d")).data()[1], -0.1);
}

TEST(WeightsFormat, FlippedPayloadByteIsCrcError) {
    Bytes b = encode_weights(sample_file());
    for (std::size_t pos : {b.size() - 5, b.size() - 4 - 32}) {
        Bytes bad = b;
        bad[pos] ^= 0x10;
        EXPECT_EQ(fault_of(bad), WeightsFault::bad_crc) << pos;
    }
}

TEST(WeightsFormat, DistinctFaults) {
    const Bytes good = encode_weights(sample_file());

    Bytes magic = good;
    magic[0] = 'X';
    EXPECT_EQ(fault_of(magic), WeightsFault::bad_magic);

    Bytes version = good;
    version[4] = 2;
    reseal(version);
    EXPECT_EQ(fault_of(version), WeightsFault::bad_version);

    Bytes truncated(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(good.size() / 2));
    EXPECT_EQ(fault_of(truncated), WeightsFault::truncated);
    EXPECT_EQ(fault_of(Bytes(good.begin(), good.begin() + 10)), WeightsFault::truncated);

    Bytes dup = header(1, 0, 2);
    put_record_f32(dup, "x", {1}, {1.0f});
    put_record_f32(dup, "x", {1}, {2.0f});
    seal(dup);
    EXPECT_EQ(fault_of(dup), WeightsFault::duplicate_name);

    Bytes dtype = header(1, 0, 1);
    put_record_f32(dtype, "x", {1}, {1.0f});
    dtype[16 + 2 + 1] = 7;
    seal(dtype);
    EXPECT_EQ(fault_of(dtype), WeightsFault::bad_record);

    Bytes trailing = header(1, 0, 0);
    trailing.push_back(0);
    seal(trailing);
    EXPECT_EQ(fault_of(trailing), WeightsFault::bad_record);

    const std::set<WeightsFault> all = {WeightsFault::bad_magic, WeightsFault::bad_version, WeightsFault::bad_crc,
                                        WeightsFault::truncated, WeightsFault::duplicate_name,
                                        WeightsFault::bad_record};
    std::set<std::string> messages;
    for (WeightsFault f : all) messages.insert(fault_name(f));
    EXPECT_EQ(messages.size(), all.size());
}

TEST(WeightsFormat, FaultsAreDataErrors) {
    Bytes b = encode_weights(sample_file());
    b[0] = 0;
    EXPECT_THROW(decode_weights(b), DataError);
}

TEST(WeightsFormat, RandomRoundTrips) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> count(0, 6);
    std::uniform_int_distribution<int> rank(0, 4);
    std::uniform_int_distribution<int> dim(0, 4);
    std::uniform_int_distribution<int> ch('a', 'z');
    std::uniform_int_distribution<int> len(1, 24);
    std::bernoulli_distribution f64(0.3);
    for (int iter = 0; iter < 1000; ++iter) {
        WeightFile f;
        f.flags = static_cast<std::uint32_t>(rng());
        const int n = count(rng);
        for (int t = 0; t < n; ++t) {
            std::string name;
            const int l = len(rng);
            for (int i = 0; i < l; ++i) name.push_back(static_cast<char>(ch(rng)));
            Shape shape(static_cast<std::size_t>(rank(rng)));
            for (auto& d : shape) d = static_cast<std::size_t>(dim(rng));
            if (f64(rng)) {
                f.tensors.emplace(name, random_tensor<double>(shape, rng(), -1e6, 1e6));
            } else {
                f.tensors.emplace(name, random_tensor<float>(shape, rng(), -1e6, 1e6));
            }
        }
        const Bytes b = encode_weights(f);
        const WeightFile back = decode_weights(b);
        ASSERT_EQ(back.flags, f.flags);
        ASSERT_EQ(back.tensors, f.tensors);
        ASSERT_EQ(encode_weights(back), b);
    }
}

TEST(WeightsFormat, SpecialValuesSurviveBitwise) {
    WeightFile f;
    f.tensors.emplace("s", Tensor<float>({4}, std::vector<float>{-0.0f, std::numeric_limits<float>::infinity(),
                                                                  std::numeric_limits<float>::denorm_min(), 1e38f}));
    const WeightFile back = decode_weights(encode_weights(f));
    EXPECT_EQ(encode_weights(back), encode_weights(f));
    EXPECT_TRUE(std::signbit(std::get<Tensor<float>>(back.tensors.at("s"))[0]));
}

TEST(WeightsFile, WriteReadDeterministic) {
    TempDir dir("wio");
    const WeightFile f = sample_file();
    write_weights(dir / "a.rvsw", f);
    write_weights(dir / "b.rvsw", f);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return Bytes(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(slurp(dir / "a.rvsw"), slurp(dir / "b.rvsw"));
    EXPECT_EQ(slurp(dir / "a.rvsw"), encode_weights(f));
    const WeightFile back = read_weights(dir / "a.rvsw");
    EXPECT_TRUE(back.deploy());
    EXPECT_EQ(back.tensors, f.tensors);
    EXPECT_THROW(read_weights(dir / "missing.rvsw"), DataError);
    for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
        EXPECT_EQ(e.path().extension(), ".rvsw") << e.path();
    }
}

TEST(WeightsFile, TypedAccess) {
    const WeightFile f = sample_file();
    EXPECT_EQ(f.f32("b.weight").shape(), (Shape{3, 2}));
    EXPECT_THROW(f.f32("a.bias"), ShapeError);
    EXPECT_THROW(f.f32("nope"), ShapeError);
}

TEST(ModelFile, SaveLoadKeepsFormAndTensors) {
    TempDir dir("model");
    const ModelConfig cfg = ModelConfig::toy();
    const Model m = build_model(cfg, 3);
    save_model(dir / "m.rvsw", m);
    const WeightFile raw = read_weights(dir / "m.rvsw");
    EXPECT_FALSE(raw.deploy());
    for (const auto& [name, t] : raw.tensors) {
        EXPECT_TRUE(name.starts_with(kEncoderPrefix) || name.starts_with(kDecoderPrefix)) << name;
    }
    const Model back = load_model(dir / "m.rvsw", cfg);
    EXPECT_EQ(back.encoder.form, WeightForm::train);
    EXPECT_EQ(back.encoder.tensors, m.encoder.tensors);
    ASSERT_TRUE(back.decoder.has_value());
    EXPECT_EQ(back.decoder->tensors, m.decoder->tensors);
}

TEST(ModelFile, EncoderOnlyAndForeignNames) {
    const ModelConfig cfg = ModelConfig::toy();
    const Model m = build_model(cfg, 4);
    WeightFile f = to_weight_file(m.encoder, nullptr);
    EXPECT_FALSE(model_from_weight_file(f, cfg).decoder.has_value());
    f.tensors.emplace("optimizer.step", Tensor<float>({1}));
    EXPECT_THROW(model_from_weight_file(f, cfg), Error);
}

}  // namespace
}  // namespace rvsam

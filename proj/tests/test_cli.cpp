// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "rvsam/cli.hpp"
#include "rvsam/config.hpp"
#include "rvsam/image.hpp"
#include "rvsam/model.hpp"
#include "test_util.hpp"

namespace rvsam {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

std::vector<std::uint8_t> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

Image8 square_scene(std::size_t size) {
    Image8 img(size, size, 3, 20);
    for (std::size_t y = size / 4; y < 3 * size / 4; ++y) {
        for (std::size_t x = size / 4; x < 3 * size / 4; ++x) {
            for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = 230;
        }
    }
    return img;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        write_text(config_, to_config_text(ModelConfig::toy()) + "distill.epochs=2\n");
        ASSERT_EQ(run({"init", "--config", config_.string(), "--out", weights_.string(), "--seed", "3"}), kExitOk)
            << err_.str();
    }

    int run(const std::vector<std::string>& args) {
        out_.str("");
        err_.str("");
        return run_cli(args, out_, err_);
    }

    json last_json() const { return json::parse(out_.str()); }

    TempDir dir_{"cli"};
    fs::path config_ = dir_ / "toy.cfg";
    fs::path weights_ = dir_ / "model.rvsw";
    std::ostringstream out_;
    std::ostringstream err_;
};

TEST_F(CliTest, FuseSetsDeployFlag) {
    const fs::path out = dir_ / "deploy.rvsw";
    ASSERT_EQ(run({"fuse", "--config", config_.string(), "--in", weights_.string(), "--out", out.string()}), kExitOk)
        << err_.str();
    EXPECT_FALSE(read_weights(weights_).deploy());
    const WeightFile f = read_weights(out);
    EXPECT_TRUE(f.deploy());
    EXPECT_EQ(run({"fuse", "--config", config_.string(), "--in", out.string(), "--out", (dir_ / "x.rvsw").string()}),
              kExitData);
    EXPECT_NE(err_.str().find("already fused"), std::string::npos);
}

TEST_F(CliTest, MissingWeightsIsUsageError) {
    const fs::path out = dir_ / "never.rvsw";
    EXPECT_EQ(run({"fuse", "--config", config_.string(), "--in", (dir_ / "missing.rvsw").string(), "--out",
                   out.string()}),
              kExitUsage);
    EXPECT_FALSE(err_.str().empty());
    EXPECT_FALSE(fs::exists(out));

    const fs::path out_dir = dir_ / "infer_out";
    write_pgm(dir_ / "img.pgm", Image8(8, 8, 1));
    write_text(dir_ / "p.txt", "P 1 1 1\n");
    EXPECT_EQ(run({"infer", "--config", config_.string(), "--weights", (dir_ / "missing.rvsw").string(), "--image",
                   (dir_ / "img.pgm").string(), "--prompts", (dir_ / "p.txt").string(), "--out", out_dir.string()}),
              kExitUsage);
    EXPECT_FALSE(fs::exists(out_dir));
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(run({}), kExitUsage);
    EXPECT_EQ(run({"frobnicate"}), kExitUsage);
    EXPECT_EQ(run({"fuse", "--config", config_.string(), "--in", weights_.string(), "--out", "x", "--bogus"}),
              kExitUsage);
    EXPECT_EQ(run({"bench", "--config", config_.string(), "--weights", weights_.string(), "--iters", "0"}),
              kExitUsage);
    EXPECT_EQ(run({"--help"}), kExitOk);
}

TEST_F(CliTest, CorruptWeightsIsDataError) {
    std::vector<std::uint8_t> bytes = slurp(weights_);
    bytes[bytes.size() / 2] ^= 0xFF;
    std::ofstream(dir_ / "bad.rvsw", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                             static_cast<std::streamsize>(bytes.size()));
    EXPECT_EQ(run({"fuse", "--config", config_.string(), "--in", (dir_ / "bad.rvsw").string(), "--out",
                   (dir_ / "y.rvsw").string()}),
              kExitData);
}

TEST_F(CliTest, InferWritesOneMaskPerPrompt) {
    write_ppm(dir_ / "scene.ppm", square_scene(48));
    write_text(dir_ / "prompts.txt", "# scene prompts\nP 24 24 1\nP 2 2 0\n\nB 10 10 38 38\n");
    const fs::path out = dir_ / "masks";
    ASSERT_EQ(run({"infer", "--config", config_.string(), "--weights", weights_.string(), "--image",
                   (dir_ / "scene.ppm").string(), "--prompts", (dir_ / "prompts.txt").string(), "--out", out.string()}),
              kExitOk)
        << err_.str();
    std::size_t pgms = 0;
    for (const auto& e : fs::directory_iterator(out)) pgms += e.path().extension() == ".pgm";
    EXPECT_EQ(pgms, 3u);
    const Image8 mask = read_pnm(out / "mask_0.pgm");
    EXPECT_EQ(mask.width, 48u);
    EXPECT_EQ(mask.height, 48u);

    std::ifstream summary(out / "summary.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(summary, line)) {
        const json j = json::parse(line);
        EXPECT_EQ(j.at("prompt_index").get<std::size_t>(), n);
        EXPECT_TRUE(j.at("iou_score").is_number());
        EXPECT_EQ(j.at("mask_path").get<std::string>(), "mask_" + std::to_string(n) + ".pgm");
        ++n;
    }
    EXPECT_EQ(n, 3u);

    const fs::path again = dir_ / "masks2";
    ASSERT_EQ(run({"infer", "--config", config_.string(), "--weights", weights_.string(), "--image",
                   (dir_ / "scene.ppm").string(), "--prompts", (dir_ / "prompts.txt").string(), "--out",
                   again.string()}),
              kExitOk);
    for (const char* f : {"mask_0.pgm", "mask_1.pgm", "mask_2.pgm", "summary.jsonl"}) {
        EXPECT_EQ(slurp(out / f), slurp(again / f)) << f;
    }
}

TEST_F(CliTest, BadPromptFileIsDataError) {
    write_ppm(dir_ / "scene.ppm", square_scene(32));
    write_text(dir_ / "prompts.txt", "Q 1 2\n");
    EXPECT_EQ(run({"infer", "--config", config_.string(), "--weights", weights_.string(), "--image",
                   (dir_ / "scene.ppm").string(), "--prompts", (dir_ / "prompts.txt").string(), "--out",
                   (dir_ / "o").string()}),
              kExitData);
}

TEST_F(CliTest, SameSeedSameBytes) {
    const fs::path a = dir_ / "a.rvsw";
    const fs::path b = dir_ / "b.rvsw";
    const fs::path c = dir_ / "c.rvsw";
    ASSERT_EQ(run({"init", "--config", config_.string(), "--out", a.string(), "--seed", "9"}), kExitOk);
    ASSERT_EQ(run({"init", "--config", config_.string(), "--out", b.string(), "--seed", "9"}), kExitOk);
    ASSERT_EQ(run({"init", "--config", config_.string(), "--out", c.string(), "--seed", "10"}), kExitOk);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_NE(slurp(a), slurp(c));
}

TEST_F(CliTest, DistillKeepsDecoderAndReusesCache) {
    fs::create_directories(dir_ / "images");
    for (int i = 0; i < 3; ++i) {
        write_ppm(dir_ / "images" / ("s" + std::to_string(i) + ".ppm"), square_scene(40 + 8 * i));
    }
    const fs::path out = dir_ / "student.rvsw";
    const std::vector<std::string> args = {"distill",        "--config", config_.string(),
                                           "--images",       (dir_ / "images").string(),
                                           "--cache",        (dir_ / "cache").string(),
                                           "--student",      weights_.string(),
                                           "--out",          out.string()};
    ASSERT_EQ(run(args), kExitOk) << err_.str();
    json j = last_json();
    EXPECT_EQ(j.at("teacher_forwards").get<int>(), 3);
    EXPECT_EQ(j.at("steps").get<int>(), 6);
    const std::vector<std::uint8_t> first = slurp(out);

    const WeightFile before = read_weights(weights_);
    const WeightFile after = read_weights(out);
    std::size_t decoder_tensors = 0;
    for (const auto& [name, t] : before.tensors) {
        if (!name.starts_with(kDecoderPrefix)) continue;
        ++decoder_tensors;
        WeightFile a;
        WeightFile b;
        a.tensors.emplace(name, t);
        b.tensors.emplace(name, after.tensors.at(name));
        EXPECT_EQ(encode_weights(a), encode_weights(b)) << name;
    }
    EXPECT_GT(decoder_tensors, 0u);
    EXPECT_NE(before.tensors.at("encoder.neck.conv1.weight"), after.tensors.at("encoder.neck.conv1.weight"));

    std::ifstream csv(dir_ / "student.loss.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "step,loss");

    ASSERT_EQ(run(args), kExitOk);
    j = last_json();
    EXPECT_EQ(j.at("teacher_forwards").get<int>(), 0);
    EXPECT_EQ(j.at("reused").get<int>(), 3);
    EXPECT_EQ(slurp(out), first);
}

TEST_F(CliTest, DistillMissingImagesDirIsUsageError) {
    EXPECT_EQ(run({"distill", "--config", config_.string(), "--images", (dir_ / "none").string(), "--cache",
                   (dir_ / "cache").string(), "--out", (dir_ / "s.rvsw").string()}),
              kExitUsage);
}

TEST_F(CliTest, BenchWritesCsv) {
    const fs::path csv = dir_ / "bench.csv";
    ASSERT_EQ(run({"bench", "--config", config_.string(), "--weights", weights_.string(), "--iters", "3", "--warmup",
                   "1", "--compare", "--csv", csv.string()}),
              kExitOk)
        << err_.str();
    std::ifstream in(csv);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 3u);
    EXPECT_NE(out_.str().find("ratio"), std::string::npos);
    ASSERT_EQ(run({"bench", "--config", config_.string(), "--weights", weights_.string(), "--iters", "2", "--warmup",
                   "0", "--component", "e2e", "--form", "deploy"}),
              kExitOk)
        << err_.str();
    EXPECT_EQ(run({"bench", "--config", config_.string(), "--weights", weights_.string(), "--component", "gpu"}),
              kExitUsage);
}

TEST_F(CliTest, EvalSubcommands) {
    // Ground truth: a 16x16 square outline, its filled mask and a half-filled anomaly map.
    Image8 edge(32, 32, 1, 0);
    Image8 fill(32, 32, 1, 0);
    for (std::size_t i = 8; i < 24; ++i) {
        edge.at(8, i) = edge.at(23, i) = edge.at(i, 8) = edge.at(i, 23) = 255;
        for (std::size_t j = 8; j < 24; ++j) fill.at(i, j) = 255;
    }
    write_pgm(dir_ / "edge.pgm", edge);
    write_pgm(dir_ / "fill.pgm", fill);
    write_pgm(dir_ / "empty.pgm", Image8(32, 32, 1, 0));
    write_text(dir_ / "edge_gt.tsv", "im\tedge.pgm\n");
    write_text(dir_ / "edge_pred.tsv", "im\tedge.pgm\n");
    ASSERT_EQ(run({"eval-edge", "--gt-index", (dir_ / "edge_gt.tsv").string(), "--pred-index",
                   (dir_ / "edge_pred.tsv").string()}),
              kExitOk)
        << err_.str();
    EXPECT_DOUBLE_EQ(last_json().at("ods").get<double>(), 1.0);

    write_text(dir_ / "inst_gt.tsv", "im\tfill.pgm\n");
    write_text(dir_ / "inst_pred.tsv", "im\tfill.pgm\t0.9\nim\tempty.pgm\t0.1\n");
    ASSERT_EQ(run({"eval-instance", "--gt-index", (dir_ / "inst_gt.tsv").string(), "--pred-index",
                   (dir_ / "inst_pred.tsv").string()}),
              kExitOk)
        << err_.str();
    json j = last_json();
    EXPECT_DOUBLE_EQ(j.at("ap").get<double>(), 1.0);
    EXPECT_TRUE(j.at("ap_large").is_null());
    EXPECT_DOUBLE_EQ(j.at("ap_small").get<double>(), 1.0);

    write_text(dir_ / "cands.tsv", "im\tempty.pgm\nim\tfill.pgm\n");
    ASSERT_EQ(run({"eval-saliency", "--gt-index", (dir_ / "inst_gt.tsv").string(), "--candidates-index",
                   (dir_ / "cands.tsv").string()}),
              kExitOk);
    j = last_json();
    EXPECT_EQ(j.at("mae").get<double>(), 0.0);
    EXPECT_EQ(j.at("images").at(0).at("best").get<int>(), 1);

    write_text(dir_ / "scores.tsv", "im\tfill.pgm\n");
    ASSERT_EQ(run({"eval-anomaly", "--gt-index", (dir_ / "inst_gt.tsv").string(), "--score-index",
                   (dir_ / "scores.tsv").string()}),
              kExitOk);
    EXPECT_DOUBLE_EQ(last_json().at("f1_pixel_max").get<double>(), 1.0);

    EXPECT_EQ(run({"eval-edge", "--gt-index", (dir_ / "edge_gt.tsv").string()}), kExitUsage);
    write_text(dir_ / "orphan.tsv", "other\tfill.pgm\t0.5\n");
    EXPECT_EQ(run({"eval-instance", "--gt-index", (dir_ / "inst_gt.tsv").string(), "--pred-index",
                   (dir_ / "orphan.tsv").string()}),
              kExitData);
}

TEST_F(CliTest, EvalFromModel) {
    write_pgm(dir_ / "gt.pgm", Image8(32, 32, 1, 0));
    Image8 gt = Image8(32, 32, 1, 0);
    for (std::size_t i = 8; i < 24; ++i) gt.at(8, i) = 255;
    write_pgm(dir_ / "gt.pgm", gt);
    write_ppm(dir_ / "scene.ppm", square_scene(32));
    write_text(dir_ / "gt.tsv", "im\tgt.pgm\n");
    write_text(dir_ / "images.tsv", "im\tscene.ppm\n");
    ASSERT_EQ(run({"eval-edge", "--gt-index", (dir_ / "gt.tsv").string(), "--image-index",
                   (dir_ / "images.tsv").string(), "--weights", weights_.string(), "--config", config_.string(),
                   "--grid", "4", "--out", (dir_ / "edges").string()}),
              kExitOk)
        << err_.str();
    const json j = last_json();
    for (const char* k : {"ods", "ois", "ap"}) {
        EXPECT_GE(j.at(k).get<double>(), 0.0);
        EXPECT_LE(j.at(k).get<double>(), 1.0);
    }
    EXPECT_TRUE(fs::exists(dir_ / "edges" / "edge_im.pgm"));

    Image8 fill(32, 32, 1, 0);
    for (std::size_t y = 8; y < 24; ++y) {
        for (std::size_t x = 8; x < 24; ++x) fill.at(y, x) = 255;
    }
    write_pgm(dir_ / "fill.pgm", fill);
    write_text(dir_ / "inst_gt.tsv", "im\tfill.pgm\n");
    write_text(dir_ / "boxes.txt", "im 8 8 24 24 0.9\n");
    ASSERT_EQ(run({"eval-instance", "--gt-index", (dir_ / "inst_gt.tsv").string(), "--boxes",
                   (dir_ / "boxes.txt").string(), "--image-index", (dir_ / "images.tsv").string(), "--weights",
                   weights_.string(), "--config", config_.string()}),
              kExitOk)
        << err_.str();
    EXPECT_TRUE(last_json().at("ap").is_number());
}

TEST(PromptFile, Parsing) {
    const auto prompts = parse_prompt_file("# c\nP 1.5 2 1\nP 3 4 bg\nB 0 0 5 6\n\n");
    ASSERT_EQ(prompts.size(), 3u);
    EXPECT_TRUE(prompts[0].points.at(0).foreground);
    EXPECT_EQ(prompts[0].points[0].x, 1.5);
    EXPECT_FALSE(prompts[1].points.at(0).foreground);
    EXPECT_EQ(prompts[2].boxes.at(0).y2, 6.0);
    EXPECT_THROW(parse_prompt_file("P 1 2\n"), DataError);
    EXPECT_THROW(parse_prompt_file("P 1 2 maybe\n"), DataError);
    EXPECT_THROW(parse_prompt_file("B 1 2 x 4\n"), DataError);
}

TEST(IndexFile, RelativePathsAndScores) {
    TempDir dir("index");
    fs::create_directories(dir / "m");
    write_text(dir / "m/a.pgm", "");
    write_text(dir / "c.pgm", "");
    write_text(dir / "idx.tsv", "# header\na\tm/a.pgm\t0.5\nb c.pgm\n");
    const auto entries = read_index(dir / "idx.tsv");
    ASSERT_EQ(entries.size(), 2u);
    EXPECT_EQ(entries[0].path, dir / "m/a.pgm");
    EXPECT_EQ(*entries[0].score, 0.5);
    EXPECT_FALSE(entries[1].score.has_value());
    EXPECT_THROW(read_index(dir / "missing.tsv"), DataError);
    write_text(dir / "dangling.tsv", "a\tnope.pgm\n");
    EXPECT_THROW(read_index(dir / "dangling.tsv"), DataError);
}

}  // namespace
}  // namespace rvsam

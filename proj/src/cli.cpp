// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <new>
#include <sstream>

#include "rvsam/bench.hpp"
#include "rvsam/distill.hpp"
#include "rvsam/edge_pipeline.hpp"
#include "rvsam/eval.hpp"
#include "rvsam/image.hpp"
#include "rvsam/model.hpp"
#include "rvsam/predictor.hpp"
#include "rvsam/reparam.hpp"

namespace rvsam {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
public:
    using Error::Error;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    if (line.find('\t') != std::string::npos) {
        std::string field;
        std::istringstream in(line);
        while (std::getline(in, field, '\t')) out.push_back(field);
    } else {
        std::istringstream in(line);
        std::string field;
        while (in >> field) out.push_back(field);
    }
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw DataError(where + ": '" + s + "' is not a number");
    return v;
}

struct Common {
    fs::path config;
    fs::path weights;
};

ModelConfig load_config(const fs::path& path) {
    ModelConfig cfg = model_config_from(ConfigFile::load(path));
    cfg.validate();
    return cfg;
}

Model load_with_decoder(const fs::path& weights, const ModelConfig& cfg) {
    Model m = load_model(weights, cfg);
    if (!m.decoder) throw DataError(weights.string() + " carries no decoder tensors");
    return m;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Groups index entries by id, keeping first-appearance order of ids.
struct GroupedIndex {
    std::vector<std::string> order;
    std::map<std::string, std::vector<IndexEntry>> entries;
};

GroupedIndex group_index(const std::vector<IndexEntry>& list) {
    GroupedIndex g;
    for (const IndexEntry& e : list) {
        auto [it, fresh] = g.entries.try_emplace(e.id);
        if (fresh) g.order.push_back(e.id);
        it->second.push_back(e);
    }
    return g;
}

const IndexEntry& single_entry(const GroupedIndex& g, const std::string& id, const char* what) {
    const auto it = g.entries.find(id);
    if (it == g.entries.end()) throw DataError(std::string(what) + ": no entry for image '" + id + "'");
    if (it->second.size() != 1) throw DataError(std::string(what) + ": several entries for image '" + id + "'");
    return it->second.front();
}

Tensor<float> read_binary_mask(const fs::path& p) { return gray_to_binary(read_pnm(p)); }

// ---- subcommands ------------------------------------------------------------

struct InitArgs {
    fs::path config;
    fs::path out;
    std::uint64_t seed = 0;
    bool encoder_only = false;
    bool deploy = false;
};

int cmd_init(const InitArgs& a, std::ostream& out) {
    const ModelConfig cfg = load_config(a.config);
    Model m = build_model(cfg, a.seed);
    if (a.encoder_only) m.decoder.reset();
    if (a.deploy) m.encoder = fuse_encoder(m.encoder);
    save_model(a.out, m);
    out << "wrote " << a.out.string() << " (" << m.encoder.parameter_count() << " encoder parameters)\n";
    return kExitOk;
}

struct FuseArgs {
    fs::path config;
    fs::path in;
    fs::path out;
};

int cmd_fuse(const FuseArgs& a, std::ostream& out) {
    const ModelConfig cfg = load_config(a.config);
    Model m = load_model(a.in, cfg);
    const std::size_t before = m.encoder.parameter_count();
    m.encoder = fuse_encoder(m.encoder);
    save_model(a.out, m);
    out << "fused " << before << " -> " << m.encoder.parameter_count() << " encoder parameters\n";
    return kExitOk;
}

struct InferArgs {
    Common common;
    fs::path image;
    fs::path prompts;
    fs::path out;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
    const ModelConfig cfg = load_config(a.common.config);
    const std::vector<Prompt> prompts = parse_prompt_file(read_file(a.prompts));
    if (prompts.empty()) throw DataError(a.prompts.string() + " holds no prompts");
    const Image8 image = read_pnm(a.image);
    const Model model = load_with_decoder(a.common.weights, cfg);

    SamPredictor predictor(model);
    predictor.set_image(image);
    fs::create_directories(a.out);
    std::ostringstream summary;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const PromptResult r = predictor.predict(prompts[i]);
        const std::string name = "mask_" + std::to_string(i) + ".pgm";
        write_pgm(a.out / name, probability_to_gray(r.probability));
        json line{{"prompt_index", i}, {"iou_score", r.iou_score}, {"mask_path", name}, {"selected", r.selected}};
        summary << line.dump() << '\n';
    }
    write_file(a.out / "summary.jsonl", summary.str());
    out << "wrote " << prompts.size() << " masks to " << a.out.string() << '\n';
    return kExitOk;
}

struct DistillArgs {
    fs::path config;
    fs::path images;
    fs::path cache;
    fs::path out;
    fs::path teacher;
    fs::path student;
    fs::path loss_csv;
    std::uint64_t teacher_seed = 1;
    std::optional<std::uint64_t> seed;
};

int cmd_distill(const DistillArgs& a, std::ostream& out) {
    const ConfigFile file = ConfigFile::load(a.config);
    ModelConfig cfg = model_config_from(file);
    cfg.validate();
    DistillConfig dc = distill_config_from(file);
    if (a.seed) dc.seed = *a.seed;
    dc.validate();

    const std::vector<ImageEntry> images = list_images(a.images);
    if (images.empty()) throw DataError("no .pgm/.ppm images in " + a.images.string());

    const EncoderWeights<float> teacher =
        a.teacher.empty() ? build_encoder<float>(cfg.encoder, a.teacher_seed) : load_model(a.teacher, cfg).encoder;
    Model student;
    if (a.student.empty()) {
        student.config = cfg;
        student.encoder = build_encoder<float>(cfg.encoder, dc.seed);
    } else {
        student = load_model(a.student, cfg);
    }

    const PrecomputeStats stats = precompute_embeddings(cfg.encoder, teacher, images, a.cache);
    std::vector<DistillSample> data;
    for (const ImageEntry& img : images) {
        data.push_back({img.id, preprocess_image(read_pnm(img.path), cfg.encoder).tensor,
                        load_cached_embedding(a.cache, img.id)});
    }
    DistillResult r = distill(cfg.encoder, student.encoder, data, dc);
    student.encoder = std::move(r.weights);
    save_model(a.out, student);

    std::ostringstream csv;
    csv << "step,loss\n";
    csv.precision(9);
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i) csv << i << ',' << r.loss_curve[i] << '\n';
    fs::path csv_path = a.loss_csv;
    if (csv_path.empty()) csv_path = fs::path(a.out).replace_extension(".loss.csv");
    write_file(csv_path, csv.str());

    json summary{{"teacher_forwards", stats.teacher_forwards},
                 {"reused", stats.reused},
                 {"steps", r.steps},
                 {"initial_loss", r.initial_loss},
                 {"final_loss", r.final_loss}};
    out << summary.dump() << '\n';
    return kExitOk;
}

struct BenchArgs {
    Common common;
    std::string component = "encoder";
    std::string form;
    std::size_t iters = 50;
    std::size_t warmup = 10;
    std::size_t threads = 1;
    std::uint64_t seed = 0;
    fs::path csv;
    bool compare = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    const ModelConfig cfg = load_config(a.common.config);
    BenchOptions opts;
    opts.component = parse_component(a.component);
    opts.iters = a.iters;
    opts.warmup = a.warmup;
    opts.threads = a.threads;
    opts.seed = a.seed;
    if (opts.iters == 0) throw UsageError("--iters must be at least 1");

    Model model = load_model(a.common.weights, cfg);
    std::vector<BenchReport> reports;
    if (a.compare) {
        if (model.encoder.form != WeightForm::train) throw UsageError("--compare needs train-form weights");
        Model deploy = model;
        deploy.encoder = fuse_encoder(model.encoder);
        const FormComparison c = compare_forms(model, deploy, opts);
        reports = {c.train, c.deploy};
        out << reports_to_table(reports) << "train/deploy p50 ratio: " << c.ratio << '\n';
    } else {
        if (a.form == "deploy" && model.encoder.form == WeightForm::train) {
            model.encoder = fuse_encoder(model.encoder);
        } else if (a.form == "train" && model.encoder.form == WeightForm::deploy) {
            throw UsageError("--form train needs train-form weights; deploy weights cannot be unfused");
        }
        reports.push_back(bench_model(model, opts));
        out << reports_to_table(reports);
    }
    if (!a.csv.empty()) write_file(a.csv, reports_to_csv(reports));
    return kExitOk;
}

struct EdgeArgs {
    fs::path gt_index;
    fs::path pred_index;
    fs::path image_index;
    Common common;
    fs::path out;
    double tolerance = 2.0;
    std::size_t thresholds = 30;
    std::size_t grid = 16;
    double nms_iou = 0.7;
};

int cmd_eval_edge(const EdgeArgs& a, std::ostream& out) {
    const bool from_model = !a.image_index.empty();
    if (from_model == !a.pred_index.empty()) throw UsageError("give exactly one of --pred-index and --image-index");
    if (from_model && (a.common.weights.empty() || a.common.config.empty())) {
        throw UsageError("--image-index needs --weights and --config");
    }
    const GroupedIndex gt = group_index(read_index(a.gt_index));
    const GroupedIndex src = group_index(read_index(from_model ? a.image_index : a.pred_index));

    std::vector<Tensor<float>> strengths;
    std::vector<Tensor<float>> gts;
    std::optional<Model> model;
    std::optional<SamPredictor> predictor;
    if (from_model) {
        model = load_with_decoder(a.common.weights, load_config(a.common.config));
        predictor.emplace(*model);
    }
    for (const std::string& id : gt.order) {
        gts.push_back(read_binary_mask(single_entry(gt, id, "gt index").path));
        const fs::path& p = single_entry(src, id, from_model ? "image index" : "prediction index").path;
        if (from_model) {
            EdgePipelineOptions opts;
            opts.grid = a.grid;
            opts.nms_iou = a.nms_iou;
            EdgePipelineResult r = run_edge_pipeline(*predictor, read_pnm(p), opts);
            if (!a.out.empty()) {
                fs::create_directories(a.out);
                write_pgm(a.out / ("edge_" + id + ".pgm"), probability_to_gray(r.strength));
            }
            strengths.push_back(std::move(r.strength));
        } else {
            strengths.push_back(gray_to_unit(read_pnm(p)));
        }
    }
    const EdgeMetrics m = edge_metrics(strengths, gts, a.tolerance, a.thresholds);
    out << json{{"ods", m.ods}, {"ois", m.ois}, {"ap", m.ap}, {"images", gts.size()}}.dump() << '\n';
    return kExitOk;
}

struct InstanceArgs {
    fs::path gt_index;
    fs::path pred_index;
    fs::path boxes;
    fs::path image_index;
    Common common;
};

int cmd_eval_instance(const InstanceArgs& a, std::ostream& out) {
    const bool from_boxes = !a.boxes.empty();
    if (from_boxes == !a.pred_index.empty()) throw UsageError("give exactly one of --pred-index and --boxes");
    if (from_boxes && (a.image_index.empty() || a.common.weights.empty() || a.common.config.empty())) {
        throw UsageError("--boxes needs --image-index, --weights and --config");
    }
    const GroupedIndex gt = group_index(read_index(a.gt_index));
    std::map<std::string, std::size_t> slot;
    std::vector<ImageInstances> images(gt.order.size());
    for (std::size_t i = 0; i < gt.order.size(); ++i) {
        slot[gt.order[i]] = i;
        for (const IndexEntry& e : gt.entries.at(gt.order[i])) {
            images[i].ground_truth.push_back(read_binary_mask(e.path));
        }
    }
    auto image_slot = [&](const std::string& id) {
        const auto it = slot.find(id);
        if (it == slot.end()) throw DataError("prediction for image '" + id + "' which has no ground truth");
        return it->second;
    };

    if (from_boxes) {
        const GroupedIndex imgs = group_index(read_index(a.image_index));
        std::map<std::string, std::vector<std::pair<BoxPrompt, double>>> boxes;
        std::istringstream in(read_file(a.boxes));
        std::string line;
        for (std::size_t n = 1; std::getline(in, line); ++n) {
            const auto f = split_fields(line);
            if (f.empty() || f[0][0] == '#') continue;
            const std::string where = a.boxes.string() + ":" + std::to_string(n);
            if (f.size() != 6) throw DataError(where + ": expected 'image_id x1 y1 x2 y2 score'");
            BoxPrompt b{parse_number(f[1], where), parse_number(f[2], where), parse_number(f[3], where),
                        parse_number(f[4], where)};
            (void)image_slot(f[0]);
            boxes[f[0]].push_back({b, parse_number(f[5], where)});
        }
        const Model model = load_with_decoder(a.common.weights, load_config(a.common.config));
        SamPredictor predictor(model);
        for (const auto& [id, list] : boxes) {
            predictor.set_image(read_pnm(single_entry(imgs, id, "image index").path));
            for (const auto& [box, score] : list) {
                Prompt p;
                p.boxes.push_back(box);
                images[image_slot(id)].predictions.push_back({binarize(predictor.predict(p).probability), score});
            }
        }
    } else {
        for (const IndexEntry& e : read_index(a.pred_index)) {
            if (!e.score) throw DataError(a.pred_index.string() + ": prediction '" + e.path.string() + "' has no score");
            images[image_slot(e.id)].predictions.push_back({read_binary_mask(e.path), *e.score});
        }
    }
    const ApScores s = instance_ap(images);
    out << json{{"ap", s.ap},
                {"ap_small", optional_json(s.ap_small)},
                {"ap_medium", optional_json(s.ap_medium)},
                {"ap_large", optional_json(s.ap_large)}}
               .dump()
        << '\n';
    return kExitOk;
}

struct SaliencyArgs {
    fs::path gt_index;
    fs::path candidates_index;
};

int cmd_eval_saliency(const SaliencyArgs& a, std::ostream& out) {
    const GroupedIndex gt = group_index(read_index(a.gt_index));
    const GroupedIndex cands = group_index(read_index(a.candidates_index));
    json per_image = json::array();
    double total = 0;
    for (const std::string& id : gt.order) {
        const auto it = cands.entries.find(id);
        if (it == cands.entries.end()) throw DataError("no candidate masks for image '" + id + "'");
        std::vector<Tensor<float>> masks;
        for (const IndexEntry& e : it->second) masks.push_back(read_binary_mask(e.path));
        const SaliencyResult r = saliency_mae(masks, read_binary_mask(single_entry(gt, id, "gt index").path));
        total += r.mae;
        per_image.push_back({{"image_id", id}, {"best", r.best}, {"iou", r.iou}, {"mae", r.mae}});
    }
    const double mae = gt.order.empty() ? 0.0 : total / static_cast<double>(gt.order.size());
    out << json{{"mae", mae}, {"images", per_image}}.dump() << '\n';
    return kExitOk;
}

struct AnomalyArgs {
    fs::path gt_index;
    fs::path score_index;
};

int cmd_eval_anomaly(const AnomalyArgs& a, std::ostream& out) {
    const GroupedIndex gt = group_index(read_index(a.gt_index));
    const GroupedIndex scores = group_index(read_index(a.score_index));
    std::vector<Tensor<float>> maps;
    std::vector<Tensor<float>> masks;
    for (const std::string& id : gt.order) {
        masks.push_back(read_binary_mask(single_entry(gt, id, "gt index").path));
        maps.push_back(gray_to_unit(read_pnm(single_entry(scores, id, "score index").path)));
    }
    out << json{{"f1_pixel_max", max_f1_pixel(maps, masks)}, {"images", masks.size()}}.dump() << '\n';
    return kExitOk;
}

}  // namespace

std::vector<Prompt> parse_prompt_file(const std::string& text) {
    std::vector<Prompt> prompts;
    std::istringstream in(text);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto f = split_fields(line);
        if (f.empty() || f[0][0] == '#') continue;
        const std::string where = "prompt line " + std::to_string(n);
        Prompt p;
        if (f[0] == "P") {
            if (f.size() != 4) throw DataError(where + ": expected 'P x y label'");
            bool fg = false;
            if (f[3] == "1" || f[3] == "fg") {
                fg = true;
            } else if (f[3] != "0" && f[3] != "bg") {
                throw DataError(where + ": label must be 1/fg or 0/bg");
            }
            p.points.push_back({parse_number(f[1], where), parse_number(f[2], where), fg});
        } else if (f[0] == "B") {
            if (f.size() != 5) throw DataError(where + ": expected 'B x1 y1 x2 y2'");
            BoxPrompt b{parse_number(f[1], where), parse_number(f[2], where), parse_number(f[3], where),
                        parse_number(f[4], where)};
            if (!(b.x1 < b.x2 && b.y1 < b.y2)) throw DataError(where + ": box corners must satisfy x1 < x2, y1 < y2");
            p.boxes.push_back(b);
        } else {
            throw DataError(where + ": unknown record '" + f[0] + "'");
        }
        prompts.push_back(std::move(p));
    }
    return prompts;
}

std::vector<IndexEntry> read_index(const fs::path& index) {
    std::vector<IndexEntry> out;
    std::istringstream in(read_file(index));
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto f = split_fields(line);
        if (f.empty() || f[0].empty() || f[0][0] == '#') continue;
        const std::string where = index.string() + ":" + std::to_string(n);
        if (f.size() < 2 || f.size() > 3) throw DataError(where + ": expected 'image_id<TAB>path[<TAB>score]'");
        IndexEntry e;
        e.id = f[0];
        e.path = fs::path(f[1]).is_absolute() ? fs::path(f[1]) : index.parent_path() / f[1];
        if (f.size() == 3) e.score = parse_number(f[2], where);
        if (!fs::exists(e.path)) throw DataError(where + ": missing file " + e.path.string());
        out.push_back(std::move(e));
    }
    return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"RepViT segmentation engine: fusion, inference, distillation, benchmarking and evaluation", "rvsam"};
    app.require_subcommand(1);

    auto add_seed = [](CLI::App* sub, std::uint64_t& seed) {
        sub->add_option("--seed", seed, "seed for every stochastic component")->capture_default_str();
    };

    InitArgs init;
    CLI::App* init_cmd = app.add_subcommand("init", "write a seeded model");
    init_cmd->add_option("--config", init.config)->required()->check(CLI::ExistingFile);
    init_cmd->add_option("--out", init.out)->required();
    add_seed(init_cmd, init.seed);
    init_cmd->add_flag("--encoder-only", init.encoder_only, "omit decoder tensors");
    init_cmd->add_flag("--deploy", init.deploy, "write the fused encoder");

    FuseArgs fuse;
    CLI::App* fuse_cmd = app.add_subcommand("fuse", "convert train-form weights to deploy form");
    fuse_cmd->add_option("--config", fuse.config)->required()->check(CLI::ExistingFile);
    fuse_cmd->add_option("--in", fuse.in)->required()->check(CLI::ExistingFile);
    fuse_cmd->add_option("--out", fuse.out)->required();

    InferArgs infer;
    CLI::App* infer_cmd = app.add_subcommand("infer", "decode every prompt of a prompt file");
    infer_cmd->add_option("--config", infer.common.config)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--weights", infer.common.weights)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--image", infer.image)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--prompts", infer.prompts)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--out", infer.out, "output directory")->required();

    DistillArgs dist;
    std::uint64_t dist_seed = 0;
    CLI::App* dist_cmd = app.add_subcommand("distill", "precompute teacher embeddings and distil the encoder");
    dist_cmd->add_option("--config", dist.config)->required()->check(CLI::ExistingFile);
    dist_cmd->add_option("--images", dist.images)->required()->check(CLI::ExistingDirectory);
    dist_cmd->add_option("--cache", dist.cache)->required();
    dist_cmd->add_option("--out", dist.out)->required();
    dist_cmd->add_option("--teacher", dist.teacher, "teacher weights (default: seeded random encoder)")
        ->check(CLI::ExistingFile);
    dist_cmd->add_option("--student", dist.student, "initial student weights")->check(CLI::ExistingFile);
    dist_cmd->add_option("--teacher-seed", dist.teacher_seed)->capture_default_str();
    dist_cmd->add_option("--loss-csv", dist.loss_csv);
    CLI::Option* dist_seed_opt = dist_cmd->add_option("--seed", dist_seed, "overrides distill.seed");

    BenchArgs bench;
    CLI::App* bench_cmd = app.add_subcommand("bench", "time encoder, decoder or end-to-end latency");
    bench_cmd->add_option("--config", bench.common.config)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--weights", bench.common.weights)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--component", bench.component)
        ->check(CLI::IsMember({"encoder", "decoder", "e2e"}))
        ->capture_default_str();
    bench_cmd->add_option("--form", bench.form)->check(CLI::IsMember({"train", "deploy"}));
    bench_cmd->add_option("--iters", bench.iters)->capture_default_str();
    bench_cmd->add_option("--warmup", bench.warmup)->capture_default_str();
    bench_cmd->add_option("--threads", bench.threads, "recorded in the report")->capture_default_str();
    bench_cmd->add_option("--csv", bench.csv);
    bench_cmd->add_flag("--compare", bench.compare, "time train and fused forms back to back");
    add_seed(bench_cmd, bench.seed);

    EdgeArgs edge;
    CLI::App* edge_cmd = app.add_subcommand("eval-edge", "ODS / OIS / AP of edge maps");
    edge_cmd->add_option("--gt-index", edge.gt_index)->required()->check(CLI::ExistingFile);
    edge_cmd->add_option("--pred-index", edge.pred_index, "precomputed strength maps")->check(CLI::ExistingFile);
    edge_cmd->add_option("--image-index", edge.image_index, "images to run the grid pipeline on")
        ->check(CLI::ExistingFile);
    edge_cmd->add_option("--config", edge.common.config)->check(CLI::ExistingFile);
    edge_cmd->add_option("--weights", edge.common.weights)->check(CLI::ExistingFile);
    edge_cmd->add_option("--out", edge.out, "directory for pipeline strength maps");
    edge_cmd->add_option("--tolerance", edge.tolerance)->capture_default_str();
    edge_cmd->add_option("--thresholds", edge.thresholds)->capture_default_str();
    edge_cmd->add_option("--grid", edge.grid)->capture_default_str();
    edge_cmd->add_option("--nms-iou", edge.nms_iou)->capture_default_str();

    InstanceArgs inst;
    CLI::App* inst_cmd = app.add_subcommand("eval-instance", "COCO-style mask AP");
    inst_cmd->add_option("--gt-index", inst.gt_index)->required()->check(CLI::ExistingFile);
    inst_cmd->add_option("--pred-index", inst.pred_index)->check(CLI::ExistingFile);
    inst_cmd->add_option("--boxes", inst.boxes, "'image_id x1 y1 x2 y2 score' lines")->check(CLI::ExistingFile);
    inst_cmd->add_option("--image-index", inst.image_index)->check(CLI::ExistingFile);
    inst_cmd->add_option("--config", inst.common.config)->check(CLI::ExistingFile);
    inst_cmd->add_option("--weights", inst.common.weights)->check(CLI::ExistingFile);

    SaliencyArgs sal;
    CLI::App* sal_cmd = app.add_subcommand("eval-saliency", "MAE of the best-aligned candidate mask");
    sal_cmd->add_option("--gt-index", sal.gt_index)->required()->check(CLI::ExistingFile);
    sal_cmd->add_option("--candidates-index", sal.candidates_index)->required()->check(CLI::ExistingFile);

    AnomalyArgs anom;
    CLI::App* anom_cmd = app.add_subcommand("eval-anomaly", "max pixel F1 of anomaly score maps");
    anom_cmd->add_option("--gt-index", anom.gt_index)->required()->check(CLI::ExistingFile);
    anom_cmd->add_option("--score-index", anom.score_index)->required()->check(CLI::ExistingFile);

    std::vector<std::string> argv_store{"rvsam"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (std::string& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*init_cmd) return cmd_init(init, out);
        if (*fuse_cmd) return cmd_fuse(fuse, out);
        if (*infer_cmd) return cmd_infer(infer, out);
        if (*dist_cmd) {
            if (dist_seed_opt->count() > 0) dist.seed = dist_seed;
            return cmd_distill(dist, out);
        }
        if (*bench_cmd) return cmd_bench(bench, out);
        if (*edge_cmd) return cmd_eval_edge(edge, out);
        if (*inst_cmd) return cmd_eval_instance(inst, out);
        if (*sal_cmd) return cmd_eval_saliency(sal, out);
        if (*anom_cmd) return cmd_eval_anomaly(anom, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace rvsam

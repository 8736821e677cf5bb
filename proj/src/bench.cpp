// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <new>
#include <numeric>
#include <random>
#include <sstream>

namespace rvsam {

BenchComponent parse_component(std::string_view s) {
    if (s == "encoder") return BenchComponent::encoder;
    if (s == "decoder") return BenchComponent::decoder;
    if (s == "e2e" || s == "end_to_end") return BenchComponent::end_to_end;
    throw ConfigError("bench: unknown component '" + std::string(s) + "'");
}

const char* component_name(BenchComponent c) {
    switch (c) {
        case BenchComponent::encoder:
            return "encoder";
        case BenchComponent::decoder:
            return "decoder";
        case BenchComponent::end_to_end:
            return "e2e";
    }
    return "?";
}

const char* form_name(WeightForm f) { return f == WeightForm::train ? "train" : "deploy"; }

Stopwatch steady_stopwatch() {
    return [](const std::function<void()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        const auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(t1 - t0).count();
    };
}

double nearest_rank_percentile(std::vector<double> samples, double p) {
    if (samples.empty()) throw Error("percentile of an empty sample list");
    std::sort(samples.begin(), samples.end());
    const auto n = static_cast<double>(samples.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, samples.size());
    return samples[rank - 1];
}

void summarize(BenchReport& r) {
    if (r.samples_ms.empty()) return;
    r.p50 = nearest_rank_percentile(r.samples_ms, 50);
    r.p90 = nearest_rank_percentile(r.samples_ms, 90);
    r.p99 = nearest_rank_percentile(r.samples_ms, 99);
    r.mean = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) / static_cast<double>(r.samples_ms.size());
}

BenchReport run_benchmark(const std::function<void()>& body, const BenchOptions& opts, WeightForm form,
                          const Stopwatch& clock) {
    if (opts.iters == 0) throw ConfigError("bench: iters must be >= 1");
    BenchReport r;
    r.component = opts.component;
    r.form = form;
    r.warmup = opts.warmup;
    r.iters = opts.iters;
    r.threads = opts.threads;
    try {
        for (std::size_t i = 0; i < opts.warmup; ++i) clock(body);
        r.samples_ms.reserve(opts.iters);
        for (std::size_t i = 0; i < opts.iters; ++i) r.samples_ms.push_back(clock(body));
    } catch (const std::bad_alloc&) {
        r.oom = true;
        r.samples_ms.clear();
        return r;
    }
    summarize(r);
    return r;
}

BenchReport bench_model(const Model& model, const BenchOptions& opts, const Stopwatch& clock) {
    const EncoderConfig& ecfg = model.config.encoder;
    const std::size_t s = ecfg.input_size;
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    Tensor<float> input = Tensor<float>::nchw(1, 3, s, s);
    for (float& v : input.data()) v = normal(rng);

    if (opts.component == BenchComponent::encoder) {
        return run_benchmark([&] { (void)encoder_forward(ecfg, model.encoder, input); }, opts, model.encoder.form,
                             clock);
    }
    if (!model.decoder) throw DataError("bench: the weights carry no decoder tensors");
    const DecoderWeights& dec = *model.decoder;
    PreprocessRecord rec{s, s, s, s, 1.0, s};
    Prompt prompt;
    prompt.points.push_back({static_cast<double>(s) / 2, static_cast<double>(s) / 2, true});
    const Tensor<float> dense_pe = dense_positional_encoding(dec.get("prompt.pe_gaussian"), ecfg.embedding_size());

    if (opts.component == BenchComponent::decoder) {
        try {
            const Tensor<float> embedding = encoder_forward(ecfg, model.encoder, input);
            return run_benchmark(
                [&] {
                    const Tensor<float> tokens = encode_prompts(prompt, rec, dec);
                    (void)decoder_forward(model.config.decoder, embedding, dense_pe, tokens, dec);
                },
                opts, model.encoder.form, clock);
        } catch (const std::bad_alloc&) {
            BenchReport r;
            r.component = opts.component;
            r.form = model.encoder.form;
            r.oom = true;
            return r;
        }
    }
    return run_benchmark(
        [&] {
            const Tensor<float> embedding = encoder_forward(ecfg, model.encoder, input);
            const Tensor<float> tokens = encode_prompts(prompt, rec, dec);
            (void)postprocess_mask(decoder_forward(model.config.decoder, embedding, dense_pe, tokens, dec), rec);
        },
        opts, model.encoder.form, clock);
}

FormComparison compare_forms(const Model& train, const Model& deploy, const BenchOptions& opts,
                             const Stopwatch& clock) {
    if (to_config_text(train.config) != to_config_text(deploy.config)) {
        throw ConfigError("bench: the two models were loaded with different configs");
    }
    FormComparison c;
    c.train = bench_model(train, opts, clock);
    c.deploy = bench_model(deploy, opts, clock);
    if (!c.train.oom && !c.deploy.oom && c.deploy.p50 > 0) c.ratio = c.train.p50 / c.deploy.p50;
    return c;
}

std::string reports_to_csv(const std::vector<BenchReport>& reports) {
    std::ostringstream os;
    os << "component,form,warmup,iters,threads,p50_ms,p90_ms,p99_ms,mean_ms,status\n";
    os << std::fixed << std::setprecision(4);
    for (const BenchReport& r : reports) {
        os << component_name(r.component) << ',' << form_name(r.form) << ',' << r.warmup << ',' << r.iters << ','
           << r.threads << ',';
        if (r.oom) {
            os << ",,,,OOM\n";
        } else {
            os << r.p50 << ',' << r.p90 << ',' << r.p99 << ',' << r.mean << ",ok\n";
        }
    }
    return os.str();
}

std::string reports_to_table(const std::vector<BenchReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(10) << "component" << std::setw(8) << "form" << std::right << std::setw(11)
       << "p50 (ms)" << std::setw(11) << "p90 (ms)" << std::setw(11) << "p99 (ms)" << std::setw(11) << "mean (ms)"
       << std::setw(7) << "iters" << '\n';
    os << std::fixed << std::setprecision(3);
    for (const BenchReport& r : reports) {
        os << std::left << std::setw(10) << component_name(r.component) << std::setw(8) << form_name(r.form)
           << std::right;
        if (r.oom) {
            os << std::setw(44) << "OOM";
        } else {
            os << std::setw(11) << r.p50 << std::setw(11) << r.p90 << std::setw(11) << r.p99 << std::setw(11)
               << r.mean;
        }
        os << std::setw(7) << r.iters << '\n';
    }
    return os.str();
}

}  // namespace rvsam

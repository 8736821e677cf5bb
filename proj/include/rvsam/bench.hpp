// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rvsam/model.hpp"

namespace rvsam {

enum class BenchComponent { encoder, decoder, end_to_end };

BenchComponent parse_component(std::string_view s);
const char* component_name(BenchComponent c);
const char* form_name(WeightForm f);

struct BenchOptions {
    BenchComponent component = BenchComponent::encoder;
    std::size_t warmup = 10;
    std::size_t iters = 50;
    std::size_t threads = 1;
    std::uint64_t seed = 0;
};

struct BenchReport {
    BenchComponent component = BenchComponent::encoder;
    WeightForm form = WeightForm::train;
    std::vector<double> samples_ms;
    double p50 = 0;
    double p90 = 0;
    double p99 = 0;
    double mean = 0;
    std::size_t warmup = 0;
    std::size_t iters = 0;
    std::size_t threads = 1;
    bool oom = false;
};

/// Runs `body` once and returns its wall time in milliseconds.
using Stopwatch = std::function<double(const std::function<void()>& body)>;

Stopwatch steady_stopwatch();

// Nearest rank: the ceil(p / 100 * n)-th smallest sample.
double nearest_rank_percentile(std::vector<double> samples, double p);

// Fills percentiles and mean from `samples_ms`.
void summarize(BenchReport& report);

// warmup + iters calls of `body`, the last `iters` recorded. std::bad_alloc is
// reported through BenchReport::oom.
BenchReport run_benchmark(const std::function<void()>& body, const BenchOptions& opts, WeightForm form,
                          const Stopwatch& clock = steady_stopwatch());

// Times the requested component on one fixed random input.
BenchReport bench_model(const Model& model, const BenchOptions& opts, const Stopwatch& clock = steady_stopwatch());

struct FormComparison {
    BenchReport train;
    BenchReport deploy;
    double ratio = 0;  // train.p50 / deploy.p50
};

FormComparison compare_forms(const Model& train, const Model& deploy, const BenchOptions& opts,
                             const Stopwatch& clock = steady_stopwatch());

std::string reports_to_csv(const std::vector<BenchReport>& reports);
std::string reports_to_table(const std::vector<BenchReport>& reports);

}  // namespace rvsam

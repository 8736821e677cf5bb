// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rvsam/encoder.hpp"

namespace rvsam {

template <typename T>
struct LossResult {
    double loss = 0;
    Tensor<T> grad;
};

// Mean squared error over all elements and its gradient 2 (s - t) / N.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& student, const Tensor<T>& teacher);

template <typename T>
struct AdamState {
    std::size_t step = 0;
    TensorMap<T> m;
    TensorMap<T> v;
};

// Bias-corrected Adam over every tensor named in `grads`.
template <typename T>
void adam_step(TensorMap<T>& params, const TensorMap<T>& grads, AdamState<T>& state, const DistillConfig& cfg);

// ---- embedding cache --------------------------------------------------------

struct ImageEntry {
    std::string id;
    std::filesystem::path path;
};

// *.pgm / *.ppm files in `dir`, sorted by file name; id = file stem.
std::vector<ImageEntry> list_images(const std::filesystem::path& dir);

// Stable digest of a teacher's config and weights.
std::string teacher_hash(const EncoderConfig& cfg, const EncoderWeights<float>& teacher);

struct PrecomputeStats {
    std::size_t teacher_forwards = 0;
    std::size_t reused = 0;
};

/// `<dir>/<id>.rvsw` holds tensor `emb/<id>`; `<dir>/manifest.txt` lists the
/// teacher hash and ids. Entries are reused when the manifest hash matches.
PrecomputeStats precompute_embeddings(const EncoderConfig& cfg, const EncoderWeights<float>& teacher,
                                      const std::vector<ImageEntry>& images, const std::filesystem::path& cache_dir);

Tensor<float> load_cached_embedding(const std::filesystem::path& cache_dir, const std::string& id);

struct CacheManifest {
    std::string teacher_hash;
    std::vector<std::string> ids;
};

CacheManifest read_manifest(const std::filesystem::path& cache_dir);

// ---- training ---------------------------------------------------------------

struct DistillSample {
    std::string id;
    Tensor<float> input;   // preprocessed (1, 3, s, s)
    Tensor<float> target;  // teacher embedding
};

struct DistillResult {
    EncoderWeights<float> weights;
    std::vector<double> loss_curve;  // one entry per step, before the update
    double initial_loss = 0;         // mean over samples before training
    double final_loss = 0;           // mean over samples after training
    std::size_t steps = 0;
};

// Batch size 1, seeded per-epoch shuffle, frozen BatchNorm statistics.
// Throws NumericError when the loss stops being finite.
DistillResult distill(const EncoderConfig& cfg, EncoderWeights<float> student, const std::vector<DistillSample>& data,
                      const DistillConfig& dc);

double mean_loss(const EncoderConfig& cfg, const EncoderWeights<float>& w, const std::vector<DistillSample>& data);

// ---- gradient verification --------------------------------------------------

struct GradientSample {
    std::string name;
    std::size_t index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_error = 0;
};

struct GradientCheckResult {
    double max_rel_error = 0;
    std::vector<GradientSample> samples;
};

inline constexpr double kRelativeErrorFloor = 1e-6;

// |a - n| / max(|a|, |n|, kRelativeErrorFloor); 0 when both are below 1e-12.
double relative_error(double analytic, double numeric);

// Compares encoder_backward composed with mse_loss against central
// differences on `n_params` randomly drawn trainable elements.
GradientCheckResult gradient_check(const EncoderConfig& cfg, EncoderWeights<double> w, const Tensor<double>& input,
                                   const Tensor<double>& target, std::size_t n_params, double eps, std::uint64_t seed,
                                   BnMode mode = BnMode::eval);

// Seeded weights, input and target for the given config.
GradientCheckResult gradient_check(const EncoderConfig& cfg, std::size_t n_params, double eps, std::uint64_t seed,
                                   BnMode mode = BnMode::eval);

}  // namespace rvsam

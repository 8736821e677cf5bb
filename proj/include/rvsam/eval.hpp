// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "rvsam/tensor.hpp"

namespace rvsam {

// Masks are rank-2 (h, w) float maps; a pixel is set when its value > 0.5.

struct GridPoint {
    double x = 0;
    double y = 0;
};

// n x n foreground points at ((i + 0.5) / n, (j + 0.5) / n), row-major.
std::vector<GridPoint> generate_point_grid(std::size_t n);

// |a ∩ b| / |a ∪ b|, 0 when both are empty.
double mask_iou(const Tensor<float>& a, const Tensor<float>& b);

struct ScoredMask {
    Tensor<float> mask;
    Tensor<float> probability;
    double score = 0;
};

using MaskSet = std::vector<ScoredMask>;

// Greedy suppression in descending score order; ties keep input order.
MaskSet mask_nms(const MaskSet& masks, double iou_threshold);

// Gradient magnitude of the 3x3 Sobel operator, replicate-padded.
Tensor<float> sobel_edges(const Tensor<float>& prob);

// Largest magnitude a [0, 1] map can produce (gx = 4, gy = 2, so 2 sqrt(5));
// used to scale strengths into [0, 1].
inline constexpr float kSobelMaxMagnitude = 4.472135955f;

// Thins ridges along the gradient direction of the magnitude map, quantised
// to 0/45/90/135 degrees. Survivors keep their strength.
Tensor<float> edge_nms(const Tensor<float>& mag);

struct EdgeMetrics {
    double ods = 0;
    double ois = 0;
    double ap = 0;
};

// Thresholds k / (n + 1) for k = 1..n, prediction pixels with strength >= t.
std::vector<double> edge_thresholds(std::size_t n = 30);

struct EdgeMatch {
    std::size_t predicted = 0;
    std::size_t matched = 0;
    std::size_t ground_truth = 0;
};

// Greedy raster-order matching of predicted pixels to the nearest unmatched
// ground-truth pixel within `tolerance` (Euclidean).
EdgeMatch match_edges(const Tensor<float>& pred_binary, const Tensor<float>& gt, double tolerance);

EdgeMetrics edge_metrics(const std::vector<Tensor<float>>& strengths, const std::vector<Tensor<float>>& gts,
                         double tolerance_px = 2.0, std::size_t num_thresholds = 30);

struct ScoredInstance {
    Tensor<float> mask;
    double score = 0;
};

struct ImageInstances {
    std::vector<ScoredInstance> predictions;
    std::vector<Tensor<float>> ground_truth;
};

struct ApScores {
    double ap = 0;
    // Unset when no ground-truth instance falls in the bucket.
    std::optional<double> ap_small;
    std::optional<double> ap_medium;
    std::optional<double> ap_large;
};

// Area range [lo, hi) in pixels.
struct AreaRange {
    double lo = 0;
    double hi = 1e18;
};

inline constexpr AreaRange kAreaAll{0, 1e18};
inline constexpr AreaRange kAreaSmall{0, 32.0 * 32.0};
inline constexpr AreaRange kAreaMedium{32.0 * 32.0, 96.0 * 96.0};
inline constexpr AreaRange kAreaLarge{96.0 * 96.0, 1e18};

// IoU thresholds 0.50:0.05:0.95.
std::vector<double> coco_iou_thresholds();

// AP at one IoU threshold with 101-point interpolation; nullopt when the
// range holds no ground truth.
std::optional<double> average_precision(const std::vector<ImageInstances>& images, double iou_threshold,
                                        AreaRange range = kAreaAll);

ApScores instance_ap(const std::vector<ImageInstances>& images);

struct SaliencyResult {
    std::size_t best = 0;
    double iou = 0;
    double mae = 0;
};

// Picks the candidate with the highest IoU against gt (first on ties).
SaliencyResult saliency_mae(const std::vector<Tensor<float>>& candidates, const Tensor<float>& gt);

// Best F1 of (score >= t) against gt over the unique scores, at most 256
// quantile thresholds.
double max_f1_pixel(const Tensor<float>& scores, const Tensor<float>& gt);
// Pixels of all images pooled before the sweep.
double max_f1_pixel(const std::vector<Tensor<float>>& scores, const std::vector<Tensor<float>>& gts);

}  // namespace rvsam

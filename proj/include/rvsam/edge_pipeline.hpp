// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rvsam/eval.hpp"
#include "rvsam/predictor.hpp"

namespace rvsam {

struct EdgePipelineOptions {
    std::size_t grid = 16;
    double nms_iou = 0.7;
};

struct EdgePipelineResult {
    Tensor<float> strength;  // (h, w) in [0, 1], thinned
    std::size_t decoder_calls = 0;
    std::size_t masks_kept = 0;
};

// One foreground point per grid cell, one decoder call per point, then mask
// NMS, Sobel on the surviving probability maps (max-combined) and edge NMS.
EdgePipelineResult run_edge_pipeline(PointPromptModel& model, const Image8& image,
                                     const EdgePipelineOptions& opts = {});

}  // namespace rvsam

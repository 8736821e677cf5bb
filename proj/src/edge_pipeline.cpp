// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/edge_pipeline.hpp"

#include <algorithm>

#include "rvsam/decoder.hpp"

namespace rvsam {

EdgePipelineResult run_edge_pipeline(PointPromptModel& model, const Image8& image, const EdgePipelineOptions& opts) {
    if (opts.grid == 0) throw ConfigError("edge pipeline: grid must be >= 1");
    model.set_image(image);
    EdgePipelineResult out;
    MaskSet masks;
    for (const GridPoint& g : generate_point_grid(opts.grid)) {
        Prompt prompt;
        prompt.points.push_back({g.x * static_cast<double>(image.width), g.y * static_cast<double>(image.height), true});
        PromptResult r = model.predict(prompt);
        ++out.decoder_calls;
        if (r.probability.shape() != Shape{image.height, image.width}) {
            throw ShapeError("edge pipeline: model returned " + shape_string(r.probability.shape()) +
                             " for a " + std::to_string(image.height) + "x" + std::to_string(image.width) + " image");
        }
        ScoredMask m;
        m.mask = binarize(r.probability);
        m.probability = std::move(r.probability);
        m.score = r.iou_score;
        masks.push_back(std::move(m));
    }
    const MaskSet kept = mask_nms(masks, opts.nms_iou);
    out.masks_kept = kept.size();

    Tensor<float> combined({image.height, image.width});
    for (const ScoredMask& m : kept) {
        const Tensor<float> mag = sobel_edges(m.probability);
        for (std::size_t i = 0; i < combined.size(); ++i) combined[i] = std::max(combined[i], mag[i]);
    }
    for (float& v : combined.data()) v = std::min(v / kSobelMaxMagnitude, 1.0f);
    out.strength = edge_nms(combined);
    return out;
}

}  // namespace rvsam

// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rvsam/model.hpp"

namespace rvsam {

struct PromptResult {
    Tensor<float> probability;  // (orig_h, orig_w)
    float iou_score = 0;
    std::size_t selected = 0;
};

/// Anything that turns a prompt on the current image into a probability map.
class PointPromptModel {
public:
    virtual ~PointPromptModel() = default;
    virtual void set_image(const Image8& image) = 0;
    virtual PromptResult predict(const Prompt& prompt) = 0;
};

/// Encodes an image once and decodes any number of prompts against it.
class SamPredictor : public PointPromptModel {
public:
    // `model` must outlive the predictor and carry decoder weights.
    explicit SamPredictor(const Model& model);

    void set_image(const Image8& image) override;
    PromptResult predict(const Prompt& prompt) override;
    MaskPrediction predict_raw(const Prompt& prompt) const;

    const Tensor<float>& embedding() const { return embedding_; }
    const PreprocessRecord& record() const { return record_; }

private:
    const Model& model_;
    Tensor<float> dense_pe_;
    Tensor<float> embedding_;
    PreprocessRecord record_;
};

}  // namespace rvsam

// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/predictor.hpp"

namespace rvsam {

SamPredictor::SamPredictor(const Model& model) : model_(model) {
    if (!model.decoder) throw DataError("predictor: weights carry no decoder tensors");
    dense_pe_ = dense_positional_encoding(model.decoder->get("prompt.pe_gaussian"),
                                          model.config.encoder.embedding_size());
}

void SamPredictor::set_image(const Image8& image) {
    Preprocessed pre = preprocess_image(image, model_.config.encoder);
    embedding_ = encoder_forward(model_.config.encoder, model_.encoder, pre.tensor);
    record_ = pre.record;
}

MaskPrediction SamPredictor::predict_raw(const Prompt& prompt) const {
    if (embedding_.empty()) throw Error("predictor: set_image must be called before predict");
    const Tensor<float> tokens = encode_prompts(prompt, record_, *model_.decoder);
    return decoder_forward(model_.config.decoder, embedding_, dense_pe_, tokens, *model_.decoder);
}

PromptResult SamPredictor::predict(const Prompt& prompt) {
    const MaskPrediction mp = predict_raw(prompt);
    PromptResult r;
    r.probability = postprocess_mask(mp, record_);
    r.iou_score = mp.iou_scores[mp.selected];
    r.selected = mp.selected;
    return r;
}

}  // namespace rvsam

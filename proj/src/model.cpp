// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/model.hpp"

namespace rvsam {

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.config = cfg;
    m.encoder = build_encoder<float>(cfg.encoder, seed);
    // Offset so encoder and decoder never share a random stream.
    m.decoder = build_decoder(cfg.decoder, cfg.encoder.embed_channels, seed ^ 0x9e3779b97f4a7c15ull);
    return m;
}

WeightFile to_weight_file(const EncoderWeights<float>& encoder, const DecoderWeights* decoder) {
    WeightFile file;
    file.flags = encoder.form == WeightForm::deploy ? kFlagDeploy : 0;
    for (const auto& [name, t] : encoder.tensors) file.tensors.emplace(kEncoderPrefix + name, t);
    if (decoder) {
        for (const auto& [name, t] : decoder->tensors) file.tensors.emplace(kDecoderPrefix + name, t);
    }
    return file;
}

Model model_from_weight_file(const WeightFile& file, const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.config = cfg;
    m.encoder.form = file.deploy() ? WeightForm::deploy : WeightForm::train;
    DecoderWeights decoder;
    for (const auto& [name, any] : file.tensors) {
        const auto* t = std::get_if<Tensor<float>>(&any);
        if (!t) throw DataError("weights: tensor '" + name + "' must be f32");
        if (name.rfind(kEncoderPrefix, 0) == 0) {
            m.encoder.tensors.emplace(name.substr(kEncoderPrefix.size()), *t);
        } else if (name.rfind(kDecoderPrefix, 0) == 0) {
            decoder.tensors.emplace(name.substr(kDecoderPrefix.size()), *t);
        } else {
            throw DataError("weights: tensor '" + name + "' has neither an encoder. nor a decoder. prefix");
        }
    }
    validate_encoder_weights(cfg.encoder, m.encoder);
    if (!decoder.tensors.empty()) {
        validate_decoder_weights(cfg.decoder, cfg.encoder.embed_channels, decoder);
        m.decoder = std::move(decoder);
    }
    return m;
}

Model load_model(const std::filesystem::path& weights, const ModelConfig& cfg) {
    return model_from_weight_file(read_weights(weights), cfg);
}

void save_model(const std::filesystem::path& path, const Model& model) {
    write_weights(path, to_weight_file(model.encoder, model.decoder ? &*model.decoder : nullptr));
}

}  // namespace rvsam

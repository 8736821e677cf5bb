// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "rvsam/tensor.hpp"

namespace rvsam {

// train: multi-branch blocks with BatchNorm. deploy: fused single convs.
enum class WeightForm { train, deploy };

template <typename T>
using TensorMap = std::map<std::string, Tensor<T>>;

template <typename T>
const Tensor<T>& lookup(const TensorMap<T>& map, const std::string& name) {
    const auto it = map.find(name);
    if (it == map.end()) throw ShapeError("missing tensor '" + name + "'");
    return it->second;
}

template <typename T>
Tensor<T>& lookup(TensorMap<T>& map, const std::string& name) {
    const auto it = map.find(name);
    if (it == map.end()) throw ShapeError("missing tensor '" + name + "'");
    return it->second;
}

template <typename T>
std::size_t element_count(const TensorMap<T>& map) {
    std::size_t n = 0;
    for (const auto& [name, t] : map) n += t.size();
    return n;
}

/// Named encoder parameters. Naming follows the module tree:
/// `stem.{0,1}`, `stages.{i}.blocks.{j}.{mixer,se,ffn}`, `downsample.{i}.{dw,pw}`
/// and `neck.{conv1,norm1,conv2,norm2}`.
template <typename T>
struct EncoderWeights {
    WeightForm form = WeightForm::train;
    TensorMap<T> tensors;

    const Tensor<T>& get(const std::string& name) const { return lookup(tensors, name); }
    Tensor<T>& get(const std::string& name) { return lookup(tensors, name); }
    bool contains(const std::string& name) const { return tensors.count(name) != 0; }
    std::size_t parameter_count() const { return element_count(tensors); }

    template <typename U>
    EncoderWeights<U> cast() const {
        EncoderWeights<U> out;
        out.form = form;
        for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<U>());
        return out;
    }
};

}  // namespace rvsam

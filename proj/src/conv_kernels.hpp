// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rvsam/nn.hpp"

namespace rvsam::kernels {

// Row-wise direct convolution: every (co, ci, kh, kw) tap is applied as a
// strided axpy over one output row. `out` must be pre-shaped.
template <typename T>
void conv2d_rows(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, ConvGeometry g, Tensor<T>& out);

// 1x1, stride 1, pad 0, groups 1: blocked (c_out x c_in) * (c_in x hw) GEMM.
template <typename T>
void conv2d_pointwise(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, Tensor<T>& out);

template <typename T>
void conv2d_backward_rows(const Tensor<T>& x, const Tensor<T>& w, ConvGeometry g, const Tensor<T>& grad_out,
                          ConvGrads<T>& grads);

}  // namespace rvsam::kernels

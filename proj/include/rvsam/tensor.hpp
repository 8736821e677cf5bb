// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rvsam/error.hpp"

namespace rvsam {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array. Rank-4 tensors are NCHW; rank-2 tensors are
/// (rows, cols). Other ranks appear for bias vectors and mask stacks.
///
/// `float` is the working precision; `double` exists for gradient checks.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> values);

    static Tensor nchw(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T{0}) {
        return Tensor(Shape{n, c, h, w}, fill);
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // NCHW accessors; only meaningful on rank-4 tensors.
    std::size_t n() const { return shape_.at(0); }
    std::size_t c() const { return shape_.at(1); }
    std::size_t h() const { return shape_.at(2); }
    std::size_t w() const { return shape_.at(3); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    // Pointer to the (n, c) spatial plane of a rank-4 tensor.
    T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3]; }
    const T* plane(std::size_t n, std::size_t c) const {
        return data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3];
    }

    void fill(T v);
    Tensor reshaped(Shape shape) const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

// Throws NumericError naming `op` when any element is NaN or infinite.
template <typename T>
void require_finite(const Tensor<T>& t, const char* op);

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op);

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace rvsam

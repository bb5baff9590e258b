// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace lma {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

/// Dense row-major tensor of doubles with an optional gradient buffer of the
/// same shape. All layer math in this project runs on these.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    /// Rank-0 tensor holding a single value.
    static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_.at(i); }
    double operator[](std::size_t i) const { return data_.at(i); }

    double& at(std::initializer_list<int> idx);
    double at(std::initializer_list<int> idx) const;

    bool has_grad() const { return grad_.has_value(); }
    /// Allocates (zero-filled) the gradient buffer if absent.
    std::vector<double>& ensure_grad();
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();
    void drop_grad() { grad_.reset(); }

    /// Same data, new shape; element count must match.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;

private:
    std::int64_t flat_index(std::initializer_list<int> idx) const;

    Shape shape_;
    std::vector<double> data_;
    std::optional<std::vector<double>> grad_;
};

} // namespace lma

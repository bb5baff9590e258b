// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
#include "lma/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lma {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) {
        if (e <= 0) throw std::invalid_argument("non-positive extent in shape " + shape_str(s));
        n *= e;
    }
    return n;
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

std::int64_t Tensor::flat_index(std::initializer_list<int> idx) const {
    if (idx.size() != shape_.size())
        throw std::out_of_range("index rank " + std::to_string(idx.size()) +
                                " does not match tensor rank " + std::to_string(shape_.size()));
    std::int64_t flat = 0;
    std::size_t d = 0;
    for (int i : idx) {
        if (i < 0 || i >= shape_[d])
            throw std::out_of_range("index " + std::to_string(i) + " out of range for dim " +
                                    std::to_string(d) + " of " + shape_str(shape_));
        flat = flat * shape_[d] + i;
        ++d;
    }
    return flat;
}

double& Tensor::at(std::initializer_list<int> idx) { return data_[static_cast<std::size_t>(flat_index(idx))]; }
double Tensor::at(std::initializer_list<int> idx) const { return data_[static_cast<std::size_t>(flat_index(idx))]; }

std::vector<double>& Tensor::ensure_grad() {
    if (!grad_) grad_.emplace(data_.size(), 0.0);
    return *grad_;
}

std::vector<double>& Tensor::grad() {
    if (!grad_) throw std::logic_error("tensor has no gradient buffer");
    return *grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_) throw std::logic_error("tensor has no gradient buffer");
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != static_cast<std::int64_t>(numel()))
        throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                                    " changes element count");
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace lma

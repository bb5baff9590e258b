// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/adaptor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace lma {

namespace {
constexpr double kInitStd = 0.02;
}

ParamCountReport count_params(int c1, int c2, int k, int r) {
    if (c1 <= 0 || c2 <= 0 || k <= 0 || r <= 0)
        throw std::invalid_argument("count_params: geometry values must be positive");
    ParamCountReport rep;
    const long unit = static_cast<long>(k) * (c1 + c2) + 1;
    rep.adaptor_params = static_cast<long>(r) * unit;
    rep.shared_params = static_cast<long>(c1) * c2 * k * k;
    rep.admissible_rank_bound = static_cast<int>(rep.shared_params / unit);
    return rep;
}

ParamCountReport count_params_linear(int d_in, int d_out, int r) {
    if (d_in <= 0 || d_out <= 0 || r <= 0)
        throw std::invalid_argument("count_params_linear: geometry values must be positive");
    ParamCountReport rep;
    const long unit = static_cast<long>(d_in) + d_out + 1;
    rep.adaptor_params = static_cast<long>(r) * unit;
    rep.shared_params = static_cast<long>(d_in) * d_out;
    rep.admissible_rank_bound = static_cast<int>(rep.shared_params / unit);
    return rep;
}

LowRankAdaptor::LowRankAdaptor(Shape target_shape, int r_max, Rng& rng)
    : target_shape_(std::move(target_shape)), r_max_(r_max) {
    if (target_shape_.size() == 4) {
        c2_ = target_shape_[0];
        c1_ = target_shape_[1];
        k_ = target_shape_[2];
        if (target_shape_[3] != k_)
            throw std::invalid_argument("adaptor: conv target must have square kernel");
        rows_out_ = c2_ * k_;
        rows_in_ = c1_ * k_;
    } else if (target_shape_.size() == 2) {
        rows_out_ = target_shape_[0];
        rows_in_ = target_shape_[1];
    } else {
        throw std::invalid_argument("adaptor: target must be a conv kernel or linear weight, got " +
                                    shape_str(target_shape_));
    }
    if (r_max_ < 1 || r_max_ >= std::min(rows_out_, rows_in_))
        throw std::invalid_argument(
            "adaptor: rank " + std::to_string(r_max_) + " violates 1 <= r < min(" +
            std::to_string(rows_out_) + ", " + std::to_string(rows_in_) + ")");

    Tensor p({rows_out_, r_max_});
    for (std::size_t i = 0; i < p.numel(); ++i)
        p[i] = rng.normal(0.0, kInitStd);
    Tensor q({r_max_, rows_in_});
    for (std::size_t i = 0; i < q.numel(); ++i)
        q[i] = rng.normal(0.0, kInitStd);

    p_ = autograd::make_leaf(std::move(p), true);
    lambda_ = autograd::make_leaf(Tensor::zeros({r_max_}), true);
    q_ = autograd::make_leaf(std::move(q), true);
    mask_.assign(static_cast<std::size_t>(r_max_), 1);
}

int LowRankAdaptor::active_count() const {
    int n = 0;
    for (auto m : mask_)
        n += m != 0;
    return n;
}

void LowRankAdaptor::set_mask(const std::vector<std::uint8_t>& mask) {
    if (mask.size() != mask_.size())
        throw std::invalid_argument("adaptor: mask length " + std::to_string(mask.size()) +
                                    " does not match rank " + std::to_string(r_max_));
    mask_ = mask;
    for (int i = 0; i < r_max_; ++i)
        if (!mask_[static_cast<std::size_t>(i)])
            lambda_->value[static_cast<std::size_t>(i)] = 0.0;
}

autograd::VarPtr LowRankAdaptor::materialize(autograd::Tape& tape) const {
    auto scaled = tape.col_scale(p_, lambda_);
    auto m = tape.matmul(scaled, q_);
    if (k_ > 0)
        return tape.to_conv_kernel(m, c2_, c1_, k_);
    return m;
}

autograd::VarPtr LowRankAdaptor::merged(autograd::Tape& tape,
                                        const autograd::VarPtr& shared) const {
    if (shared->value.shape() != target_shape_)
        throw std::invalid_argument("adaptor: shared weight " + shape_str(shared->value.shape()) +
                                    " does not match target " + shape_str(target_shape_));
    return tape.add(shared, materialize(tape));
}

Tensor LowRankAdaptor::materialize_value() const {
    autograd::Tape tape;
    return materialize(tape)->value;
}

std::vector<int> LowRankAdaptor::compact() {
    const int active = active_count();
    // Tensors cannot have zero extents, so a fully pruned adaptor retains one
    // masked placeholder triplet: a permanent exact-zero contribution.
    const int keep = std::max(active, 1);
    std::vector<int> kept;
    kept.reserve(static_cast<std::size_t>(keep));
    Tensor p({rows_out_, keep});
    Tensor lam({keep});
    Tensor q({keep, rows_in_});
    int j = 0;
    for (int i = 0; i < r_max_ && j < keep; ++i) {
        if (active > 0 && !mask_[static_cast<std::size_t>(i)])
            continue;
        for (int a = 0; a < rows_out_; ++a)
            p[static_cast<std::size_t>(a) * keep + j] =
                p_->value[static_cast<std::size_t>(a) * r_max_ + i];
        lam[static_cast<std::size_t>(j)] = lambda_->value[static_cast<std::size_t>(i)];
        for (int b = 0; b < rows_in_; ++b)
            q[static_cast<std::size_t>(j) * rows_in_ + b] =
                q_->value[static_cast<std::size_t>(i) * rows_in_ + b];
        kept.push_back(i);
        ++j;
    }
    r_max_ = keep;
    p_ = autograd::make_leaf(std::move(p), true);
    lambda_ = autograd::make_leaf(std::move(lam), true);
    q_ = autograd::make_leaf(std::move(q), true);
    mask_.assign(static_cast<std::size_t>(keep), active > 0 ? 1 : 0);
    return kept;
}

long LowRankAdaptor::storage_scalars() const {
    return static_cast<long>(p_->value.numel()) + static_cast<long>(lambda_->value.numel()) +
           static_cast<long>(q_->value.numel());
}

void LowRankAdaptor::check_invariants() const {
    for (int i = 0; i < r_max_; ++i)
        if (!mask_[static_cast<std::size_t>(i)] &&
            lambda_->value[static_cast<std::size_t>(i)] != 0.0)
            throw std::logic_error("adaptor: masked triplet " + std::to_string(i) +
                                   " has nonzero lambda");
}

} // namespace lma

// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// SVD-triplet adaptor: a low-rank additive perturbation M = P diag(L) Q of
// one shared weight tensor, held as r_max triplets (P column, singular value,
// Q row) that can be masked on and off by the rank allocator.
#pragma once

#include <cstdint>
#include <vector>

#include "lma/autograd.hpp"
#include "lma/rng.hpp"
#include "lma/tensor.hpp"

namespace lma {

struct ParamCountReport {
    long adaptor_params = 0;       // r * (rows_in + rows_out + 1)
    long shared_params = 0;        // product of the target shape
    int admissible_rank_bound = 0; // floor(shared / (rows_in + rows_out + 1))
    double increment_percent = 0;  // filled by model-level reports
};

/// Closed-form counts for one conv layer geometry: adaptor r(K(C1+C2)+1),
/// shared C1*C2*K^2, bound floor(shared / (K(C1+C2)+1)).
ParamCountReport count_params(int c1, int c2, int k, int r);
/// Same accounting for a linear layer [d_out, d_in].
ParamCountReport count_params_linear(int d_in, int d_out, int r);

class LowRankAdaptor {
public:
    /// target_shape is [c2, c1, k, k] (conv kernel) or [d_out, d_in] (linear
    /// weight). P and Q are drawn i.i.d. N(0, 0.02); Lambda starts at zero so
    /// a fresh adaptor is an exact zero perturbation. All triplets start
    /// active. Rejects r_max outside 1 <= r_max < min(rows_out, rows_in).
    LowRankAdaptor(Shape target_shape, int r_max, Rng& rng);

    const Shape& target_shape() const { return target_shape_; }
    int r_max() const { return r_max_; }
    int rows_out() const { return rows_out_; }
    int rows_in() const { return rows_in_; }

    autograd::VarPtr p() const { return p_; }
    autograd::VarPtr lambda() const { return lambda_; }
    autograd::VarPtr q() const { return q_; }

    const std::vector<std::uint8_t>& mask() const { return mask_; }
    bool active(int i) const { return mask_[static_cast<std::size_t>(i)] != 0; }
    int active_count() const;
    /// Sets the mask and zeroes Lambda entries that became inactive.
    void set_mask(const std::vector<std::uint8_t>& mask);

    /// Records M = P diag(Lambda) Q reshaped to target_shape on the tape.
    /// Masked triplets have Lambda = 0 and so contribute exactly zero while
    /// still receiving Lambda gradients (the revival path of Eq. 25-26).
    autograd::VarPtr materialize(autograd::Tape& tape) const;
    /// shared + materialize(), the per-modality effective weight.
    autograd::VarPtr merged(autograd::Tape& tape, const autograd::VarPtr& shared) const;

    /// Materialize without a tape (analysis paths).
    Tensor materialize_value() const;

    /// Physically removes inactive triplets; r_max becomes active_count().
    /// Returns the retained storage indices (old positions, ascending) so
    /// callers can remap per-entry auxiliary state. A fully pruned adaptor
    /// keeps one masked placeholder triplet (tensors cannot be empty), which
    /// contributes exactly zero forever.
    std::vector<int> compact();

    /// Stored scalar count (P + Lambda + Q), the executable side of Eq. 14.
    long storage_scalars() const;

    /// Throws if the Lambda-zero-when-masked invariant is broken.
    void check_invariants() const;

private:
    Shape target_shape_;
    int rows_out_ = 0;
    int rows_in_ = 0;
    int r_max_ = 0;
    // conv reshape geometry; k_ == 0 marks a linear target
    int c1_ = 0, c2_ = 0, k_ = 0;
    autograd::VarPtr p_, lambda_, q_;
    std::vector<std::uint8_t> mask_;
};

} // namespace lma

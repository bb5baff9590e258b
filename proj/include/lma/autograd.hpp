// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense tensors. Operations are
// recorded on a tape as closures; backward() replays them in reverse and
// accumulates gradients additively into each Var's grad buffer.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lma/rng.hpp"
#include "lma/tensor.hpp"

namespace lma::autograd {

struct Var {
    Tensor value;
    /// Leaf parameter flag: the optimizer may update this tensor.
    bool requires_grad = false;
    /// True when a gradient has to flow through this node.
    bool needs_grad = false;

    std::vector<double>& grad() { return value.grad(); }
    const std::vector<double>& grad() const { return value.grad(); }
};

using VarPtr = std::shared_ptr<Var>;

/// Wraps a tensor as a graph input; identical to Tape::leaf but usable
/// where no tape is in scope (leaves are not recorded on tapes).
VarPtr make_leaf(Tensor value, bool requires_grad);

/// Records the computation graph of one forward pass. A tape instance is
/// single-use per pass: build the graph, call backward, then clear before
/// the next pass (leaves survive clearing, interior nodes do not).
class Tape {
public:
    /// Wraps a tensor as a graph input. Leaves with requires_grad keep their
    /// gradient buffer allocated across passes.
    VarPtr leaf(Tensor value, bool requires_grad);

    /// out = a + b, identical shapes.
    VarPtr add(const VarPtr& a, const VarPtr& b);
    /// out = a * b elementwise, identical shapes.
    VarPtr mul(const VarPtr& a, const VarPtr& b);
    /// out[i, j] = m[i, j] * s[j]; m is [a, r], s is [r].
    VarPtr col_scale(const VarPtr& m, const VarPtr& s);
    /// out[m, n] = a[m, k] * b[k, n]
    VarPtr matmul(const VarPtr& a, const VarPtr& b);
    /// Same data in a new shape.
    VarPtr reshape(const VarPtr& a, Shape shape);
    /// m[c2*k + kh, c1*k + kw] -> out[c2, c1, kh, kw]
    VarPtr to_conv_kernel(const VarPtr& m, int c2, int c1, int k);
    /// Convolution with symmetric zero padding; pad < 0 means (k-1)/2.
    /// x[n, c1, h, w], kernel[c2, c1, k, k], bias[c2] or null.
    /// Output is [n, c2, (h + 2*pad - k)/stride + 1, (w + 2*pad - k)/stride + 1].
    VarPtr conv2d(const VarPtr& x, const VarPtr& kernel, const VarPtr& bias, int stride = 1,
                  int pad = -1);
    /// y = x * w^T + bias; x[n, c_in], w[c_out, c_in], bias[c_out] or null.
    VarPtr linear(const VarPtr& x, const VarPtr& w, const VarPtr& bias);
    VarPtr relu(const VarPtr& x);
    /// [n, c, h, w] -> [n, c], mean over the spatial plane.
    VarPtr avg_pool_global(const VarPtr& x);
    /// Mean negative log-likelihood of labels under softmax(logits).
    /// logits[n, classes]; returns a rank-0 var.
    VarPtr cross_entropy(const VarPtr& logits, const std::vector<int>& labels);
    /// Rank-0 sum of all elements.
    VarPtr sum(const VarPtr& x);

    /// Seeds d(root)/d(root) = 1 and replays the tape in reverse. The root
    /// must be rank-0. Gradients accumulate; caller zeroes leaves between
    /// optimization steps.
    void backward(const VarPtr& root);

    /// Drops recorded closures and interior nodes.
    void clear();

    std::size_t size() const { return steps_.size(); }

private:
    VarPtr make_node(Tensor value, bool needs_grad);

    struct Step {
        VarPtr out;
        std::function<void()> back;
    };
    std::vector<Step> steps_;
};

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_rel_err = 0.0;
    /// Analytic and numeric gradient at the worst entry.
    double ad_at_worst = 0.0;
    double fd_at_worst = 0.0;
};

/// Central-difference validation of analytic gradients.
///
/// `loss` must rebuild the forward pass from the shared leaves and return
/// the loss value; when `with_grad` it must also run backward so that leaf
/// gradients are populated (gradients are zeroed here before that call).
/// At most `max_entries` coordinates per tensor are probed (0 = all),
/// chosen deterministically from `rng`.
std::vector<GradCheckEntry> finite_diff_check(
    const std::function<double(bool with_grad)>& loss,
    const std::vector<std::pair<std::string, VarPtr>>& params, int max_entries, double step,
    Rng& rng);

} // namespace lma::autograd

// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Adaptive rank allocation over low-rank adaptors: per-entry importance,
// EMA smoothing with an uncertainty term, triplet scoring, the cubic budget
// schedule, and top-b pruning with revival of masked triplets. Also hosts
// the plain/adaptive-moment optimizer used for shared weights and the head.
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lma/adaptor.hpp"
#include "lma/autograd.hpp"

namespace lma {

using AdaptorRegistry = std::vector<std::pair<std::string, LowRankAdaptor*>>;

struct BudgetSchedule {
    /// Initial total active rank (n_adaptors x r_init).
    long b0 = 0;
    /// Target total rank after decay.
    long bT = 0;
    /// Last warm-up step t_w: budget stays b0 through it <= t_w.
    long warmup_end = 0;
    /// Decay-end step t_c: budget is bT from it >= t_c on.
    long decay_end = 0;
    long total_steps = 0;

    void validate() const;
    /// bT + round((b0 - bT) * (1 - (it - t_w)/(t_c - t_w))^3), clamped to the
    /// plateaus outside (t_w, t_c).
    long budget_at(long it) const;
};

/// EMA mean and uncertainty per trainable entry of one adaptor, laid out
/// exactly like the P [a, r], Lambda [r], Q [r, b] storage.
struct AdaptorImportance {
    std::vector<double> p_mean, p_unc;
    std::vector<double> lam_mean, lam_unc;
    std::vector<double> q_mean, q_unc;
};

struct ImportanceState {
    std::vector<AdaptorImportance> per_adaptor;
    long it = 0;

    /// Zero-initialized state sized to the registry.
    static ImportanceState for_adaptors(const AdaptorRegistry& adaptors);
};

/// I = |grad| for P/Q entries, |value * grad| for Lambda entries.
double entry_importance(double value, double grad, bool lambda_entry);

/// One EMA update from the gradients currently stored on the adaptors.
/// Throws if any adaptor tensor is missing its gradient or a beta is
/// outside (0, 1).
void update_importance(ImportanceState& state, const AdaptorRegistry& adaptors, double beta1,
                       double beta2);

struct TripletScore {
    int adaptor = 0;
    int index = 0;
    double score = 0.0;
};

/// s = mean * uncertainty per entry; per triplet i of adaptor k the score is
/// s(Lambda_i) + mean_col_i s(P) + mean_row_i s(Q). Emitted in (k, i) order.
std::vector<TripletScore> triplet_scores(const ImportanceState& state,
                                         const AdaptorRegistry& adaptors);

/// Gradient-descent update: P and Q in place, Lambda returned as provisional
/// values per adaptor covering every triplet including masked ones (masked
/// entries update from 0, making them revival candidates at prune time).
std::vector<std::vector<double>> sgd_step(const AdaptorRegistry& adaptors, double lr);

/// Positions (into scores) of the b largest scores; equal scores break
/// lexicographically on (adaptor, index), lower wins. Result is sorted.
std::vector<std::size_t> top_b(const std::vector<TripletScore>& scores, long b);

/// Keeps the top-b triplets with Lambda = provisional value and active mask;
/// zeroes and deactivates the rest. Exactly b active afterward.
void prune_to_budget(const std::vector<TripletScore>& scores,
                     const std::vector<std::vector<double>>& lam_tilde, long b,
                     const AdaptorRegistry& adaptors);

struct PruneEvent {
    long step = 0;
    long budget = 0;
    std::vector<int> active_ranks;
    std::vector<TripletScore> kept;
    std::vector<TripletScore> dropped;
};

struct OptimizerConfig {
    bool adam = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

/// Updates a fixed list of parameter tensors from their gradients. Plain
/// gradient descent by default; adaptive moments behind the config flag.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::vector<autograd::VarPtr> params);

    void step(double lr);

    long& moment_steps() { return t_; }
    std::vector<std::vector<double>>& m() { return m_; }
    std::vector<std::vector<double>>& v() { return v_; }

private:
    OptimizerConfig cfg_;
    std::vector<autograd::VarPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

struct AllocatorConfig {
    double beta1 = 0.85;
    double beta2 = 0.85;
    /// Steps between prune evaluations inside (t_w, t_c]. <= 0 disables
    /// pruning entirely (fixed-rank training; no freeze, no compaction).
    long prune_interval = 10;
    OptimizerConfig optimizer;

    void validate() const;
};

/// Six moment buffers per adaptor when the adaptive-moment optimizer is on.
struct AdaptorMoments {
    std::vector<double> m_p, v_p, m_lam, v_lam, m_q, v_q;
};

/// Drives one adaptor-parameter update per optimizer step and owns the
/// importance state, prune cadence and freeze-time compaction.
class RankAllocator {
public:
    RankAllocator(BudgetSchedule schedule, AllocatorConfig config);

    /// Post-backward update at 1-based optimizer step `it`: EMA importance,
    /// parameter step, prune when due (every prune_interval steps inside
    /// (t_w, t_c], plus a forced prune at t_c), freeze + compact at t_c.
    std::optional<PruneEvent> step(const AdaptorRegistry& adaptors, double lr, long it);

    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }
    const BudgetSchedule& schedule() const { return sched_; }
    const AllocatorConfig& config() const { return cfg_; }
    ImportanceState& state() { return state_; }
    std::vector<AdaptorMoments>& moments() { return moments_; }
    long& moment_steps() { return adam_t_; }

    static long active_total(const AdaptorRegistry& adaptors);

private:
    std::vector<std::vector<double>> opt_step(const AdaptorRegistry& adaptors, double lr);
    void ensure_sized(const AdaptorRegistry& adaptors);

    BudgetSchedule sched_;
    AllocatorConfig cfg_;
    ImportanceState state_;
    std::vector<AdaptorMoments> moments_;
    long adam_t_ = 0;
    bool frozen_ = false;
};

} // namespace lma

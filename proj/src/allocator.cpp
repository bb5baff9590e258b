// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lma {

void BudgetSchedule::validate() const {
    if (bT < 0 || b0 < bT) throw std::invalid_argument("budget schedule: need b0 >= bT >= 0");
    if (warmup_end < 0 || decay_end <= warmup_end)
        throw std::invalid_argument("budget schedule: need 0 <= warmup_end < decay_end");
    if (total_steps > 0 && decay_end > total_steps)
        throw std::invalid_argument("budget schedule: decay_end exceeds total_steps");
}

long BudgetSchedule::budget_at(long it) const {
    if (it <= warmup_end) return b0;
    if (it >= decay_end) return bT;
    const double u =
        static_cast<double>(it - warmup_end) / static_cast<double>(decay_end - warmup_end);
    const double keep = 1.0 - u;
    return bT + std::lround(static_cast<double>(b0 - bT) * keep * keep * keep);
}

ImportanceState ImportanceState::for_adaptors(const AdaptorRegistry& adaptors) {
    ImportanceState state;
    for (const auto& [name, ad] : adaptors) {
        (void)name;
        AdaptorImportance imp;
        imp.p_mean.assign(ad->p()->value.numel(), 0.0);
        imp.p_unc.assign(ad->p()->value.numel(), 0.0);
        imp.lam_mean.assign(ad->lambda()->value.numel(), 0.0);
        imp.lam_unc.assign(ad->lambda()->value.numel(), 0.0);
        imp.q_mean.assign(ad->q()->value.numel(), 0.0);
        imp.q_unc.assign(ad->q()->value.numel(), 0.0);
        state.per_adaptor.push_back(std::move(imp));
    }
    return state;
}

double entry_importance(double value, double grad, bool lambda_entry) {
    return lambda_entry ? std::fabs(value * grad) : std::fabs(grad);
}

namespace {

void ema_update(std::vector<double>& mean, std::vector<double>& unc, const Tensor& t,
                bool lambda_entry, double beta1, double beta2, const std::string& what) {
    if (!t.has_grad()) throw std::invalid_argument("update_importance: missing grad on " + what);
    const auto& g = t.grad();
    if (mean.size() != t.numel() || unc.size() != t.numel())
        throw std::invalid_argument("update_importance: state size mismatch on " + what);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double imp = entry_importance(t[i], g[i], lambda_entry);
        mean[i] = beta1 * mean[i] + (1.0 - beta1) * imp;
        unc[i] = beta2 * unc[i] + (1.0 - beta2) * std::fabs(imp - mean[i]);
    }
}

} // namespace

void update_importance(ImportanceState& state, const AdaptorRegistry& adaptors, double beta1,
                       double beta2) {
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("update_importance: betas must lie in (0, 1)");
    if (state.per_adaptor.size() != adaptors.size())
        throw std::invalid_argument("update_importance: state covers a different adaptor set");
    for (std::size_t k = 0; k < adaptors.size(); ++k) {
        auto& [name, ad] = adaptors[k];
        auto& imp = state.per_adaptor[k];
        ema_update(imp.p_mean, imp.p_unc, ad->p()->value, false, beta1, beta2, name + ".P");
        ema_update(imp.lam_mean, imp.lam_unc, ad->lambda()->value, true, beta1, beta2,
                   name + ".Lambda");
        ema_update(imp.q_mean, imp.q_unc, ad->q()->value, false, beta1, beta2, name + ".Q");
    }
}

std::vector<TripletScore> triplet_scores(const ImportanceState& state,
                                         const AdaptorRegistry& adaptors) {
    if (state.per_adaptor.size() != adaptors.size())
        throw std::invalid_argument("triplet_scores: state covers a different adaptor set");
    std::vector<TripletScore> out;
    for (std::size_t k = 0; k < adaptors.size(); ++k) {
        const auto* ad = adaptors[k].second;
        const auto& imp = state.per_adaptor[k];
        const int rows_p = ad->p()->value.dim(0);
        const int r = ad->r_max();
        const int cols_q = ad->q()->value.dim(1);
        for (int i = 0; i < r; ++i) {
            double s_p = 0.0;
            for (int row = 0; row < rows_p; ++row) {
                const std::size_t idx = static_cast<std::size_t>(row * r + i);
                s_p += imp.p_mean[idx] * imp.p_unc[idx];
            }
            s_p /= rows_p;
            double s_q = 0.0;
            for (int col = 0; col < cols_q; ++col) {
                const std::size_t idx = static_cast<std::size_t>(i * cols_q + col);
                s_q += imp.q_mean[idx] * imp.q_unc[idx];
            }
            s_q /= cols_q;
            const double s_lam = imp.lam_mean[static_cast<std::size_t>(i)] *
                                 imp.lam_unc[static_cast<std::size_t>(i)];
            out.push_back({static_cast<int>(k), i, s_lam + s_p + s_q});
        }
    }
    return out;
}

namespace {

void descend(Tensor& t, double lr, const std::string& what) {
    if (!t.has_grad()) throw std::invalid_argument("sgd_step: missing grad on " + what);
    const auto& g = t.grad();
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] -= lr * g[i];
}

} // namespace

std::vector<std::vector<double>> sgd_step(const AdaptorRegistry& adaptors, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("sgd_step: learning rate must be positive");
    std::vector<std::vector<double>> lam_tilde;
    for (const auto& [name, ad] : adaptors) {
        descend(ad->p()->value, lr, name + ".P");
        descend(ad->q()->value, lr, name + ".Q");
        auto& lam = ad->lambda()->value;
        if (!lam.has_grad()) throw std::invalid_argument("sgd_step: missing grad on " + name + ".Lambda");
        const auto& g = lam.grad();
        std::vector<double> prov(lam.numel());
        for (std::size_t i = 0; i < lam.numel(); ++i) prov[i] = lam[i] - lr * g[i];
        lam_tilde.push_back(std::move(prov));
    }
    return lam_tilde;
}

std::vector<std::size_t> top_b(const std::vector<TripletScore>& scores, long b) {
    const long n = static_cast<long>(scores.size());
    const long keep = std::clamp(b, 0L, n);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (scores[x].score != scores[y].score) return scores[x].score > scores[y].score;
        if (scores[x].adaptor != scores[y].adaptor) return scores[x].adaptor < scores[y].adaptor;
        return scores[x].index < scores[y].index;
    });
    order.resize(static_cast<std::size_t>(keep));
    std::sort(order.begin(), order.end());
    return order;
}

void prune_to_budget(const std::vector<TripletScore>& scores,
                     const std::vector<std::vector<double>>& lam_tilde, long b,
                     const AdaptorRegistry& adaptors) {
    if (lam_tilde.size() != adaptors.size())
        throw std::invalid_argument("prune_to_budget: provisional values cover a different set");
    const auto kept = top_b(scores, b);
    std::vector<std::vector<std::uint8_t>> masks;
    for (const auto& [name, ad] : adaptors) {
        (void)name;
        masks.emplace_back(static_cast<std::size_t>(ad->r_max()), 0);
    }
    for (std::size_t pos : kept) {
        const auto& s = scores[pos];
        masks[static_cast<std::size_t>(s.adaptor)][static_cast<std::size_t>(s.index)] = 1;
    }
    for (std::size_t k = 0; k < adaptors.size(); ++k) {
        auto* ad = adaptors[k].second;
        auto& lam = ad->lambda()->value;
        if (lam_tilde[k].size() != lam.numel())
            throw std::invalid_argument("prune_to_budget: provisional value size mismatch");
        for (std::size_t i = 0; i < lam.numel(); ++i)
            lam[i] = masks[k][i] != 0 ? lam_tilde[k][i] : 0.0;
        ad->set_mask(masks[k]);
    }
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<autograd::VarPtr> params)
    : cfg_(config), params_(std::move(params)) {
    if (cfg_.adam) {
        for (const auto& p : params_) {
            m_.emplace_back(p->value.numel(), 0.0);
            v_.emplace_back(p->value.numel(), 0.0);
        }
    }
}

void Optimizer::step(double lr) {
    if (lr <= 0.0) throw std::invalid_argument("optimizer: learning rate must be positive");
    if (!cfg_.adam) {
        for (auto& p : params_) descend(p->value, lr, "param");
        return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& t = params_[k]->value;
        if (!t.has_grad()) throw std::invalid_argument("optimizer: missing grad");
        const auto& g = t.grad();
        for (std::size_t i = 0; i < t.numel(); ++i) {
            m_[k][i] = cfg_.adam_beta1 * m_[k][i] + (1.0 - cfg_.adam_beta1) * g[i];
            v_[k][i] = cfg_.adam_beta2 * v_[k][i] + (1.0 - cfg_.adam_beta2) * g[i] * g[i];
            t[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + cfg_.adam_eps);
        }
    }
}

void AllocatorConfig::validate() const {
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("allocator config: betas must lie in (0, 1)");
}

RankAllocator::RankAllocator(BudgetSchedule schedule, AllocatorConfig config)
    : sched_(schedule), cfg_(config) {
    sched_.validate();
    cfg_.validate();
}

long RankAllocator::active_total(const AdaptorRegistry& adaptors) {
    long total = 0;
    for (const auto& [name, ad] : adaptors) {
        (void)name;
        total += ad->active_count();
    }
    return total;
}

void RankAllocator::ensure_sized(const AdaptorRegistry& adaptors) {
    if (state_.per_adaptor.empty()) state_ = ImportanceState::for_adaptors(adaptors);
    if (state_.per_adaptor.size() != adaptors.size())
        throw std::logic_error("rank allocator bound to a different adaptor set");
    if (cfg_.optimizer.adam && moments_.empty()) {
        for (const auto& [name, ad] : adaptors) {
            (void)name;
            AdaptorMoments mom;
            mom.m_p.assign(ad->p()->value.numel(), 0.0);
            mom.v_p.assign(ad->p()->value.numel(), 0.0);
            mom.m_lam.assign(ad->lambda()->value.numel(), 0.0);
            mom.v_lam.assign(ad->lambda()->value.numel(), 0.0);
            mom.m_q.assign(ad->q()->value.numel(), 0.0);
            mom.v_q.assign(ad->q()->value.numel(), 0.0);
            moments_.push_back(std::move(mom));
        }
    }
}

std::vector<std::vector<double>> RankAllocator::opt_step(const AdaptorRegistry& adaptors,
                                                         double lr) {
    if (!cfg_.optimizer.adam) return sgd_step(adaptors, lr);
    if (lr <= 0.0) throw std::invalid_argument("optimizer: learning rate must be positive");
    ++adam_t_;
    const double c1 = 1.0 - std::pow(cfg_.optimizer.adam_beta1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(cfg_.optimizer.adam_beta2, static_cast<double>(adam_t_));
    auto adam_into = [&](Tensor& t, std::vector<double>& m, std::vector<double>& v,
                         std::vector<double>* out) {
        if (!t.has_grad()) throw std::invalid_argument("optimizer: missing grad");
        const auto& g = t.grad();
        for (std::size_t i = 0; i < t.numel(); ++i) {
            m[i] = cfg_.optimizer.adam_beta1 * m[i] + (1.0 - cfg_.optimizer.adam_beta1) * g[i];
            v[i] = cfg_.optimizer.adam_beta2 * v[i] +
                   (1.0 - cfg_.optimizer.adam_beta2) * g[i] * g[i];
            const double delta = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.optimizer.adam_eps);
            if (out)
                (*out)[i] = t[i] - delta;
            else
                t[i] -= delta;
        }
    };
    std::vector<std::vector<double>> lam_tilde;
    for (std::size_t k = 0; k < adaptors.size(); ++k) {
        auto* ad = adaptors[k].second;
        auto& mom = moments_[k];
        adam_into(ad->p()->value, mom.m_p, mom.v_p, nullptr);
        adam_into(ad->q()->value, mom.m_q, mom.v_q, nullptr);
        std::vector<double> prov(ad->lambda()->value.numel());
        adam_into(ad->lambda()->value, mom.m_lam, mom.v_lam, &prov);
        lam_tilde.push_back(std::move(prov));
    }
    return lam_tilde;
}

std::optional<PruneEvent> RankAllocator::step(const AdaptorRegistry& adaptors, double lr,
                                              long it) {
    ensure_sized(adaptors);
    const bool pruning = cfg_.prune_interval > 0;
    if (!frozen_ && pruning) update_importance(state_, adaptors, cfg_.beta1, cfg_.beta2);
    state_.it = it;

    auto lam_tilde = opt_step(adaptors, lr);

    std::optional<PruneEvent> event;
    bool prune_now = false;
    if (!frozen_ && pruning && it > sched_.warmup_end)
        prune_now = it >= sched_.decay_end || it % cfg_.prune_interval == 0;

    if (prune_now) {
        const auto scores = triplet_scores(state_, adaptors);
        const long b = sched_.budget_at(it);
        prune_to_budget(scores, lam_tilde, b, adaptors);
        PruneEvent ev;
        ev.step = it;
        ev.budget = b;
        const auto kept_pos = top_b(scores, b);
        std::vector<bool> is_kept(scores.size(), false);
        for (std::size_t pos : kept_pos) is_kept[pos] = true;
        for (std::size_t pos = 0; pos < scores.size(); ++pos)
            (is_kept[pos] ? ev.kept : ev.dropped).push_back(scores[pos]);
        for (const auto& [name, ad] : adaptors) {
            (void)name;
            ev.active_ranks.push_back(ad->active_count());
        }
        event = std::move(ev);
    } else {
        for (std::size_t k = 0; k < adaptors.size(); ++k) {
            auto& lam = adaptors[k].second->lambda()->value;
            for (std::size_t i = 0; i < lam.numel(); ++i)
                lam[i] = adaptors[k].second->active(static_cast<int>(i)) ? lam_tilde[k][i] : 0.0;
        }
    }

    if (!frozen_ && pruning && it >= sched_.decay_end) {
        for (std::size_t k = 0; k < adaptors.size(); ++k) {
            auto* ad = adaptors[k].second;
            const int r_old = ad->r_max();
            const int rows_p = ad->p()->value.dim(0);
            const int cols_q = ad->q()->value.dim(1);
            const auto kept = ad->compact();
            const int r_new = static_cast<int>(kept.size());
            auto pick_p = [&](std::vector<double>& v) {
                std::vector<double> nv(static_cast<std::size_t>(rows_p * r_new));
                for (int row = 0; row < rows_p; ++row)
                    for (int j = 0; j < r_new; ++j)
                        nv[static_cast<std::size_t>(row * r_new + j)] =
                            v[static_cast<std::size_t>(row * r_old + kept[static_cast<std::size_t>(j)])];
                v = std::move(nv);
            };
            auto pick_lam = [&](std::vector<double>& v) {
                std::vector<double> nv(static_cast<std::size_t>(r_new));
                for (int j = 0; j < r_new; ++j)
                    nv[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])];
                v = std::move(nv);
            };
            auto pick_q = [&](std::vector<double>& v) {
                std::vector<double> nv(static_cast<std::size_t>(r_new * cols_q));
                for (int j = 0; j < r_new; ++j)
                    for (int col = 0; col < cols_q; ++col)
                        nv[static_cast<std::size_t>(j * cols_q + col)] =
                            v[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)] * cols_q + col)];
                v = std::move(nv);
            };
            auto& imp = state_.per_adaptor[k];
            pick_p(imp.p_mean);
            pick_p(imp.p_unc);
            pick_lam(imp.lam_mean);
            pick_lam(imp.lam_unc);
            pick_q(imp.q_mean);
            pick_q(imp.q_unc);
            if (cfg_.optimizer.adam) {
                auto& mom = moments_[k];
                pick_p(mom.m_p);
                pick_p(mom.v_p);
                pick_lam(mom.m_lam);
                pick_lam(mom.v_lam);
                pick_q(mom.m_q);
                pick_q(mom.v_q);
            }
        }
        frozen_ = true;
    }
    return event;
}

} // namespace lma

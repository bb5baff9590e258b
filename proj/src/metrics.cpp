// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lma/autograd.hpp"

namespace lma {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

} // namespace

FeatureSource feature_source_from_string(const std::string& s) {
    if (s == "shared_path") return FeatureSource::shared_path;
    if (s == "adaptor_path") return FeatureSource::adaptor_path;
    if (s == "two_stream") return FeatureSource::two_stream;
    if (s == "raw_input") return FeatureSource::raw_input;
    throw std::invalid_argument("unknown feature source: " + s);
}

std::string feature_source_to_string(FeatureSource s) {
    switch (s) {
    case FeatureSource::shared_path: return "shared_path";
    case FeatureSource::adaptor_path: return "adaptor_path";
    case FeatureSource::two_stream: return "two_stream";
    case FeatureSource::raw_input: return "raw_input";
    }
    throw std::invalid_argument("unknown feature source");
}

PearsonAbs pearson_abs(const double* a, const double* b, std::size_t n) {
    if (n < 2) throw std::invalid_argument("pearson_abs: need at least 2 points");
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return {0.0, false};
    const double rho = cov / std::sqrt(va * vb);
    return {std::min(std::fabs(rho), 1.0), true};
}

PearsonAbs pearson_abs(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("pearson_abs: length mismatch");
    return pearson_abs(a.data(), b.data(), a.size());
}

int bias_bin(double abs_rho) {
    if (!(abs_rho >= 0.0) || abs_rho > 1.0)
        throw std::invalid_argument("bias_bin: |rho| must lie in [0, 1]");
    const int bin = static_cast<int>(abs_rho * kBiasBins);
    return bin < kBiasBins ? bin : kBiasBins - 1;
}

void BiasHistogram::validate() const {
    double mass = 0.0;
    for (double p : proportion) mass += p;
    if (std::fabs(mass - 1.0) > 1e-9)
        throw std::logic_error("bias histogram proportions must sum to 1");
}

void BiasAccumulator::add(const PearsonAbs& r) {
    if (!r.defined) {
        ++excluded_;
        return;
    }
    ++counts_[static_cast<std::size_t>(bias_bin(r.value))];
    sum_abs_rho_ += r.value;
    ++valid_;
}

BiasHistogram BiasAccumulator::finalize(std::string tap, FeatureSource source) const {
    if (valid_ < kMinValidPairs)
        throw std::runtime_error("bias histogram for tap " + tap + ": only " +
                                 std::to_string(valid_) + " valid channel-pairs, need " +
                                 std::to_string(kMinValidPairs));
    BiasHistogram h;
    h.tap = std::move(tap);
    h.source = source;
    for (int i = 0; i < kBiasBins; ++i)
        h.proportion[static_cast<std::size_t>(i)] =
            static_cast<double>(counts_[static_cast<std::size_t>(i)]) /
            static_cast<double>(valid_);
    h.valid_pairs = valid_;
    h.excluded = excluded_;
    h.mean_abs_rho = sum_abs_rho_ / static_cast<double>(valid_);
    h.validate();
    return h;
}

namespace {

/// Per-channel correlations of one tensor pair [C, H, W] into an accumulator.
void accumulate_pair(const Tensor& a, const Tensor& b, BiasAccumulator& acc) {
    const auto& sh = a.shape();
    const int channels = sh[0];
    const std::size_t plane = a.numel() / static_cast<std::size_t>(channels);
    for (int c = 0; c < channels; ++c) {
        const std::size_t off = static_cast<std::size_t>(c) * plane;
        acc.add(pearson_abs(a.data() + off, b.data() + off, plane));
    }
}

void check_compatible(const Model& model, const Dataset& ds, FeatureSource source) {
    ds.validate();
    if (source == FeatureSource::raw_input) return;
    if (ds.channels != model.config().in_channels)
        throw std::invalid_argument("dataset channels do not match model input channels");
    const Mode mode = model.mode();
    if (mode == Mode::unimodal)
        throw std::invalid_argument("bias analysis needs two modalities; model is unimodal");
    const bool lma = mode == Mode::lma_adaptive || mode == Mode::lma_fixed;
    if (source == FeatureSource::two_stream && lma)
        throw std::invalid_argument("two_stream source needs a two-stream model");
    if (source != FeatureSource::two_stream && !lma)
        throw std::invalid_argument(feature_source_to_string(source) +
                                    " source needs an lma-mode model");
}

/// Runs forward_split for both modalities of every sample and accumulates
/// per-tap correlations. For raw_input there is one "input" pseudo-tap.
std::vector<std::pair<std::string, BiasAccumulator>> collect_bias(const Model& model,
                                                                  const Dataset& ds,
                                                                  FeatureSource source) {
    check_compatible(model, ds, source);
    std::vector<std::pair<std::string, BiasAccumulator>> taps;
    if (source == FeatureSource::raw_input) {
        taps.emplace_back("input", BiasAccumulator{});
        for (const auto& s : ds.samples)
            accumulate_pair(s.visible, s.infrared, taps[0].second);
        return taps;
    }
    for (const auto& name : model.config().tap_names()) taps.emplace_back(name, BiasAccumulator{});
    for (const auto& s : ds.samples) {
        autograd::Tape tape;
        Shape batched{1, ds.channels, ds.height, ds.width};
        auto xv = tape.leaf(s.visible.reshaped(batched), false);
        auto xi = tape.leaf(s.infrared.reshaped(batched), false);
        const auto tv = model.forward_split(tape, xv, 0);
        const auto ti = model.forward_split(tape, xi, 1);
        for (std::size_t t = 0; t < taps.size(); ++t) {
            const bool adaptor = source == FeatureSource::adaptor_path;
            const auto& fa = adaptor ? tv[t].adaptor_pre : tv[t].shared_pre;
            const auto& fb = adaptor ? ti[t].adaptor_pre : ti[t].shared_pre;
            // Batch dimension is 1; treat [1, C, H, W] as [C, H, W].
            const Tensor a = fa->value.reshaped({fa->value.shape()[1], fa->value.shape()[2],
                                                 fa->value.shape()[3]});
            const Tensor b = fb->value.reshaped({fb->value.shape()[1], fb->value.shape()[2],
                                                 fb->value.shape()[3]});
            accumulate_pair(a, b, taps[t].second);
        }
    }
    return taps;
}

} // namespace

BiasHistogram bias_histogram(const Model& model, const Dataset& ds, const std::string& tap,
                             FeatureSource source) {
    auto taps = collect_bias(model, ds, source);
    for (auto& [name, acc] : taps)
        if (name == tap) return acc.finalize(name, source);
    throw std::invalid_argument("unknown tap: " + tap);
}

std::vector<BiasHistogram> bias_histograms(const Model& model, const Dataset& ds,
                                           FeatureSource source) {
    auto taps = collect_bias(model, ds, source);
    std::vector<BiasHistogram> out;
    out.reserve(taps.size());
    for (auto& [name, acc] : taps) out.push_back(acc.finalize(name, source));
    return out;
}

std::vector<DepthPoint> depth_profile(const Model& model, const Dataset& ds) {
    const FeatureSource source = model.mode() == Mode::two_stream ? FeatureSource::two_stream
                                                                  : FeatureSource::shared_path;
    auto taps = collect_bias(model, ds, source);
    std::vector<DepthPoint> out;
    out.reserve(taps.size());
    for (auto& [name, acc] : taps) {
        const BiasHistogram h = acc.finalize(name, source);
        out.push_back({name, 1.0 - h.mean_abs_rho, h.valid_pairs, h.excluded});
    }
    return out;
}

void RankReport::validate() const {
    for (const auto& b : blocks)
        if (b.average_active_rank < 0.0 || b.average_active_rank > static_cast<double>(r_init))
            throw std::logic_error("block average rank outside [0, r_init]");
    if (overall_average < 0.0 || overall_average > static_cast<double>(r_init))
        throw std::logic_error("overall average rank outside [0, r_init]");
}

RankReport rank_report(const Model& model, double target_average) {
    RankReport report;
    report.r_init = model.config().r_init;
    report.target_average = target_average;
    const int block_count = static_cast<int>(model.config().block_channels.size());
    std::vector<long> active(static_cast<std::size_t>(block_count), 0);
    std::vector<int> count(static_cast<std::size_t>(block_count), 0);
    long total_active = 0;
    int total_count = 0;
    for (const auto& stack : model.stacks())
        for (const auto& layer : stack)
            for (const auto& ad : layer.adaptors) {
                const auto b = static_cast<std::size_t>(layer.block);
                active[b] += ad.active_count();
                count[b] += 1;
                total_active += ad.active_count();
                total_count += 1;
            }
    for (int b = 0; b < block_count; ++b) {
        const auto i = static_cast<std::size_t>(b);
        RankReport::BlockRank row;
        row.block = b;
        row.adaptor_count = count[i];
        row.average_active_rank =
            count[i] ? static_cast<double>(active[i]) / static_cast<double>(count[i]) : 0.0;
        report.blocks.push_back(row);
    }
    report.overall_average =
        total_count ? static_cast<double>(total_active) / static_cast<double>(total_count) : 0.0;
    report.validate();
    return report;
}

ParamReport param_report(const Model& model) {
    const auto& cfg = model.config();
    long stack_closed = 0;
    long adaptor_closed = 0;
    int c1 = cfg.in_channels;
    for (int c2 : cfg.block_channels) {
        stack_closed += count_params(c1, c2, cfg.kernel, 1).shared_params + c2;
        stack_closed += count_params(c2, c2, cfg.kernel, 1).shared_params + c2;
        c1 = c2;
    }
    const long head_closed =
        static_cast<long>(cfg.classes) * cfg.block_channels.back() + cfg.classes;
    for (const auto& stack : model.stacks()) {
        int layer_in = cfg.in_channels;
        for (const auto& layer : stack) {
            const int layer_out = layer.weight->value.shape()[0];
            for (const auto& ad : layer.adaptors) {
                const long closed =
                    count_params(layer_in, layer_out, cfg.kernel, ad.r_max()).adaptor_params;
                if (closed != ad.storage_scalars())
                    throw std::logic_error("adaptor closed-form count disagrees with storage");
                adaptor_closed += closed;
            }
            layer_in = layer_out;
        }
    }

    ParamReport report;
    report.mode = model.mode();
    report.unimodal = stack_closed + head_closed;
    if (report.unimodal != model.unimodal_params())
        throw std::logic_error("unimodal closed-form count disagrees with storage");
    report.total =
        static_cast<long>(model.stacks().size()) * stack_closed + head_closed + adaptor_closed;
    if (report.total != model.total_params())
        throw std::logic_error("total closed-form count disagrees with storage");
    report.increment = report.total - report.unimodal;
    report.increment_percent =
        100.0 * static_cast<double>(report.increment) / static_cast<double>(report.unimodal);
    return report;
}

std::string bias_histogram_csv(const std::vector<BiasHistogram>& histograms) {
    std::string out = "# lma.bias_histogram.v1\n";
    out += "tap,source,bin_lo,bin_hi,proportion,valid_pairs,excluded,mean_abs_rho\n";
    for (const auto& h : histograms)
        for (int b = 0; b < kBiasBins; ++b) {
            out += h.tap + ',' + feature_source_to_string(h.source) + ',' +
                   fmt(static_cast<double>(b) / kBiasBins) + ',' +
                   fmt(static_cast<double>(b + 1) / kBiasBins) + ',' +
                   fmt(h.proportion[static_cast<std::size_t>(b)]) + ',' +
                   std::to_string(h.valid_pairs) + ',' + std::to_string(h.excluded) + ',' +
                   fmt(h.mean_abs_rho) + '\n';
        }
    return out;
}

std::string depth_profile_csv(const std::vector<DepthPoint>& profile) {
    std::string out = "# lma.depth_profile.v1\n";
    out += "tap,heterogeneity,valid_pairs,excluded\n";
    for (const auto& p : profile)
        out += p.tap + ',' + fmt(p.heterogeneity) + ',' + std::to_string(p.valid_pairs) + ',' +
               std::to_string(p.excluded) + '\n';
    return out;
}

std::string rank_report_csv(const RankReport& report) {
    std::string out = "# lma.rank_report.v1\n";
    out += "block,average_active_rank,adaptor_count,r_init,target_average\n";
    for (const auto& b : report.blocks)
        out += std::to_string(b.block) + ',' + fmt(b.average_active_rank) + ',' +
               std::to_string(b.adaptor_count) + ',' + std::to_string(report.r_init) + ',' +
               fmt(report.target_average) + '\n';
    return out;
}

std::string param_report_csv(const ParamReport& report) {
    std::string out = "# lma.param_report.v1\n";
    out += "mode,total_params,unimodal_params,increment,increment_percent\n";
    out += mode_to_string(report.mode) + ',' + std::to_string(report.total) + ',' +
           std::to_string(report.unimodal) + ',' + std::to_string(report.increment) + ',' +
           fmt(report.increment_percent) + '\n';
    return out;
}

} // namespace lma

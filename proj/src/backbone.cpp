// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/backbone.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lma {

using autograd::Tape;
using autograd::VarPtr;

Mode mode_from_string(const std::string& s) {
    if (s == "lma_adaptive") return Mode::lma_adaptive;
    if (s == "lma_fixed") return Mode::lma_fixed;
    if (s == "two_stream") return Mode::two_stream;
    if (s == "unimodal") return Mode::unimodal;
    throw std::invalid_argument("unknown mode: " + s);
}

std::string mode_to_string(Mode m) {
    switch (m) {
    case Mode::lma_adaptive: return "lma_adaptive";
    case Mode::lma_fixed: return "lma_fixed";
    case Mode::two_stream: return "two_stream";
    case Mode::unimodal: return "unimodal";
    }
    throw std::logic_error("bad mode value");
}

std::vector<std::string> BackboneConfig::tap_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < block_channels.size(); ++i)
        names.push_back("P" + std::to_string(i + 3));
    return names;
}

void BackboneConfig::validate() const {
    std::ostringstream err;
    if (in_channels < 1) err << "in_channels must be >= 1; ";
    if (block_channels.empty()) err << "block_channels must be non-empty; ";
    for (int c : block_channels)
        if (c < 1) {
            err << "block_channels entries must be >= 1; ";
            break;
        }
    if (kernel < 1 || kernel % 2 == 0) err << "kernel must be odd and >= 1; ";
    if (classes < 2) err << "classes must be >= 2; ";
    if (modalities < 1) err << "modalities must be >= 1; ";
    if (r_init < 1) err << "r_init must be >= 1; ";
    const std::string msg = err.str();
    if (!msg.empty()) throw std::invalid_argument("backbone config: " + msg);
}

namespace {

VarPtr make_conv_weight(int c2, int c1, int k, Rng& rng) {
    Tensor w({c2, c1, k, k});
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(c1) * k * k));
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std_dev);
    return autograd::make_leaf(std::move(w), true);
}

VarPtr make_zero_bias(int c2) {
    return autograd::make_leaf(Tensor({c2}), true);
}

} // namespace

std::vector<SharedLayer> Model::build_stack(Rng& rng, bool with_adaptors) const {
    std::vector<SharedLayer> stack;
    int c_in = config_.in_channels;
    const int k = config_.kernel;
    const int pad = (k - 1) / 2;
    for (std::size_t b = 0; b < config_.block_channels.size(); ++b) {
        const int c_out = config_.block_channels[b];
        for (int stage = 0; stage < 2; ++stage) {
            SharedLayer layer;
            layer.block = static_cast<int>(b);
            layer.stride = stage == 0 ? 2 : 1;
            layer.pad = pad;
            const int c1 = stage == 0 ? c_in : c_out;
            layer.weight = make_conv_weight(c_out, c1, k, rng);
            layer.bias = make_zero_bias(c_out);
            layer.is_tap = stage == 1;
            if (with_adaptors) {
                const int bound = std::min(c1 * k, c_out * k) - 1;
                if (config_.r_init > bound)
                    throw std::invalid_argument(
                        "r_init " + std::to_string(config_.r_init) + " exceeds rank bound " +
                        std::to_string(bound) + " for layer " + std::to_string(stack.size()));
                for (int m = 0; m < config_.modalities; ++m)
                    layer.adaptors.emplace_back(Shape{c_out, c1, k, k}, config_.r_init, rng);
            }
            stack.push_back(std::move(layer));
        }
        c_in = c_out;
    }
    return stack;
}

Model Model::build(const BackboneConfig& config, Mode mode, Rng& rng) {
    config.validate();
    Model model;
    model.config_ = config;
    model.mode_ = mode;
    const bool lma = mode == Mode::lma_adaptive || mode == Mode::lma_fixed;
    if (mode == Mode::two_stream) {
        for (int m = 0; m < config.modalities; ++m)
            model.stacks_.push_back(model.build_stack(rng, false));
    } else {
        model.stacks_.push_back(model.build_stack(rng, lma));
    }
    const int c_deep = config.block_channels.back();
    Tensor hw({config.classes, c_deep});
    const double std_dev = std::sqrt(2.0 / c_deep);
    for (std::size_t i = 0; i < hw.numel(); ++i) hw[i] = rng.normal(0.0, std_dev);
    model.head_w_ = autograd::make_leaf(std::move(hw), true);
    model.head_b_ = autograd::make_leaf(Tensor({config.classes}), true);
    return model;
}

namespace {

const std::vector<SharedLayer>& stack_for(const std::vector<std::vector<SharedLayer>>& stacks,
                                          Mode mode, int m, int modalities) {
    if (m < 0 || m >= modalities)
        throw std::out_of_range("modality index " + std::to_string(m) + " out of range");
    if (mode == Mode::two_stream) return stacks[static_cast<std::size_t>(m)];
    return stacks[0];
}

} // namespace

std::vector<VarPtr> Model::forward_modality(Tape& tape, const VarPtr& x, int m) const {
    const auto& stack = stack_for(stacks_, mode_, m, config_.modalities);
    std::vector<VarPtr> taps;
    VarPtr h = x;
    for (const auto& layer : stack) {
        VarPtr kernel = layer.adaptors.empty()
                            ? layer.weight
                            : layer.adaptors[static_cast<std::size_t>(m)].merged(tape, layer.weight);
        VarPtr pre = tape.conv2d(h, kernel, layer.bias, layer.stride, layer.pad);
        h = tape.relu(pre);
        if (layer.is_tap) taps.push_back(h);
    }
    return taps;
}

std::vector<SplitTap> Model::forward_split(Tape& tape, const VarPtr& x, int m) const {
    const auto& stack = stack_for(stacks_, mode_, m, config_.modalities);
    const auto names = config_.tap_names();
    std::vector<SplitTap> taps;
    VarPtr h = x;
    for (const auto& layer : stack) {
        VarPtr shared_pre = tape.conv2d(h, layer.weight, layer.bias, layer.stride, layer.pad);
        VarPtr adaptor_pre;
        VarPtr pre = shared_pre;
        if (!layer.adaptors.empty()) {
            VarPtr kernel = layer.adaptors[static_cast<std::size_t>(m)].materialize(tape);
            adaptor_pre = tape.conv2d(h, kernel, nullptr, layer.stride, layer.pad);
            pre = tape.add(shared_pre, adaptor_pre);
        }
        h = tape.relu(pre);
        if (layer.is_tap)
            taps.push_back({names[static_cast<std::size_t>(layer.block)], shared_pre, adaptor_pre});
    }
    return taps;
}

VarPtr Model::fuse(Tape& tape, const std::vector<VarPtr>& features) {
    if (features.empty()) throw std::invalid_argument("fuse: no features");
    VarPtr acc = features[0];
    for (std::size_t i = 1; i < features.size(); ++i) {
        if (features[i]->value.shape() != acc->value.shape())
            throw std::invalid_argument("fuse: shape mismatch across modalities");
        acc = tape.add(acc, features[i]);
    }
    return acc;
}

VarPtr Model::head(Tape& tape, const VarPtr& fused) const {
    VarPtr pooled = tape.avg_pool_global(fused);
    return tape.linear(pooled, head_w_, head_b_);
}

VarPtr Model::forward_logits(Tape& tape, const std::vector<VarPtr>& xs) const {
    const int want = mode_ == Mode::unimodal ? 1 : config_.modalities;
    if (static_cast<int>(xs.size()) != want)
        throw std::invalid_argument("forward_logits: expected " + std::to_string(want) +
                                    " inputs, got " + std::to_string(xs.size()));
    std::vector<VarPtr> deepest;
    for (int m = 0; m < want; ++m) deepest.push_back(forward_modality(tape, xs[static_cast<std::size_t>(m)], m).back());
    return head(tape, fuse(tape, deepest));
}

std::vector<std::pair<std::string, VarPtr>> Model::named_params() {
    std::vector<std::pair<std::string, VarPtr>> out;
    for (std::size_t s = 0; s < stacks_.size(); ++s) {
        const std::string prefix =
            mode_ == Mode::two_stream ? "stream" + std::to_string(s) : std::string("backbone");
        for (std::size_t i = 0; i < stacks_[s].size(); ++i) {
            auto& layer = stacks_[s][i];
            const std::string base = prefix + ".l" + std::to_string(i);
            out.emplace_back(base + ".weight", layer.weight);
            out.emplace_back(base + ".bias", layer.bias);
            for (std::size_t m = 0; m < layer.adaptors.size(); ++m) {
                const std::string abase = base + ".m" + std::to_string(m);
                out.emplace_back(abase + ".P", layer.adaptors[m].p());
                out.emplace_back(abase + ".Lambda", layer.adaptors[m].lambda());
                out.emplace_back(abase + ".Q", layer.adaptors[m].q());
            }
        }
    }
    out.emplace_back("head.weight", head_w_);
    out.emplace_back("head.bias", head_b_);
    return out;
}

std::vector<std::pair<std::string, LowRankAdaptor*>> Model::adaptor_registry() {
    std::vector<std::pair<std::string, LowRankAdaptor*>> out;
    for (std::size_t i = 0; i < stacks_[0].size(); ++i) {
        auto& layer = stacks_[0][i];
        for (std::size_t m = 0; m < layer.adaptors.size(); ++m)
            out.emplace_back("backbone.l" + std::to_string(i) + ".m" + std::to_string(m),
                             &layer.adaptors[m]);
    }
    return out;
}

int Model::add_modality(Rng& rng) {
    if (mode_ == Mode::unimodal)
        throw std::invalid_argument("add_modality: unimodal model cannot grow modalities");
    if (mode_ == Mode::two_stream) {
        stacks_.push_back(build_stack(rng, false));
    } else {
        for (auto& layer : stacks_[0]) {
            const auto& w = layer.weight->value.shape();
            layer.adaptors.emplace_back(Shape{w[0], w[1], w[2], w[3]}, config_.r_init, rng);
        }
    }
    return config_.modalities++;
}

long Model::total_params() const {
    long total = 0;
    for (const auto& stack : stacks_)
        for (const auto& layer : stack) {
            total += static_cast<long>(layer.weight->value.numel());
            total += static_cast<long>(layer.bias->value.numel());
            for (const auto& adaptor : layer.adaptors) total += adaptor.storage_scalars();
        }
    total += static_cast<long>(head_w_->value.numel());
    total += static_cast<long>(head_b_->value.numel());
    return total;
}

long Model::unimodal_params() const {
    long total = 0;
    for (const auto& layer : stacks_[0]) {
        total += static_cast<long>(layer.weight->value.numel());
        total += static_cast<long>(layer.bias->value.numel());
    }
    total += static_cast<long>(head_w_->value.numel());
    total += static_cast<long>(head_b_->value.numel());
    return total;
}

} // namespace lma

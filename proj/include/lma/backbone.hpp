// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared convolutional backbone with per-modality low-rank adaptors, plus the
// two-stream baseline (fully independent per-modality stacks). Blocks are
// (stride-2 conv, stride-1 conv), each followed by relu; block outputs are
// the P3/P4/P5 analog taps. The classifier head pools the fused deepest tap.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lma/adaptor.hpp"
#include "lma/autograd.hpp"
#include "lma/rng.hpp"

namespace lma {

enum class Mode { lma_adaptive, lma_fixed, two_stream, unimodal };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct BackboneConfig {
    int in_channels = 4;
    std::vector<int> block_channels = {64, 128, 256};
    int kernel = 3;
    int classes = 4;
    int modalities = 2;
    /// Adaptor rank at build time (lma modes only).
    int r_init = 9;

    /// P3, P4, ... derived from block count.
    std::vector<std::string> tap_names() const;
    /// Throws invalid_argument listing every violation.
    void validate() const;
};

struct SharedLayer {
    int block = 0;
    int stride = 1;
    int pad = 0;
    autograd::VarPtr weight;
    autograd::VarPtr bias;
    /// One adaptor per modality in lma modes; empty otherwise.
    std::vector<LowRankAdaptor> adaptors;
    /// True for the last layer of a block (its relu output is a tap).
    bool is_tap = false;
};

struct SplitTap {
    std::string name;
    /// Pre-activation branch outputs of Fig. 4. adaptor_pre is null for
    /// modes without adaptors.
    autograd::VarPtr shared_pre;
    autograd::VarPtr adaptor_pre;
};

class Model {
public:
    static Model build(const BackboneConfig& config, Mode mode, Rng& rng);

    const BackboneConfig& config() const { return config_; }
    Mode mode() const { return mode_; }
    int modalities() const { return config_.modalities; }

    /// Post-activation features at each tap for one modality, shallow to
    /// deep. lma modes run the shared stack merged with modality adaptors;
    /// two_stream runs the modality's own stack.
    std::vector<autograd::VarPtr> forward_modality(autograd::Tape& tape,
                                                   const autograd::VarPtr& x, int m) const;

    /// Parallel-branch forward (Fig. 4): records pre-activation shared-path
    /// and adaptor-path features at each tap. For two_stream/unimodal the
    /// shared_pre holds the stream's pre-activation and adaptor_pre is null.
    std::vector<SplitTap> forward_split(autograd::Tape& tape, const autograd::VarPtr& x,
                                        int m) const;

    /// Elementwise-sum fusion of per-modality features (identical shapes).
    static autograd::VarPtr fuse(autograd::Tape& tape,
                                 const std::vector<autograd::VarPtr>& features);

    /// Global average pool + linear classifier on fused deepest features.
    autograd::VarPtr head(autograd::Tape& tape, const autograd::VarPtr& fused) const;

    /// Full forward: one input per modality (unimodal uses xs[0] only),
    /// fuse deepest taps, classify.
    autograd::VarPtr forward_logits(autograd::Tape& tape,
                                    const std::vector<autograd::VarPtr>& xs) const;

    /// All trainable tensors in fixed construction order.
    std::vector<std::pair<std::string, autograd::VarPtr>> named_params();

    /// All adaptors in fixed order (layer-major, then modality); the flat
    /// index is the adaptor id used by the rank allocator.
    std::vector<std::pair<std::string, LowRankAdaptor*>> adaptor_registry();

    /// Adds one modality: lma modes grow an adaptor per layer, two_stream
    /// grows a full stream. Returns the new modality index.
    int add_modality(Rng& rng);

    /// Stored scalar count over all stacks, adaptors and the head.
    long total_params() const;
    /// Scalar count of one adaptor-free backbone stack plus the head.
    long unimodal_params() const;

    int block_of_layer(int layer_index) const { return stacks_[0][layer_index].block; }
    int layers_per_stack() const { return static_cast<int>(stacks_[0].size()); }

    std::vector<std::vector<SharedLayer>>& stacks() { return stacks_; }
    const std::vector<std::vector<SharedLayer>>& stacks() const { return stacks_; }
    autograd::VarPtr head_weight() const { return head_w_; }
    autograd::VarPtr head_bias() const { return head_b_; }

private:
    BackboneConfig config_;
    Mode mode_ = Mode::unimodal;
    /// One stack for lma/unimodal modes, one per modality for two_stream.
    std::vector<std::vector<SharedLayer>> stacks_;
    autograd::VarPtr head_w_, head_b_;

    std::vector<SharedLayer> build_stack(Rng& rng, bool with_adaptors) const;
};

} // namespace lma

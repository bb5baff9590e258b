// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Run orchestration: JSON run configuration, the per-mode training loop
// (adaptor allocation, shared optimizer, per-epoch metrics), deterministic
// checkpointing with bit-exact resume, and evaluation.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lma/allocator.hpp"
#include "lma/backbone.hpp"
#include "lma/checkpoint.hpp"
#include "lma/dataset.hpp"

namespace lma {

struct RunConfig {
    /// Directory holding train.fora1 and val.fora1.
    std::string dataset;
    std::string out_dir;
    Mode mode = Mode::lma_adaptive;
    BackboneConfig backbone;
    int r_init = 9;
    int r_target = 6;
    int epochs = 50;
    int warmup_epochs = 8;
    int decay_end_epoch = 25;
    int batch_size = 8;
    double learning_rate = 0.003;
    /// Importance EMA factors (Eq. 21-22).
    double beta1 = 0.85;
    double beta2 = 0.85;
    int prune_interval = 10;
    /// "adam" or "sgd".
    std::string optimizer = "adam";
    std::uint64_t seed = 1;
    /// Save checkpoint_epoch{N}.ckpt every N epochs; 0 keeps only the final.
    int checkpoint_every = 0;

    /// Collects every violation into one invalid_argument.
    void validate() const;
    /// Parses and validates; type errors, unknown keys and semantic
    /// violations are enumerated together. origin names the source.
    static RunConfig from_json_text(const std::string& text, const std::string& origin);
    static RunConfig from_file(const std::string& path);
    /// Canonical echo (alphabetical keys); embedded in checkpoints.
    std::string to_json() const;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    long active_rank_total = 0;
    long budget = 0;
};

/// Schema-stamped CSV, one row per epoch; byte-stable for fixed inputs.
std::string train_metrics_csv(const std::vector<EpochMetrics>& rows);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<int> per_class_count;
};

/// Deterministic batched evaluation; no parameter mutation. Rejects
/// model/dataset shape mismatches.
EvalResult evaluate(const Model& model, const Dataset& ds, int batch_size);

struct TrainResult {
    std::vector<EpochMetrics> epochs;
    std::vector<PruneEvent> prune_events;
    std::string metrics_path;
    std::string checkpoint_path;
};

class Trainer {
public:
    /// Fresh run: loads both splits, seeds the generator, builds the model
    /// and per-mode update machinery.
    explicit Trainer(RunConfig cfg);
    /// Resume: same construction, then restores parameters, masks, adaptor
    /// shapes, allocator/optimizer state, counters and RNG from the
    /// checkpoint. The checkpoint's config echo must match cfg exactly.
    Trainer(RunConfig cfg, const Checkpoint& resume);

    /// Trains from the current epoch to cfg.epochs, writing metrics.csv and
    /// checkpoints under cfg.out_dir.
    TrainResult run();

    /// Snapshot of everything needed for bit-exact resume.
    Checkpoint make_checkpoint();

    /// Invoked after every completed epoch; progress reporting only.
    void set_epoch_callback(std::function<void(const EpochMetrics&)> cb) {
        on_epoch_ = std::move(cb);
    }

    Model& model() { return model_; }
    const RunConfig& config() const { return cfg_; }
    long steps_per_epoch() const { return steps_per_epoch_; }
    int completed_epochs() const { return epoch_; }
    const Dataset& train_split() const { return train_; }
    const Dataset& val_split() const { return val_; }
    RankAllocator* allocator() { return allocator_ ? allocator_.get() : nullptr; }

    /// Rebuilds the model stored in a checkpoint (analysis paths). The
    /// config echo is parsed from the checkpoint itself.
    static Model restore_model(const Checkpoint& ck, RunConfig* cfg_out = nullptr);

private:
    void build_machinery();
    void restore_state(const Checkpoint& ck);
    EpochMetrics epoch_pass(std::vector<PruneEvent>& events);
    void zero_grads();

    RunConfig cfg_;
    Dataset train_, val_;
    Rng rng_;
    Model model_;
    std::vector<std::pair<std::string, LowRankAdaptor*>> registry_;
    std::unique_ptr<RankAllocator> allocator_;
    std::unique_ptr<Optimizer> optimizer_;
    long steps_per_epoch_ = 0;
    long it_ = 0;
    int epoch_ = 0;
    std::vector<EpochMetrics> history_;
    std::function<void(const EpochMetrics&)> on_epoch_;
};

/// Convenience wrapper: fresh run, or resume when resume_checkpoint names a
/// checkpoint file.
TrainResult train(const RunConfig& cfg, const std::string& resume_checkpoint = "");

} // namespace lma

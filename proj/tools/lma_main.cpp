// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: dataset generation, training, evaluation and the
// analysis suite. Exit codes: 0 success, 1 failed check, 2 usage,
// 3 invalid configuration, 4 I/O or format error, 5 internal error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lma/metrics.hpp"
#include "lma/synth.hpp"
#include "lma/trainer.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitInternal = 5;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(out_path + ": cannot open for writing");
    f << text;
    if (!f) throw std::runtime_error(out_path + ": write failed");
    std::cout << "wrote " << out_path << "\n";
}

lma::Dataset load_split(const std::string& dir, const std::string& split) {
    if (split != "train" && split != "val")
        throw std::invalid_argument("split must be \"train\" or \"val\", got \"" + split + "\"");
    return lma::load_fora1((std::filesystem::path(dir) / (split + ".fora1")).string());
}

struct GenDataOpts {
    std::string out;
    lma::synth::DatasetConfig cfg;
    bool overwrite = false;
};

int run_gen_data(const GenDataOpts& o) {
    const auto files = lma::synth::make_dataset(o.cfg, o.out, o.overwrite);
    const long train_n = static_cast<long>(o.cfg.classes) * o.cfg.train_per_class;
    const long val_n = static_cast<long>(o.cfg.classes) * o.cfg.val_per_class;
    std::cout << "wrote " << files.train_path << " (" << train_n << " samples)\n";
    std::cout << "wrote " << files.val_path << " (" << val_n << " samples)\n";
    return 0;
}

struct TrainOpts {
    std::string config;
    std::string resume;
    std::string mode;
    std::string out;
    int r = 0;
    long seed = -1;
    bool quiet = false;
};

int run_train(const TrainOpts& o) {
    lma::RunConfig cfg = lma::RunConfig::from_file(o.config);
    if (!o.mode.empty()) cfg.mode = lma::mode_from_string(o.mode);
    if (o.r > 0) {
        cfg.r_init = o.r;
        cfg.r_target = std::min(cfg.r_target, o.r);
    }
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.out.empty()) cfg.out_dir = o.out;
    cfg.validate();

    std::optional<lma::Trainer> trainer_slot;
    if (o.resume.empty()) {
        trainer_slot.emplace(cfg);
    } else {
        trainer_slot.emplace(cfg, lma::Checkpoint::load(o.resume));
    }
    lma::Trainer& trainer = *trainer_slot;
    if (!o.quiet)
        trainer.set_epoch_callback([&](const lma::EpochMetrics& m) {
            std::cout << "epoch " << m.epoch << "/" << cfg.epochs << " loss " << fmt(m.train_loss)
                      << " train_acc " << fmt(m.train_accuracy) << " val_acc "
                      << fmt(m.val_accuracy);
            if (cfg.mode == lma::Mode::lma_adaptive || cfg.mode == lma::Mode::lma_fixed)
                std::cout << " active " << m.active_rank_total << " budget " << m.budget;
            std::cout << "\n";
        });
    const lma::TrainResult res = trainer.run();
    std::cout << "final val accuracy " << fmt(res.epochs.back().val_accuracy) << "\n";
    std::cout << "metrics " << res.metrics_path << "\n";
    std::cout << "checkpoint " << res.checkpoint_path << "\n";
    return 0;
}

struct EvalOpts {
    std::string checkpoint;
    std::string dataset;
    std::string split = "val";
    int batch = 8;
};

int run_eval(const EvalOpts& o) {
    const lma::Checkpoint ck = lma::Checkpoint::load(o.checkpoint);
    const lma::Model model = lma::Trainer::restore_model(ck);
    const lma::Dataset ds = load_split(o.dataset, o.split);
    const lma::EvalResult r = lma::evaluate(model, ds, o.batch);
    std::cout << "accuracy " << fmt(r.accuracy) << " (" << o.split << ", "
              << ds.samples.size() << " samples)\n";
    for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c)
        std::cout << "class " << c << " accuracy " << fmt(r.per_class_accuracy[c]) << " count "
                  << r.per_class_count[c] << "\n";
    return 0;
}

struct AnalyzeBiasOpts {
    std::string checkpoint;
    std::string dataset;
    std::string split = "val";
    std::string source;
    std::string tap;
    std::string out;
};

int run_analyze_bias(const AnalyzeBiasOpts& o) {
    const lma::FeatureSource source = lma::feature_source_from_string(o.source);
    const lma::Dataset ds = load_split(o.dataset, o.split);
    lma::Model model = [&] {
        if (!o.checkpoint.empty())
            return lma::Trainer::restore_model(lma::Checkpoint::load(o.checkpoint));
        if (source != lma::FeatureSource::raw_input)
            throw std::invalid_argument("source " + o.source + " requires --checkpoint");
        // raw_input ignores the model; build a placeholder.
        lma::BackboneConfig bc;
        bc.in_channels = ds.channels;
        bc.classes = ds.class_count;
        lma::Rng rng(0);
        return lma::Model::build(bc, lma::Mode::unimodal, rng);
    }();
    std::vector<lma::BiasHistogram> rows;
    if (o.tap.empty()) {
        rows = lma::bias_histograms(model, ds, source);
    } else {
        rows.push_back(lma::bias_histogram(model, ds, o.tap, source));
    }
    emit(lma::bias_histogram_csv(rows), o.out);
    return 0;
}

struct DepthProfileOpts {
    std::string checkpoint;
    std::string dataset;
    std::string split = "val";
    std::string out;
};

int run_depth_profile(const DepthProfileOpts& o) {
    const lma::Model model = lma::Trainer::restore_model(lma::Checkpoint::load(o.checkpoint));
    const lma::Dataset ds = load_split(o.dataset, o.split);
    emit(lma::depth_profile_csv(lma::depth_profile(model, ds)), o.out);
    return 0;
}

struct RankReportOpts {
    std::string checkpoint;
    double target = -1.0;
    std::string out;
};

int run_rank_report(const RankReportOpts& o) {
    lma::RunConfig cfg;
    lma::Model model = lma::Trainer::restore_model(lma::Checkpoint::load(o.checkpoint), &cfg);
    const double target = o.target >= 0.0 ? o.target
                          : cfg.mode == lma::Mode::lma_adaptive
                              ? static_cast<double>(cfg.r_target)
                              : -1.0;
    const lma::RankReport r = lma::rank_report(model, target);
    std::cout << "overall average active rank " << fmt(r.overall_average) << " (r_init "
              << r.r_init;
    if (r.target_average >= 0.0) std::cout << ", target " << fmt(r.target_average);
    std::cout << ")\n";
    emit(lma::rank_report_csv(r), o.out);
    return 0;
}

struct ParamReportOpts {
    std::string config;
    std::string checkpoint;
    std::string out;
};

int run_param_report(const ParamReportOpts& o) {
    if (o.config.empty() == o.checkpoint.empty())
        throw std::invalid_argument("pass exactly one of --config or --checkpoint");
    lma::Model model = [&] {
        if (!o.checkpoint.empty())
            return lma::Trainer::restore_model(lma::Checkpoint::load(o.checkpoint));
        const lma::RunConfig cfg = lma::RunConfig::from_file(o.config);
        lma::BackboneConfig bc = cfg.backbone;
        bc.r_init = cfg.r_init;
        lma::Rng rng(cfg.seed);
        return lma::Model::build(bc, cfg.mode, rng);
    }();
    const lma::ParamReport r = lma::param_report(model);
    char line[256];
    std::snprintf(line, sizeof(line),
                  "mode=%s total=%ld unimodal=%ld increment=%ld (+%.4f%%)\n",
                  lma::mode_to_string(r.mode).c_str(), r.total, r.unimodal, r.increment,
                  r.increment_percent);
    std::cout << line;
    emit(lma::param_report_csv(r), o.out);
    return 0;
}

struct GradCheckOpts {
    std::string config;
    long seed = 1;
    int batch = 2;
    int height = 16;
    int width = 16;
    int entries = 3;
    double step = 1e-5;
    double tolerance = 1e-4;
};

int run_grad_check(const GradCheckOpts& o) {
    const lma::RunConfig cfg = lma::RunConfig::from_file(o.config);
    lma::BackboneConfig bc = cfg.backbone;
    bc.r_init = cfg.r_init;
    lma::Rng build_rng(static_cast<std::uint64_t>(o.seed));
    lma::Model model = lma::Model::build(bc, cfg.mode, build_rng);

    lma::Rng data_rng = lma::Rng::derive(static_cast<std::uint64_t>(o.seed), 777);
    const int inputs = cfg.mode == lma::Mode::unimodal ? 1 : bc.modalities;
    std::vector<lma::autograd::VarPtr> xs;
    for (int m = 0; m < inputs; ++m) {
        lma::Tensor x({o.batch, bc.in_channels, o.height, o.width});
        for (auto& v : x.vec()) v = data_rng.normal();
        xs.push_back(lma::autograd::make_leaf(std::move(x), false));
    }
    std::vector<int> labels;
    for (int i = 0; i < o.batch; ++i)
        labels.push_back(static_cast<int>(data_rng.below(static_cast<std::uint64_t>(bc.classes))));

    auto params = model.named_params();
    auto loss = [&](bool with_grad) {
        lma::autograd::Tape tape;
        const auto logits = model.forward_logits(tape, xs);
        const auto l = tape.cross_entropy(logits, labels);
        if (with_grad) tape.backward(l);
        return l->value[0];
    };
    lma::Rng pick_rng = lma::Rng::derive(static_cast<std::uint64_t>(o.seed), 778);
    const auto entries = lma::autograd::finite_diff_check(loss, params, o.entries, o.step, pick_rng);

    double worst = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
    for (const auto& e : entries) {
        checked += e.checked;
        if (e.max_rel_err >= worst) {
            worst = e.max_rel_err;
            worst_name = e.name;
        }
    }
    const bool ok = worst <= o.tolerance;
    std::cout << "checked " << checked << " coordinates across " << entries.size()
              << " tensors\n";
    std::cout << "max relative error " << fmt(worst) << " at " << worst_name << " (tolerance "
              << fmt(o.tolerance) << ")\n";
    std::cout << (ok ? "grad-check OK\n" : "grad-check FAILED\n");
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-rank modal adaptors: training and analysis"};
    app.require_subcommand(1);
    int rc = 0;

    GenDataOpts gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "render a synthetic FORA1 dataset");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--height", gen.cfg.height, "image height");
    gen_cmd->add_option("--width", gen.cfg.width, "image width");
    gen_cmd->add_option("--channels", gen.cfg.channels, "channels per modality");
    gen_cmd->add_option("--classes", gen.cfg.classes, "class count");
    gen_cmd->add_option("--train-per-class", gen.cfg.train_per_class, "train samples per class");
    gen_cmd->add_option("--val-per-class", gen.cfg.val_per_class, "val samples per class");
    gen_cmd->add_option("--seed", gen.cfg.seed, "generator seed");
    gen_cmd->add_option("--hf-fraction", gen.cfg.hf_fraction,
                        "fraction of unique components rendered as high-frequency texture");
    gen_cmd->add_option("--unique-intensity", gen.cfg.unique_intensity,
                        "modality-unique component intensity");
    gen_cmd->add_option("--shared-intensity", gen.cfg.shared_intensity,
                        "homogeneous component intensity");
    gen_cmd->add_option("--unique-per-modality", gen.cfg.unique_per_modality,
                        "unique components per modality");
    gen_cmd->add_option("--noise-std", gen.cfg.noise_std, "pixel noise stddev");
    gen_cmd->add_flag("--overwrite", gen.overwrite, "replace existing dataset files");
    gen_cmd->callback([&] { rc = run_gen_data(gen); });

    TrainOpts tr;
    auto* tr_cmd = app.add_subcommand("train", "train a model from a run config");
    tr_cmd->add_option("--config", tr.config, "run config JSON")->required();
    tr_cmd->add_option("--resume", tr.resume, "checkpoint to resume from");
    tr_cmd->add_option("--mode", tr.mode, "override mode");
    tr_cmd->add_option("--r", tr.r, "override r_init (r_target is clamped to it)");
    tr_cmd->add_option("--seed", tr.seed, "override seed");
    tr_cmd->add_option("--out", tr.out, "override output directory");
    tr_cmd->add_flag("--quiet", tr.quiet, "suppress per-epoch progress");
    tr_cmd->callback([&] { rc = run_train(tr); });

    EvalOpts ev;
    auto* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    ev_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    ev_cmd->add_option("--dataset", ev.dataset, "dataset directory")->required();
    ev_cmd->add_option("--split", ev.split, "train or val");
    ev_cmd->add_option("--batch", ev.batch, "evaluation batch size");
    ev_cmd->callback([&] { rc = run_eval(ev); });

    AnalyzeBiasOpts ab;
    auto* ab_cmd = app.add_subcommand("analyze-bias", "per-tap |rho| histograms across modalities");
    ab_cmd->add_option("--dataset", ab.dataset, "dataset directory")->required();
    ab_cmd->add_option("--source", ab.source,
                       "shared_path, adaptor_path, two_stream or raw_input")
        ->required();
    ab_cmd->add_option("--checkpoint", ab.checkpoint,
                       "checkpoint file (optional for raw_input)");
    ab_cmd->add_option("--split", ab.split, "train or val");
    ab_cmd->add_option("--tap", ab.tap, "single tap (default: all taps)");
    ab_cmd->add_option("--out", ab.out, "CSV output path (default: stdout)");
    ab_cmd->callback([&] { rc = run_analyze_bias(ab); });

    DepthProfileOpts dp;
    auto* dp_cmd = app.add_subcommand("depth-profile", "heterogeneity by tap depth");
    dp_cmd->add_option("--checkpoint", dp.checkpoint, "checkpoint file")->required();
    dp_cmd->add_option("--dataset", dp.dataset, "dataset directory")->required();
    dp_cmd->add_option("--split", dp.split, "train or val");
    dp_cmd->add_option("--out", dp.out, "CSV output path (default: stdout)");
    dp_cmd->callback([&] { rc = run_depth_profile(dp); });

    RankReportOpts rr;
    auto* rr_cmd = app.add_subcommand("rank-report", "average active rank per block");
    rr_cmd->add_option("--checkpoint", rr.checkpoint, "checkpoint file")->required();
    rr_cmd->add_option("--target", rr.target, "schedule target (default: config r_target)");
    rr_cmd->add_option("--out", rr.out, "CSV output path (default: stdout)");
    rr_cmd->callback([&] { rc = run_rank_report(rr); });

    ParamReportOpts pr;
    auto* pr_cmd = app.add_subcommand("param-report", "parameter increment accounting");
    pr_cmd->add_option("--config", pr.config, "run config JSON (fresh model)");
    pr_cmd->add_option("--checkpoint", pr.checkpoint, "checkpoint file (trained model)");
    pr_cmd->add_option("--out", pr.out, "CSV output path (default: stdout)");
    pr_cmd->callback([&] { rc = run_param_report(pr); });

    GradCheckOpts gc;
    auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient validation");
    gc_cmd->add_option("--config", gc.config, "run config JSON")->required();
    gc_cmd->add_option("--seed", gc.seed, "seed for init, batch and coordinate picks");
    gc_cmd->add_option("--batch", gc.batch, "probe batch size");
    gc_cmd->add_option("--height", gc.height, "probe image height");
    gc_cmd->add_option("--width", gc.width, "probe image width");
    gc_cmd->add_option("--entries", gc.entries, "coordinates probed per tensor (0 = all)");
    gc_cmd->add_option("--step", gc.step, "central-difference step");
    gc_cmd->add_option("--tolerance", gc.tolerance, "max relative error allowed");
    gc_cmd->callback([&] { rc = run_grad_check(gc); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\nrun with --help for usage\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return rc;
}

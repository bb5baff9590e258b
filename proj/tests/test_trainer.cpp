// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lma/metrics.hpp"
#include "lma/synth.hpp"
#include "lma/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("lma_trainer_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str() const { return path.string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const std::string& dataset_dir() {
    static TempDir dir;
    static bool made = false;
    static std::string cached;
    if (!made) {
        lma::synth::DatasetConfig dc;
        dc.height = 16;
        dc.width = 16;
        dc.channels = 4;
        dc.classes = 4;
        dc.train_per_class = 8;
        dc.val_per_class = 4;
        dc.seed = 11;
        lma::synth::make_dataset(dc, dir.str(), false);
        cached = dir.str();
        made = true;
    }
    return cached;
}

lma::RunConfig base_cfg(const std::string& out_dir) {
    lma::RunConfig c;
    c.dataset = dataset_dir();
    c.out_dir = out_dir;
    c.backbone.in_channels = 4;
    c.backbone.block_channels = {4, 8};
    c.backbone.classes = 4;
    c.r_init = 2;
    c.r_target = 1;
    c.epochs = 4;
    c.warmup_epochs = 1;
    c.decay_end_epoch = 2;
    c.batch_size = 8;
    c.learning_rate = 0.01;
    c.prune_interval = 1;
    c.seed = 7;
    return c;
}

lma::Dataset val_split() { return lma::load_fora1(dataset_dir() + "/val.fora1"); }

} // namespace

TEST_CASE("run config survives a json round trip") {
    TempDir t;
    lma::RunConfig cfg = base_cfg(t.str() + "/out");
    cfg.mode = lma::Mode::two_stream;
    cfg.optimizer = "sgd";
    cfg.checkpoint_every = 3;

    const std::string text = cfg.to_json();
    lma::RunConfig back = lma::RunConfig::from_json_text(text, "echo");
    CHECK(back.to_json() == text);
    CHECK(back.mode == lma::Mode::two_stream);
    CHECK(back.optimizer == "sgd");
    CHECK(back.checkpoint_every == 3);
    CHECK(back.backbone.block_channels == std::vector<int>{4, 8});
    CHECK(back.seed == 7);

    lma::RunConfig minimal =
        lma::RunConfig::from_json_text(R"({"dataset":"d","out_dir":"o"})", "minimal");
    CHECK(minimal.epochs == 50);
    CHECK(minimal.r_init == 9);
    CHECK(minimal.optimizer == "adam");
}

TEST_CASE("run config parsing enumerates every violation at once") {
    const std::string bad = R"({
        "dataset": "d", "out_dir": "o",
        "bogus": 1,
        "epochs": "fifty",
        "warmup_epochs": 30,
        "backbone": {"in_channels": 4, "mystery": true}
    })";
    try {
        lma::RunConfig::from_json_text(bad, "bad.json");
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bad.json") != std::string::npos);
        CHECK(msg.find("unknown field: bogus") != std::string::npos);
        CHECK(msg.find("epochs: expected an integer") != std::string::npos);
        CHECK(msg.find("warmup_epochs") != std::string::npos);
        CHECK(msg.find("unknown field: backbone.mystery") != std::string::npos);
    }

    CHECK_THROWS_AS(lma::RunConfig::from_json_text("{not json", "broken"), std::runtime_error);
    CHECK_THROWS_AS(lma::RunConfig::from_json_text("[1,2]", "arr"), std::runtime_error);
    CHECK_THROWS_AS(
        lma::RunConfig::from_json_text(R"({"dataset":"d","out_dir":"o","mode":"bogus"})", "m"),
        std::invalid_argument);
    CHECK_THROWS_AS(lma::RunConfig::from_file("/nonexistent/run.json"), std::runtime_error);
}

TEST_CASE("run config validation is one pass") {
    lma::RunConfig cfg;
    cfg.dataset = "";
    cfg.out_dir = "";
    cfg.epochs = 0;
    cfg.r_target = 0;
    cfg.learning_rate = 0.0;
    try {
        cfg.validate();
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dataset") != std::string::npos);
        CHECK(msg.find("out_dir") != std::string::npos);
        CHECK(msg.find("epochs") != std::string::npos);
        CHECK(msg.find("r_target") != std::string::npos);
        CHECK(msg.find("learning_rate") != std::string::npos);
    }

    lma::RunConfig bound = base_cfg("o");
    bound.dataset = "d";
    bound.r_init = 40;
    bound.r_target = 6;
    CHECK_THROWS_WITH_AS(bound.validate(),
                         doctest::Contains("exceeds rank bound"), std::invalid_argument);
    bound.mode = lma::Mode::two_stream;
    CHECK_NOTHROW(bound.validate());
}

TEST_CASE("train metrics csv is schema stamped and byte stable") {
    std::vector<lma::EpochMetrics> rows(2);
    rows[0] = {1, 0.5, 0.25, 0.75, 16, 16};
    rows[1] = {2, 0.4375, 0.5, 0.5, 12, 14};
    CHECK(lma::train_metrics_csv(rows) ==
          "# lma.train_metrics.v1\n"
          "epoch,train_loss,train_accuracy,val_accuracy,active_rank_total,budget\n"
          "1,0.5,0.25,0.75,16,16\n"
          "2,0.4375,0.5,0.5,12,14\n");
}

TEST_CASE("evaluate is deterministic and rejects mismatched shapes") {
    const lma::Dataset val = val_split();
    lma::Rng rng(3);
    lma::BackboneConfig bc;
    bc.in_channels = 4;
    bc.block_channels = {4, 8};
    bc.classes = 4;
    bc.r_init = 2;
    lma::Model model = lma::Model::build(bc, lma::Mode::lma_adaptive, rng);

    const lma::EvalResult a = lma::evaluate(model, val, 8);
    const lma::EvalResult b = lma::evaluate(model, val, 8);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.per_class_accuracy == b.per_class_accuracy);
    CHECK(a.per_class_count == std::vector<int>{4, 4, 4, 4});
    CHECK(a.accuracy >= 0.0);
    CHECK(a.accuracy <= 1.0);
    double weighted = 0.0;
    for (int c = 0; c < 4; ++c) weighted += a.per_class_accuracy[c] * a.per_class_count[c];
    CHECK(std::abs(weighted / 16.0 - a.accuracy) < 1e-12);

    const lma::EvalResult odd = lma::evaluate(model, val, 5);
    CHECK(odd.accuracy == a.accuracy);

    CHECK_THROWS_AS(lma::evaluate(model, val, 0), std::invalid_argument);
    lma::Rng rng2(3);
    lma::BackboneConfig wide = bc;
    wide.in_channels = 8;
    lma::Model mismatched = lma::Model::build(wide, lma::Mode::lma_adaptive, rng2);
    CHECK_THROWS_WITH_AS(lma::evaluate(mismatched, val, 8), doctest::Contains("channels"),
                         std::invalid_argument);
    lma::Rng rng3(3);
    lma::BackboneConfig heads = bc;
    heads.classes = 5;
    lma::Model wrong_head = lma::Model::build(heads, lma::Mode::lma_adaptive, rng3);
    CHECK_THROWS_WITH_AS(lma::evaluate(wrong_head, val, 8), doctest::Contains("classes"),
                         std::invalid_argument);
}

TEST_CASE("adaptive run lands on the target budget, freezes and compacts") {
    TempDir t;
    lma::RunConfig cfg = base_cfg(t.str() + "/out");
    lma::Trainer trainer(cfg);
    CHECK(trainer.steps_per_epoch() == 4);
    const lma::TrainResult res = trainer.run();

    CHECK(trainer.completed_epochs() == 4);
    REQUIRE(res.epochs.size() == 4);
    for (const auto& m : res.epochs) {
        CHECK(std::isfinite(m.train_loss));
        CHECK(m.train_accuracy >= 0.0);
        CHECK(m.val_accuracy <= 1.0);
    }
    CHECK(res.epochs[0].active_rank_total == 16);
    CHECK(res.epochs[0].budget == 16);
    CHECK(res.epochs[1].active_rank_total == 8);
    CHECK(res.epochs[1].budget == 8);
    CHECK(res.epochs[3].active_rank_total == 8);

    REQUIRE(trainer.allocator() != nullptr);
    CHECK(trainer.allocator()->frozen());
    auto reg = trainer.model().adaptor_registry();
    CHECK(reg.size() == 8);
    CHECK(lma::RankAllocator::active_total(reg) == 8);
    for (auto& [name, ad] : reg) {
        (void)name;
        CHECK(ad->r_max() == std::max(ad->active_count(), 1));
        ad->check_invariants();
    }
    REQUIRE(!res.prune_events.empty());
    CHECK(res.prune_events.back().step == 8);
    CHECK(res.prune_events.back().budget == 8);

    const std::string csv = slurp(res.metrics_path);
    CHECK(csv.rfind("# lma.train_metrics.v1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK(csv == lma::train_metrics_csv(res.epochs));

    // The final checkpoint rebuilds a model that evaluates identically.
    const lma::Checkpoint ck = lma::Checkpoint::load(res.checkpoint_path);
    lma::RunConfig echoed;
    lma::Model restored = lma::Trainer::restore_model(ck, &echoed);
    CHECK(echoed.seed == 7);
    CHECK(lma::RankAllocator::active_total(restored.adaptor_registry()) == 8);
    const double acc = lma::evaluate(restored, val_split(), cfg.batch_size).accuracy;
    CHECK(acc == res.epochs.back().val_accuracy);
    CHECK(lma::param_report(restored).mode == lma::Mode::lma_adaptive);

    // Resume demands the exact config echo.
    lma::RunConfig other = cfg;
    other.learning_rate = 0.02;
    CHECK_THROWS_WITH_AS(lma::Trainer(other, ck), doctest::Contains("does not match"),
                         std::invalid_argument);
}

TEST_CASE("fixed mode keeps every triplet active and never prunes") {
    TempDir t;
    lma::RunConfig cfg = base_cfg(t.str() + "/out");
    cfg.mode = lma::Mode::lma_fixed;
    lma::Trainer trainer(cfg);
    const lma::TrainResult res = trainer.run();

    CHECK(res.prune_events.empty());
    REQUIRE(trainer.allocator() != nullptr);
    CHECK(!trainer.allocator()->frozen());
    auto reg = trainer.model().adaptor_registry();
    CHECK(lma::RankAllocator::active_total(reg) == 16);
    for (auto& [name, ad] : reg) {
        (void)name;
        CHECK(ad->r_max() == 2);
        CHECK(ad->active_count() == 2);
    }
    for (const auto& m : res.epochs) {
        CHECK(m.active_rank_total == 16);
        CHECK(m.budget == 16);
    }
}

TEST_CASE("two stream and unimodal modes train end to end") {
    TempDir t;
    lma::RunConfig cfg = base_cfg(t.str() + "/ts");
    cfg.mode = lma::Mode::two_stream;
    cfg.epochs = 2;
    cfg.decay_end_epoch = 1;
    cfg.warmup_epochs = 0;
    lma::Trainer ts(cfg);
    const lma::TrainResult res = ts.run();
    CHECK(res.epochs.size() == 2);
    CHECK(res.prune_events.empty());
    CHECK(ts.allocator() == nullptr);
    CHECK(res.epochs[1].active_rank_total == 0);
    CHECK(lma::param_report(ts.model()).mode == lma::Mode::two_stream);
    CHECK(fs::exists(res.metrics_path));
    CHECK(fs::exists(res.checkpoint_path));

    lma::RunConfig ucfg = base_cfg(t.str() + "/uni");
    ucfg.mode = lma::Mode::unimodal;
    ucfg.optimizer = "sgd";
    ucfg.epochs = 2;
    ucfg.decay_end_epoch = 1;
    ucfg.warmup_epochs = 0;
    lma::Trainer uni(ucfg);
    const lma::TrainResult ures = uni.run();
    CHECK(ures.epochs.size() == 2);
    CHECK(std::isfinite(ures.epochs.back().train_loss));
    CHECK(lma::param_report(uni.model()).mode == lma::Mode::unimodal);

    const lma::Model& um = uni.model();
    const lma::EvalResult ue = lma::evaluate(um, val_split(), 8);
    CHECK(ue.accuracy == ures.epochs.back().val_accuracy);
}

TEST_CASE("identical configs reproduce artifacts byte for byte") {
    TempDir t;
    lma::RunConfig cfg = base_cfg(t.str() + "/out");
    cfg.epochs = 3;

    const lma::TrainResult r1 = lma::train(cfg);
    const std::string metrics1 = slurp(r1.metrics_path);
    const std::string ck1 = slurp(r1.checkpoint_path);

    const lma::TrainResult r2 = lma::train(cfg);
    CHECK(slurp(r2.metrics_path) == metrics1);
    CHECK(slurp(r2.checkpoint_path) == ck1);

    lma::RunConfig other = cfg;
    other.seed = 8;
    const lma::TrainResult r3 = lma::train(other);
    CHECK(slurp(r3.metrics_path) != metrics1);
}

TEST_CASE("resume reproduces the uninterrupted run bitwise") {
    TempDir t;
    lma::RunConfig cfg = base_cfg(t.str() + "/out");
    cfg.epochs = 6;
    cfg.warmup_epochs = 1;
    cfg.decay_end_epoch = 4;
    cfg.checkpoint_every = 2;

    const lma::TrainResult full = lma::train(cfg);
    const std::string metrics = slurp(full.metrics_path);
    const std::string final_ck = slurp(full.checkpoint_path);
    CHECK(fs::exists(t.path / "out" / "checkpoint_epoch2.ckpt"));
    CHECK(fs::exists(t.path / "out" / "checkpoint_epoch4.ckpt"));
    CHECK(!fs::exists(t.path / "out" / "checkpoint_epoch6.ckpt"));

    // Epoch 2 predates the freeze (decay ends at step 16, epoch 4): masks are
    // still full length and allocator state is live. Epoch 4 is post-freeze
    // with compacted adaptors. Both must replay to the same artifacts.
    for (const char* name : {"checkpoint_epoch2.ckpt", "checkpoint_epoch4.ckpt"}) {
        fs::remove(t.path / "out" / "metrics.csv");
        fs::remove(t.path / "out" / "checkpoint_final.ckpt");
        const lma::TrainResult resumed = lma::train(cfg, (t.path / "out" / name).string());
        CHECK(resumed.epochs.size() == 6);
        CHECK(slurp(resumed.metrics_path) == metrics);
        CHECK(slurp(resumed.checkpoint_path) == final_ck);
    }
}

TEST_CASE("trainer rejects missing datasets and mismatched geometry") {
    TempDir t;
    lma::RunConfig cfg = base_cfg(t.str() + "/out");
    cfg.dataset = t.str() + "/nope";
    CHECK_THROWS_AS(lma::Trainer{cfg}, std::runtime_error);

    lma::RunConfig narrow = base_cfg(t.str() + "/out2");
    narrow.backbone.in_channels = 8;
    CHECK_THROWS_WITH_AS(lma::Trainer{narrow}, doctest::Contains("in_channels"),
                         std::invalid_argument);

    lma::RunConfig heads = base_cfg(t.str() + "/out3");
    heads.backbone.classes = 5;
    CHECK_THROWS_WITH_AS(lma::Trainer{heads}, doctest::Contains("classes"),
                         std::invalid_argument);
}

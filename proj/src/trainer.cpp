// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lma {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += "; ";
        out += parts[i];
    }
    return out;
}

bool is_adaptor_param(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        const std::size_t n = std::string(suffix).size();
        return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
    };
    return ends_with(".P") || ends_with(".Lambda") || ends_with(".Q");
}

Tensor batch_modality(const Dataset& ds, std::size_t lo, std::size_t hi, bool infrared) {
    const int n = static_cast<int>(hi - lo);
    Tensor out({n, ds.channels, ds.height, ds.width});
    const std::size_t per = static_cast<std::size_t>(ds.channels) *
                            static_cast<std::size_t>(ds.height) *
                            static_cast<std::size_t>(ds.width);
    for (std::size_t i = lo; i < hi; ++i) {
        const Tensor& src = infrared ? ds.samples[i].infrared : ds.samples[i].visible;
        std::copy(src.vec().begin(), src.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>((i - lo) * per));
    }
    return out;
}

std::vector<int> batch_labels(const Dataset& ds, std::size_t lo, std::size_t hi) {
    std::vector<int> out;
    out.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) out.push_back(ds.samples[i].label);
    return out;
}

int argmax_row(const Tensor& logits, int row, int classes) {
    int best = 0;
    for (int c = 1; c < classes; ++c)
        if (logits[static_cast<std::size_t>(row * classes + c)] >
            logits[static_cast<std::size_t>(row * classes + best)])
            best = c;
    return best;
}

Tensor vec_tensor(const std::vector<double>& v) {
    return Tensor({static_cast<int>(v.size())}, v);
}

} // namespace

void RunConfig::validate() const {
    std::vector<std::string> errs;
    if (dataset.empty()) errs.push_back("dataset: must name the dataset directory");
    if (out_dir.empty()) errs.push_back("out_dir: must name the output directory");
    if (epochs < 1) errs.push_back("epochs: must be >= 1");
    if (warmup_epochs < 0) errs.push_back("warmup_epochs: must be >= 0");
    if (warmup_epochs >= decay_end_epoch)
        errs.push_back("warmup_epochs: must be < decay_end_epoch");
    if (decay_end_epoch >= epochs) errs.push_back("decay_end_epoch: must be < epochs");
    if (r_init < 1) errs.push_back("r_init: must be >= 1");
    if (r_target < 1) errs.push_back("r_target: must be >= 1");
    if (r_target > r_init) errs.push_back("r_target: must be <= r_init");
    if (batch_size < 1) errs.push_back("batch_size: must be >= 1");
    if (!(learning_rate > 0.0)) errs.push_back("learning_rate: must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) errs.push_back("beta1: must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) errs.push_back("beta2: must lie in (0, 1)");
    if (mode == Mode::lma_adaptive && prune_interval < 1)
        errs.push_back("prune_interval: must be >= 1 for lma_adaptive");
    if (optimizer != "sgd" && optimizer != "adam")
        errs.push_back("optimizer: must be \"sgd\" or \"adam\"");
    if (checkpoint_every < 0) errs.push_back("checkpoint_every: must be >= 0");

    BackboneConfig bc = backbone;
    bc.r_init = r_init;
    try {
        bc.validate();
    } catch (const std::invalid_argument& e) {
        errs.push_back(e.what());
    }

    if (mode == Mode::lma_adaptive || mode == Mode::lma_fixed) {
        int c1 = backbone.in_channels;
        int layer = 0;
        for (int c2 : backbone.block_channels) {
            for (int stage = 0; stage < 2; ++stage) {
                const int cin = stage == 0 ? c1 : c2;
                const int bound = std::min(cin, c2) * backbone.kernel - 1;
                if (cin > 0 && c2 > 0 && r_init > bound)
                    errs.push_back("r_init: " + std::to_string(r_init) +
                                   " exceeds rank bound " + std::to_string(bound) +
                                   " at layer " + std::to_string(layer));
                ++layer;
            }
            c1 = c2;
        }
    }

    if (!errs.empty()) throw std::invalid_argument("run config: " + join(errs));
}

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(origin + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error(origin + ": top-level value must be an object");

    RunConfig cfg;
    std::vector<std::string> errs;

    const std::set<std::string> known{
        "dataset",       "out_dir",          "mode",       "backbone",
        "r_init",        "r_target",         "epochs",     "warmup_epochs",
        "decay_end_epoch", "batch_size",     "learning_rate", "beta1",
        "beta2",         "prune_interval",   "optimizer",  "seed",
        "checkpoint_every"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key)) errs.push_back("unknown field: " + key);
    }

    auto get_string = [&](const char* key, std::string& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_string()) {
            errs.push_back(std::string(key) + ": expected a string");
            return;
        }
        out = j.at(key).get<std::string>();
    };
    auto get_int = [&](const json& src, const char* key, int& out, const std::string& prefix) {
        if (!src.contains(key)) return;
        if (!src.at(key).is_number_integer()) {
            errs.push_back(prefix + key + ": expected an integer");
            return;
        }
        out = src.at(key).get<int>();
    };
    auto get_double = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number()) {
            errs.push_back(std::string(key) + ": expected a number");
            return;
        }
        out = j.at(key).get<double>();
    };

    get_string("dataset", cfg.dataset);
    get_string("out_dir", cfg.out_dir);
    if (j.contains("mode")) {
        if (!j.at("mode").is_string()) {
            errs.push_back("mode: expected a string");
        } else {
            try {
                cfg.mode = mode_from_string(j.at("mode").get<std::string>());
            } catch (const std::invalid_argument& e) {
                errs.push_back(e.what());
            }
        }
    }
    if (j.contains("backbone")) {
        const auto& b = j.at("backbone");
        if (!b.is_object()) {
            errs.push_back("backbone: expected an object");
        } else {
            const std::set<std::string> bknown{"in_channels", "block_channels", "kernel",
                                               "classes", "modalities"};
            for (const auto& [key, value] : b.items()) {
                (void)value;
                if (!bknown.count(key)) errs.push_back("unknown field: backbone." + key);
            }
            get_int(b, "in_channels", cfg.backbone.in_channels, "backbone.");
            get_int(b, "kernel", cfg.backbone.kernel, "backbone.");
            get_int(b, "classes", cfg.backbone.classes, "backbone.");
            get_int(b, "modalities", cfg.backbone.modalities, "backbone.");
            if (b.contains("block_channels")) {
                const auto& bc = b.at("block_channels");
                bool ok = bc.is_array() && !bc.empty();
                if (ok)
                    for (const auto& v : bc) ok = ok && v.is_number_integer();
                if (!ok) {
                    errs.push_back("backbone.block_channels: expected an integer array");
                } else {
                    cfg.backbone.block_channels = bc.get<std::vector<int>>();
                }
            }
        }
    }
    get_int(j, "r_init", cfg.r_init, "");
    get_int(j, "r_target", cfg.r_target, "");
    get_int(j, "epochs", cfg.epochs, "");
    get_int(j, "warmup_epochs", cfg.warmup_epochs, "");
    get_int(j, "decay_end_epoch", cfg.decay_end_epoch, "");
    get_int(j, "batch_size", cfg.batch_size, "");
    get_int(j, "prune_interval", cfg.prune_interval, "");
    get_int(j, "checkpoint_every", cfg.checkpoint_every, "");
    get_double("learning_rate", cfg.learning_rate);
    get_double("beta1", cfg.beta1);
    get_double("beta2", cfg.beta2);
    get_string("optimizer", cfg.optimizer);
    if (j.contains("seed")) {
        const auto& s = j.at("seed");
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() &&
                                       s.get<std::int64_t>() < 0)) {
            errs.push_back("seed: expected a nonnegative integer");
        } else {
            cfg.seed = s.get<std::uint64_t>();
        }
    }

    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        const std::string prefix = "run config: ";
        if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
        errs.push_back(msg);
    }
    if (!errs.empty())
        throw std::invalid_argument(origin + ": " + join(errs));
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str(), path);
}

std::string RunConfig::to_json() const {
    json j;
    j["dataset"] = dataset;
    j["out_dir"] = out_dir;
    j["mode"] = mode_to_string(mode);
    j["backbone"] = {{"in_channels", backbone.in_channels},
                     {"block_channels", backbone.block_channels},
                     {"kernel", backbone.kernel},
                     {"classes", backbone.classes},
                     {"modalities", backbone.modalities}};
    j["r_init"] = r_init;
    j["r_target"] = r_target;
    j["epochs"] = epochs;
    j["warmup_epochs"] = warmup_epochs;
    j["decay_end_epoch"] = decay_end_epoch;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["prune_interval"] = prune_interval;
    j["optimizer"] = optimizer;
    j["seed"] = seed;
    j["checkpoint_every"] = checkpoint_every;
    return j.dump();
}

std::string train_metrics_csv(const std::vector<EpochMetrics>& rows) {
    std::string out = "# lma.train_metrics.v1\n";
    out += "epoch,train_loss,train_accuracy,val_accuracy,active_rank_total,budget\n";
    for (const auto& r : rows)
        out += std::to_string(r.epoch) + ',' + fmt(r.train_loss) + ',' + fmt(r.train_accuracy) +
               ',' + fmt(r.val_accuracy) + ',' + std::to_string(r.active_rank_total) + ',' +
               std::to_string(r.budget) + '\n';
    return out;
}

EvalResult evaluate(const Model& model, const Dataset& ds, int batch_size) {
    ds.validate();
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    if (ds.channels != model.config().in_channels)
        throw std::invalid_argument("evaluate: dataset channels do not match model input");
    if (ds.class_count != model.config().classes)
        throw std::invalid_argument("evaluate: dataset classes do not match model head");
    if (model.mode() != Mode::unimodal && model.config().modalities != 2)
        throw std::invalid_argument("evaluate: model wants " +
                                    std::to_string(model.config().modalities) +
                                    " modalities, dataset provides 2");

    const int classes = ds.class_count;
    std::vector<long> correct(static_cast<std::size_t>(classes), 0);
    std::vector<int> count(static_cast<std::size_t>(classes), 0);
    const std::size_t n = ds.samples.size();
    const auto stride = static_cast<std::size_t>(batch_size);
    for (std::size_t lo = 0; lo < n; lo += stride) {
        const std::size_t hi = std::min(n, lo + stride);
        autograd::Tape tape;
        auto xv = tape.leaf(batch_modality(ds, lo, hi, false), false);
        std::vector<autograd::VarPtr> xs{xv};
        if (model.mode() != Mode::unimodal)
            xs.push_back(tape.leaf(batch_modality(ds, lo, hi, true), false));
        const auto logits = model.forward_logits(tape, xs);
        for (std::size_t i = lo; i < hi; ++i) {
            const int label = ds.samples[i].label;
            const int pred = argmax_row(logits->value, static_cast<int>(i - lo), classes);
            count[static_cast<std::size_t>(label)] += 1;
            if (pred == label) correct[static_cast<std::size_t>(label)] += 1;
        }
    }

    EvalResult r;
    long total_correct = 0;
    for (int c = 0; c < classes; ++c) {
        const auto i = static_cast<std::size_t>(c);
        total_correct += correct[i];
        r.per_class_accuracy.push_back(
            count[i] ? static_cast<double>(correct[i]) / count[i] : 0.0);
        r.per_class_count.push_back(count[i]);
    }
    r.accuracy = n ? static_cast<double>(total_correct) / static_cast<double>(n) : 0.0;
    return r;
}

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)), rng_(0) {
    cfg_.validate();
    build_machinery();
}

Trainer::Trainer(RunConfig cfg, const Checkpoint& resume) : cfg_(std::move(cfg)), rng_(0) {
    cfg_.validate();
    build_machinery();
    restore_state(resume);
}

void Trainer::build_machinery() {
    namespace fs = std::filesystem;
    train_ = load_fora1((fs::path(cfg_.dataset) / "train.fora1").string());
    val_ = load_fora1((fs::path(cfg_.dataset) / "val.fora1").string());
    for (const Dataset* ds : {&train_, &val_}) {
        if (ds->channels != cfg_.backbone.in_channels)
            throw std::invalid_argument("dataset channels (" + std::to_string(ds->channels) +
                                        ") do not match backbone.in_channels (" +
                                        std::to_string(cfg_.backbone.in_channels) + ")");
        if (ds->class_count != cfg_.backbone.classes)
            throw std::invalid_argument("dataset classes (" + std::to_string(ds->class_count) +
                                        ") do not match backbone.classes (" +
                                        std::to_string(cfg_.backbone.classes) + ")");
    }
    if (cfg_.mode != Mode::unimodal && cfg_.backbone.modalities != 2)
        throw std::invalid_argument("dataset provides 2 modalities; backbone.modalities must be 2");

    steps_per_epoch_ = static_cast<long>((train_.samples.size() +
                                          static_cast<std::size_t>(cfg_.batch_size) - 1) /
                                         static_cast<std::size_t>(cfg_.batch_size));
    if (steps_per_epoch_ == 0) throw std::invalid_argument("training split is empty");

    rng_ = Rng(cfg_.seed);
    BackboneConfig bc = cfg_.backbone;
    bc.r_init = cfg_.r_init;
    model_ = Model::build(bc, cfg_.mode, rng_);
    registry_ = model_.adaptor_registry();

    OptimizerConfig oc;
    oc.adam = cfg_.optimizer == "adam";
    if (cfg_.mode == Mode::lma_adaptive || cfg_.mode == Mode::lma_fixed) {
        const long n = static_cast<long>(registry_.size());
        BudgetSchedule sched;
        sched.b0 = n * cfg_.r_init;
        sched.bT = cfg_.mode == Mode::lma_adaptive ? n * cfg_.r_target : n * cfg_.r_init;
        sched.warmup_end = static_cast<long>(cfg_.warmup_epochs) * steps_per_epoch_;
        sched.decay_end = static_cast<long>(cfg_.decay_end_epoch) * steps_per_epoch_;
        sched.total_steps = static_cast<long>(cfg_.epochs) * steps_per_epoch_;
        AllocatorConfig ac;
        ac.beta1 = cfg_.beta1;
        ac.beta2 = cfg_.beta2;
        ac.prune_interval = cfg_.mode == Mode::lma_adaptive ? cfg_.prune_interval : 0;
        ac.optimizer = oc;
        allocator_ = std::make_unique<RankAllocator>(sched, ac);
    }

    std::vector<autograd::VarPtr> opt_params;
    for (auto& [name, v] : model_.named_params())
        if (!is_adaptor_param(name)) opt_params.push_back(v);
    optimizer_ = std::make_unique<Optimizer>(oc, std::move(opt_params));
}

void Trainer::zero_grads() {
    for (auto& [name, v] : model_.named_params()) {
        (void)name;
        if (v->value.has_grad()) v->value.zero_grad();
    }
}

EpochMetrics Trainer::epoch_pass(std::vector<PruneEvent>& events) {
    const std::size_t n = train_.samples.size();
    const auto stride = static_cast<std::size_t>(cfg_.batch_size);
    double loss_sum = 0.0;
    long correct = 0;
    for (std::size_t lo = 0; lo < n; lo += stride) {
        const std::size_t hi = std::min(n, lo + stride);
        autograd::Tape tape;
        auto xv = tape.leaf(batch_modality(train_, lo, hi, false), false);
        std::vector<autograd::VarPtr> xs{xv};
        if (cfg_.mode != Mode::unimodal)
            xs.push_back(tape.leaf(batch_modality(train_, lo, hi, true), false));
        const auto logits = model_.forward_logits(tape, xs);
        const auto labels = batch_labels(train_, lo, hi);
        const auto loss = tape.cross_entropy(logits, labels);
        tape.backward(loss);

        ++it_;
        if (allocator_) {
            auto event = allocator_->step(registry_, cfg_.learning_rate, it_);
            if (event) events.push_back(std::move(*event));
        }
        optimizer_->step(cfg_.learning_rate);
        zero_grads();

        loss_sum += loss->value[0] * static_cast<double>(hi - lo);
        for (std::size_t i = lo; i < hi; ++i)
            if (argmax_row(logits->value, static_cast<int>(i - lo), train_.class_count) ==
                train_.samples[i].label)
                ++correct;
    }

    EpochMetrics m;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return m;
}

TrainResult Trainer::run() {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);

    TrainResult result;
    for (int e = epoch_; e < cfg_.epochs; ++e) {
        EpochMetrics m = epoch_pass(result.prune_events);
        m.epoch = e + 1;
        m.val_accuracy = evaluate(model_, val_, cfg_.batch_size).accuracy;
        if (allocator_) {
            m.active_rank_total = RankAllocator::active_total(registry_);
            m.budget = cfg_.mode == Mode::lma_adaptive ? allocator_->schedule().budget_at(it_)
                                                       : m.active_rank_total;
        }
        history_.push_back(m);
        epoch_ = e + 1;
        if (on_epoch_) on_epoch_(m);
        if (cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0 &&
            epoch_ < cfg_.epochs)
            make_checkpoint().save(
                (fs::path(cfg_.out_dir) / ("checkpoint_epoch" + std::to_string(epoch_) + ".ckpt"))
                    .string());
    }

    result.epochs = history_;
    result.metrics_path = (fs::path(cfg_.out_dir) / "metrics.csv").string();
    std::ofstream mf(result.metrics_path, std::ios::binary | std::ios::trunc);
    if (!mf) throw std::runtime_error(result.metrics_path + ": cannot open for writing");
    mf << train_metrics_csv(history_);
    if (!mf) throw std::runtime_error(result.metrics_path + ": write failed");
    mf.close();

    result.checkpoint_path = (fs::path(cfg_.out_dir) / "checkpoint_final.ckpt").string();
    make_checkpoint().save(result.checkpoint_path);
    return result;
}

Checkpoint Trainer::make_checkpoint() {
    Checkpoint ck;
    ck.put_string("format", "lma.checkpoint.v1");
    ck.put_string("config", cfg_.to_json());
    ck.put_scalar("trainer.epoch", static_cast<double>(epoch_));
    ck.put_scalar("trainer.step", static_cast<double>(it_));
    if (!history_.empty()) {
        Tensor h({static_cast<int>(history_.size()), 6});
        for (std::size_t i = 0; i < history_.size(); ++i) {
            h[i * 6 + 0] = history_[i].epoch;
            h[i * 6 + 1] = history_[i].train_loss;
            h[i * 6 + 2] = history_[i].train_accuracy;
            h[i * 6 + 3] = history_[i].val_accuracy;
            h[i * 6 + 4] = static_cast<double>(history_[i].active_rank_total);
            h[i * 6 + 5] = static_cast<double>(history_[i].budget);
        }
        ck.put_tensor("trainer.history", h);
    }
    ck.put_bytes("rng.state", rng_.serialize());
    ck.put_string("rng.algorithm", Rng::kAlgorithmTag);
    for (auto& [name, v] : model_.named_params()) ck.put_tensor("param/" + name, v->value);
    for (std::size_t i = 0; i < registry_.size(); ++i)
        ck.put_bytes("adaptor/" + std::to_string(i) + ".mask", registry_[i].second->mask());
    if (allocator_) {
        ck.put_scalar("allocator.frozen", allocator_->frozen() ? 1.0 : 0.0);
        ck.put_scalar("allocator.it", static_cast<double>(allocator_->state().it));
        ck.put_scalar("allocator.moment_steps", static_cast<double>(allocator_->moment_steps()));
        const auto& st = allocator_->state();
        for (std::size_t i = 0; i < st.per_adaptor.size(); ++i) {
            const auto& imp = st.per_adaptor[i];
            if (imp.p_mean.empty()) continue;
            const std::string base = "importance/" + std::to_string(i);
            ck.put_tensor(base + ".p_mean", vec_tensor(imp.p_mean));
            ck.put_tensor(base + ".p_unc", vec_tensor(imp.p_unc));
            ck.put_tensor(base + ".lam_mean", vec_tensor(imp.lam_mean));
            ck.put_tensor(base + ".lam_unc", vec_tensor(imp.lam_unc));
            ck.put_tensor(base + ".q_mean", vec_tensor(imp.q_mean));
            ck.put_tensor(base + ".q_unc", vec_tensor(imp.q_unc));
        }
        const auto& moments = allocator_->moments();
        for (std::size_t i = 0; i < moments.size(); ++i) {
            const auto& mom = moments[i];
            if (mom.m_p.empty()) continue;
            const std::string base = "moments/" + std::to_string(i);
            ck.put_tensor(base + ".m_p", vec_tensor(mom.m_p));
            ck.put_tensor(base + ".v_p", vec_tensor(mom.v_p));
            ck.put_tensor(base + ".m_lam", vec_tensor(mom.m_lam));
            ck.put_tensor(base + ".v_lam", vec_tensor(mom.v_lam));
            ck.put_tensor(base + ".m_q", vec_tensor(mom.m_q));
            ck.put_tensor(base + ".v_q", vec_tensor(mom.v_q));
        }
    }
    ck.put_scalar("optimizer.steps", static_cast<double>(optimizer_->moment_steps()));
    for (std::size_t i = 0; i < optimizer_->m().size(); ++i) {
        ck.put_tensor("optimizer/" + std::to_string(i) + ".m", vec_tensor(optimizer_->m()[i]));
        ck.put_tensor("optimizer/" + std::to_string(i) + ".v", vec_tensor(optimizer_->v()[i]));
    }
    return ck;
}

void Trainer::restore_state(const Checkpoint& ck) {
    if (!ck.has("format") || ck.string("format") != "lma.checkpoint.v1")
        throw std::runtime_error("checkpoint format not recognized");
    if (ck.string("config") != cfg_.to_json())
        throw std::invalid_argument("resume: checkpoint config does not match the run config");

    // Adaptor storage may have been compacted at freeze time; shrink the
    // freshly built adaptors to the stored rank before assigning values.
    for (std::size_t i = 0; i < registry_.size(); ++i) {
        auto* ad = registry_[i].second;
        const auto& mask = ck.bytes("adaptor/" + std::to_string(i) + ".mask");
        const int stored_r = static_cast<int>(mask.size());
        if (stored_r > ad->r_max())
            throw std::runtime_error("checkpoint adaptor " + std::to_string(i) +
                                     " rank exceeds the built rank");
        if (stored_r < ad->r_max()) {
            std::vector<std::uint8_t> shrink(static_cast<std::size_t>(ad->r_max()), 0);
            for (int k = 0; k < stored_r; ++k) shrink[static_cast<std::size_t>(k)] = 1;
            ad->set_mask(shrink);
            ad->compact();
        }
    }

    for (auto& [name, v] : model_.named_params()) {
        const Tensor& stored = ck.tensor("param/" + name);
        if (stored.shape() != v->value.shape())
            throw std::runtime_error("checkpoint parameter " + name + " has mismatched shape");
        v->value.vec() = stored.vec();
    }
    for (std::size_t i = 0; i < registry_.size(); ++i) {
        auto* ad = registry_[i].second;
        ad->set_mask(ck.bytes("adaptor/" + std::to_string(i) + ".mask"));
        ad->check_invariants();
    }

    epoch_ = static_cast<int>(ck.scalar("trainer.epoch"));
    it_ = static_cast<long>(ck.scalar("trainer.step"));
    history_.clear();
    if (ck.has("trainer.history")) {
        const Tensor& h = ck.tensor("trainer.history");
        const int rows = h.shape()[0];
        for (int i = 0; i < rows; ++i) {
            EpochMetrics m;
            m.epoch = static_cast<int>(h[static_cast<std::size_t>(i * 6 + 0)]);
            m.train_loss = h[static_cast<std::size_t>(i * 6 + 1)];
            m.train_accuracy = h[static_cast<std::size_t>(i * 6 + 2)];
            m.val_accuracy = h[static_cast<std::size_t>(i * 6 + 3)];
            m.active_rank_total = static_cast<long>(h[static_cast<std::size_t>(i * 6 + 4)]);
            m.budget = static_cast<long>(h[static_cast<std::size_t>(i * 6 + 5)]);
            history_.push_back(m);
        }
    }

    if (allocator_) {
        allocator_->set_frozen(ck.scalar("allocator.frozen") != 0.0);
        allocator_->state().it = static_cast<long>(ck.scalar("allocator.it"));
        allocator_->moment_steps() = static_cast<long>(ck.scalar("allocator.moment_steps"));
        auto& per = allocator_->state().per_adaptor;
        per.assign(registry_.size(), AdaptorImportance{});
        for (std::size_t i = 0; i < registry_.size(); ++i) {
            const std::string base = "importance/" + std::to_string(i);
            if (!ck.has(base + ".p_mean")) continue;
            per[i].p_mean = ck.tensor(base + ".p_mean").vec();
            per[i].p_unc = ck.tensor(base + ".p_unc").vec();
            per[i].lam_mean = ck.tensor(base + ".lam_mean").vec();
            per[i].lam_unc = ck.tensor(base + ".lam_unc").vec();
            per[i].q_mean = ck.tensor(base + ".q_mean").vec();
            per[i].q_unc = ck.tensor(base + ".q_unc").vec();
        }
        if (per.empty() || per[0].p_mean.empty()) per.clear();
        auto& moments = allocator_->moments();
        moments.clear();
        if (ck.has("moments/0.m_p")) {
            moments.resize(registry_.size());
            for (std::size_t i = 0; i < registry_.size(); ++i) {
                const std::string base = "moments/" + std::to_string(i);
                moments[i].m_p = ck.tensor(base + ".m_p").vec();
                moments[i].v_p = ck.tensor(base + ".v_p").vec();
                moments[i].m_lam = ck.tensor(base + ".m_lam").vec();
                moments[i].v_lam = ck.tensor(base + ".v_lam").vec();
                moments[i].m_q = ck.tensor(base + ".m_q").vec();
                moments[i].v_q = ck.tensor(base + ".v_q").vec();
            }
        }
    }

    optimizer_->moment_steps() = static_cast<long>(ck.scalar("optimizer.steps"));
    for (std::size_t i = 0; i < optimizer_->m().size(); ++i) {
        optimizer_->m()[i] = ck.tensor("optimizer/" + std::to_string(i) + ".m").vec();
        optimizer_->v()[i] = ck.tensor("optimizer/" + std::to_string(i) + ".v").vec();
    }

    rng_ = Rng::deserialize(ck.bytes("rng.state"), ck.string("rng.algorithm"));
}

Model Trainer::restore_model(const Checkpoint& ck, RunConfig* cfg_out) {
    if (!ck.has("format") || ck.string("format") != "lma.checkpoint.v1")
        throw std::runtime_error("checkpoint format not recognized");
    RunConfig cfg = RunConfig::from_json_text(ck.string("config"), "checkpoint config");
    Rng rng(cfg.seed);
    BackboneConfig bc = cfg.backbone;
    bc.r_init = cfg.r_init;
    Model model = Model::build(bc, cfg.mode, rng);

    auto registry = model.adaptor_registry();
    for (std::size_t i = 0; i < registry.size(); ++i) {
        auto* ad = registry[i].second;
        const auto& mask = ck.bytes("adaptor/" + std::to_string(i) + ".mask");
        const int stored_r = static_cast<int>(mask.size());
        if (stored_r > ad->r_max())
            throw std::runtime_error("checkpoint adaptor " + std::to_string(i) +
                                     " rank exceeds the built rank");
        if (stored_r < ad->r_max()) {
            std::vector<std::uint8_t> shrink(static_cast<std::size_t>(ad->r_max()), 0);
            for (int k = 0; k < stored_r; ++k) shrink[static_cast<std::size_t>(k)] = 1;
            ad->set_mask(shrink);
            ad->compact();
        }
    }
    for (auto& [name, v] : model.named_params()) {
        const Tensor& stored = ck.tensor("param/" + name);
        if (stored.shape() != v->value.shape())
            throw std::runtime_error("checkpoint parameter " + name + " has mismatched shape");
        v->value.vec() = stored.vec();
    }
    for (std::size_t i = 0; i < registry.size(); ++i) {
        registry[i].second->set_mask(ck.bytes("adaptor/" + std::to_string(i) + ".mask"));
        registry[i].second->check_invariants();
    }
    if (cfg_out) *cfg_out = cfg;
    return model;
}

TrainResult train(const RunConfig& cfg, const std::string& resume_checkpoint) {
    if (resume_checkpoint.empty()) {
        Trainer t(cfg);
        return t.run();
    }
    Trainer t(cfg, Checkpoint::load(resume_checkpoint));
    return t.run();
}

} // namespace lma

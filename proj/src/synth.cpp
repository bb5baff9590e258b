// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/synth.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace lma::synth {

namespace {

struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

PixelRect rect_of(const Region& r, int height, int width) {
    PixelRect px;
    px.x0 = static_cast<int>(std::lround(r.x0 * width));
    px.x1 = static_cast<int>(std::lround(r.x1 * width));
    px.y0 = static_cast<int>(std::lround(r.y0 * height));
    px.y1 = static_cast<int>(std::lround(r.y1 * height));
    px.x0 = std::max(px.x0, 0);
    px.y0 = std::max(px.y0, 0);
    px.x1 = std::min(px.x1, width);
    px.y1 = std::min(px.y1, height);
    if (px.x1 <= px.x0 || px.y1 <= px.y0)
        throw std::invalid_argument("component region maps to zero pixels");
    return px;
}

} // namespace

void Region::validate() const {
    if (!(x0 >= 0.0 && x0 < x1 && x1 <= 1.0 && y0 >= 0.0 && y0 < y1 && y1 <= 1.0))
        throw std::invalid_argument("region must satisfy 0 <= lo < hi <= 1 on both axes");
}

void InfoComponent::validate() const {
    region.validate();
    if (intensity < 0.0) throw std::invalid_argument("component intensity must be >= 0");
    if (!(stddev > 0.0)) throw std::invalid_argument("component stddev must be > 0");
}

void SceneSpec::validate() const {
    for (const auto& c : homogeneous) {
        c.validate();
        if (!c.shared)
            throw std::invalid_argument("homogeneous components must be marked shared");
    }
    for (const auto* list : {&unique_visible, &unique_infrared})
        for (const auto& c : *list) {
            c.validate();
            if (c.shared)
                throw std::invalid_argument("unique components must not be marked shared");
        }
    if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
}

double SceneSpec::fusion_residual() const {
    if (homogeneous.empty() || (unique_visible.empty() && unique_infrared.empty())) return 0.0;
    double hom = 0.0;
    for (const auto& c : homogeneous) hom += c.mean;
    hom /= static_cast<double>(homogeneous.size());
    double uni = 0.0;
    for (const auto& c : unique_visible) uni += c.mean;
    for (const auto& c : unique_infrared) uni += c.mean;
    uni /= static_cast<double>(unique_visible.size() + unique_infrared.size());
    return std::fabs(uni - hom);
}

void render_field(const InfoComponent& comp, int height, int width, Rng& rng, double* out) {
    comp.validate();
    const PixelRect px = rect_of(comp.region, height, width);
    if (comp.pattern == Pattern::high_freq_texture) {
        for (int y = px.y0; y < px.y1; ++y)
            for (int x = px.x0; x < px.x1; ++x)
                out[y * width + x] = rng.normal(comp.mean, comp.stddev);
        return;
    }
    for (int cy = px.y0; cy < px.y1; cy += kBlobCell)
        for (int cx = px.x0; cx < px.x1; cx += kBlobCell) {
            const double v = rng.normal(comp.mean, comp.stddev);
            const int ye = std::min(cy + kBlobCell, px.y1);
            const int xe = std::min(cx + kBlobCell, px.x1);
            for (int y = cy; y < ye; ++y)
                for (int x = cx; x < xe; ++x) out[y * width + x] = v;
        }
}

Sample render_pair(const SceneSpec& spec, int height, int width, int channels, Rng& rng) {
    spec.validate();
    if (height < 1 || width < 1 || channels < 1)
        throw std::invalid_argument("render_pair: canvas must be positive");
    Sample sample;
    sample.label = spec.label;
    sample.visible = Tensor({channels, height, width});
    sample.infrared = Tensor({channels, height, width});
    const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    std::vector<double> field(plane, 0.0);

    auto add_component = [&](const InfoComponent& comp, Tensor& first, Tensor* second) {
        const PixelRect px = rect_of(comp.region, height, width);
        for (int ch = 0; ch < channels; ++ch) {
            render_field(comp, height, width, rng, field.data());
            double* a = first.data() + static_cast<std::size_t>(ch) * plane;
            double* b = second ? second->data() + static_cast<std::size_t>(ch) * plane : nullptr;
            for (int y = px.y0; y < px.y1; ++y)
                for (int x = px.x0; x < px.x1; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y * width + x);
                    const double v = comp.intensity * field[i];
                    a[i] += v;
                    if (b) b[i] += v;
                }
        }
    };

    for (const auto& comp : spec.homogeneous) add_component(comp, sample.visible, &sample.infrared);
    for (const auto& comp : spec.unique_visible) add_component(comp, sample.visible, nullptr);
    for (const auto& comp : spec.unique_infrared) add_component(comp, sample.infrared, nullptr);
    if (spec.noise_std > 0.0) {
        for (std::size_t i = 0; i < sample.visible.numel(); ++i)
            sample.visible[i] += rng.normal(0.0, spec.noise_std);
        for (std::size_t i = 0; i < sample.infrared.numel(); ++i)
            sample.infrared[i] += rng.normal(0.0, spec.noise_std);
    }
    return sample;
}

void DatasetConfig::validate() const {
    if (height < 4 || width < 4) throw std::invalid_argument("dataset: canvas must be >= 4x4");
    if (channels < 1) throw std::invalid_argument("dataset: channels must be >= 1");
    if (classes < 2) throw std::invalid_argument("dataset: classes must be >= 2");
    if (train_per_class < 1 || val_per_class < 0)
        throw std::invalid_argument("dataset: split sizes invalid");
    if (hf_fraction < 0.0 || hf_fraction > 1.0)
        throw std::invalid_argument("dataset: hf_fraction must lie in [0, 1]");
    if (unique_intensity < 0.0 || shared_intensity < 0.0)
        throw std::invalid_argument("dataset: intensities must be >= 0");
    if (unique_per_modality < 0 || unique_per_modality > 8)
        throw std::invalid_argument("dataset: unique_per_modality must lie in [0, 8]");
    if (noise_std < 0.0) throw std::invalid_argument("dataset: noise_std must be >= 0");
}

SceneSpec class_spec(const DatasetConfig& cfg, int label) {
    cfg.validate();
    if (label < 0 || label >= cfg.classes)
        throw std::invalid_argument("class_spec: label out of range");
    SceneSpec spec;
    spec.label = label;
    spec.noise_std = cfg.noise_std;
    const double mu_f = 0.5 + 0.25 * static_cast<double>(label);
    const double qx = static_cast<double>(label % 2);
    const double qy = static_cast<double>((label / 2) % 2);

    InfoComponent a;
    a.intensity = cfg.shared_intensity;
    a.mean = mu_f + 0.25;
    a.stddev = 0.25;
    a.pattern = Pattern::blob;
    a.region = {0.0625 + 0.5 * qx, 0.0625 + 0.5 * qy, 0.4375 + 0.5 * qx, 0.4375 + 0.5 * qy};
    a.shared = true;
    spec.homogeneous.push_back(a);

    InfoComponent b = a;
    b.mean = mu_f - 0.25;
    const double mx = 1.0 - qx;
    b.region = {0.0625 + 0.5 * mx, 0.0625 + 0.5 * qy, 0.4375 + 0.5 * mx, 0.4375 + 0.5 * qy};
    spec.homogeneous.push_back(b);

    const int n = cfg.unique_per_modality;
    const int n_hf = static_cast<int>(std::lround(cfg.hf_fraction * n));
    for (int i = 0; i < n; ++i) {
        const double col = static_cast<double>((label + i) % 4);
        const double row = static_cast<double>((i / 4) % 2);
        const bool hf = i < n_hf;
        const double delta = 0.125 * static_cast<double>(i + 1);

        InfoComponent vis;
        vis.intensity = cfg.unique_intensity;
        vis.mean = mu_f + delta;
        vis.stddev = hf ? 0.5 : 0.25;
        vis.pattern = hf ? Pattern::high_freq_texture : Pattern::blob;
        vis.region = {0.03125 + 0.25 * col, 0.03125 + 0.25 * row, 0.21875 + 0.25 * col,
                      0.21875 + 0.25 * row};
        vis.shared = false;
        spec.unique_visible.push_back(vis);

        InfoComponent inf = vis;
        inf.mean = mu_f - delta;
        inf.region.y0 += 0.5;
        inf.region.y1 += 0.5;
        spec.unique_infrared.push_back(inf);
    }
    if (spec.fusion_residual() > 1e-12)
        throw std::logic_error("class_spec: fusion-center residual exceeds 1e-12");
    return spec;
}

Dataset render_split(const DatasetConfig& cfg, int count, std::uint64_t stream_base) {
    cfg.validate();
    std::vector<SceneSpec> specs;
    specs.reserve(static_cast<std::size_t>(cfg.classes));
    for (int c = 0; c < cfg.classes; ++c) specs.push_back(class_spec(cfg, c));
    Dataset ds;
    ds.height = cfg.height;
    ds.width = cfg.width;
    ds.channels = cfg.channels;
    ds.class_count = cfg.classes;
    ds.samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::derive(cfg.seed, stream_base + static_cast<std::uint64_t>(i));
        const int label = i % cfg.classes;
        ds.samples.push_back(
            render_pair(specs[static_cast<std::size_t>(label)], cfg.height, cfg.width,
                        cfg.channels, rng));
    }
    return ds;
}

DatasetFiles make_dataset(const DatasetConfig& cfg, const std::string& out_dir, bool overwrite) {
    cfg.validate();
    namespace fs = std::filesystem;
    DatasetFiles files;
    files.train_path = (fs::path(out_dir) / "train.fora1").string();
    files.val_path = (fs::path(out_dir) / "val.fora1").string();
    if (!overwrite)
        for (const auto& p : {files.train_path, files.val_path})
            if (fs::exists(p))
                throw std::runtime_error(p + " already exists; pass overwrite to replace it");
    fs::create_directories(out_dir);
    const Dataset train = render_split(cfg, cfg.classes * cfg.train_per_class, 0);
    save_fora1(files.train_path, train);
    const Dataset val =
        render_split(cfg, cfg.classes * cfg.val_per_class, std::uint64_t(1) << 32);
    save_fora1(files.val_path, val);
    return files;
}

} // namespace lma::synth

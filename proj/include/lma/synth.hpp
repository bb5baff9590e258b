// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic paired-modality scenes built from additive Gaussian information
// components. Homogeneous (shared) components render one pixel field reused
// by both modalities, so paired raw images correlate strongly; modality-
// unique components and independent background noise pull the correlation
// down. Blobs draw one value per coarse cell (low spatial frequency),
// textures draw every pixel (white, high frequency); either way each pixel's
// marginal law is exactly N(mean, stddev^2) scaled by the intensity.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lma/dataset.hpp"
#include "lma/rng.hpp"

namespace lma::synth {

enum class Pattern { blob, high_freq_texture };

/// Axis-aligned placement in the unit square.
struct Region {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    void validate() const;
};

struct InfoComponent {
    double intensity = 1.0;
    double mean = 0.0;
    double stddev = 1.0;
    Pattern pattern = Pattern::blob;
    Region region;
    /// Shared components are rendered once and added to both modalities.
    bool shared = false;

    void validate() const;
};

struct SceneSpec {
    int label = 0;
    std::vector<InfoComponent> homogeneous;
    std::vector<InfoComponent> unique_visible;
    std::vector<InfoComponent> unique_infrared;
    double noise_std = 0.0;

    void validate() const;
    /// |mean of all unique-component means - mean of homogeneous means|,
    /// the fusion-center constraint residual. Zero when no unique
    /// components exist.
    double fusion_residual() const;
};

/// Blob coarse-cell edge in pixels.
inline constexpr int kBlobCell = 4;

/// Fills the component's unit-intensity field into out[h*w] (row-major,
/// zeros outside the region). Draw order: blob cells row-major, one draw per
/// cell; texture pixels row-major, one draw per pixel. Throws if the region
/// maps to zero pixels.
void render_field(const InfoComponent& comp, int height, int width, Rng& rng, double* out);

/// Renders one paired sample of [channels, height, width] rasters. Draw
/// order: per homogeneous component, one field per channel; per visible then
/// infrared unique component likewise; then visible background noise, then
/// infrared background noise.
Sample render_pair(const SceneSpec& spec, int height, int width, int channels, Rng& rng);

struct DatasetConfig {
    int height = 16;
    int width = 16;
    int channels = 4;
    int classes = 4;
    int train_per_class = 64;
    int val_per_class = 16;
    std::uint64_t seed = 1;
    /// Fraction of unique components rendered as high-frequency texture
    /// rather than low-frequency blobs.
    double hf_fraction = 0.5;
    /// Intensity of modality-unique components, the Eq. 1 heterogeneity knob.
    double unique_intensity = 1.0;
    double shared_intensity = 1.0;
    int unique_per_modality = 2;
    double noise_std = 0.05;

    void validate() const;
};

/// Deterministic class geometry: a class-positioned pair of shared blobs
/// plus unique components per modality whose means are placed symmetrically
/// around the shared center, so the fusion residual is exactly zero.
SceneSpec class_spec(const DatasetConfig& cfg, int label);

/// Renders `count` samples with labels cycling through the classes. Sample i
/// draws from the independent stream (seed, stream_base + i).
Dataset render_split(const DatasetConfig& cfg, int count, std::uint64_t stream_base);

struct DatasetFiles {
    std::string train_path;
    std::string val_path;
};

/// Writes train.fora1 and val.fora1 under out_dir. Refuses to replace
/// existing files unless overwrite is set.
DatasetFiles make_dataset(const DatasetConfig& cfg, const std::string& out_dir, bool overwrite);

} // namespace lma::synth

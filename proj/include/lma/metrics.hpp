// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Measurement apparatus: Pearson |rho| bias histograms between modality
// features, heterogeneity-by-depth profiles, per-block rank reports and
// parameter-increment accounting, plus plot-ready CSV emitters.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "lma/backbone.hpp"
#include "lma/dataset.hpp"

namespace lma {

/// Which feature pair a bias measurement compares across the two modalities.
enum class FeatureSource { shared_path, adaptor_path, two_stream, raw_input };

FeatureSource feature_source_from_string(const std::string& s);
std::string feature_source_to_string(FeatureSource s);

struct PearsonAbs {
    double value = 0.0;
    /// False when either input has zero variance; value is meaningless then.
    bool defined = false;
};

/// Absolute Pearson product-moment correlation of two equal-length vectors.
/// Throws invalid_argument on length mismatch or n < 2.
PearsonAbs pearson_abs(const double* a, const double* b, std::size_t n);
PearsonAbs pearson_abs(const std::vector<double>& a, const std::vector<double>& b);

inline constexpr int kBiasBins = 10;
inline constexpr int kMinValidPairs = 30;

/// Closed-open bins [0, 0.1) ... [0.9, 1.0]; |rho| = 1 lands in the top bin.
/// Throws invalid_argument outside [0, 1].
int bias_bin(double abs_rho);

struct BiasHistogram {
    std::string tap;
    FeatureSource source = FeatureSource::raw_input;
    /// Proportion of valid channel-pairs per bin; sums to 1.
    std::array<double, kBiasBins> proportion{};
    int valid_pairs = 0;
    int excluded = 0;
    double mean_abs_rho = 0.0;
    /// Throws logic_error if proportions do not sum to 1 within 1e-9.
    void validate() const;
};

/// Streams per-channel-pair correlations into bin counts. Undefined pairs
/// (zero variance) are excluded from the bins but counted.
class BiasAccumulator {
public:
    void add(const PearsonAbs& r);
    int valid() const { return valid_; }
    int excluded() const { return excluded_; }
    /// Throws runtime_error when fewer than kMinValidPairs pairs were valid.
    BiasHistogram finalize(std::string tap, FeatureSource source) const;

private:
    std::array<int, kBiasBins> counts_{};
    double sum_abs_rho_ = 0.0;
    int valid_ = 0;
    int excluded_ = 0;
};

/// Per-sample, per-channel |rho| between the two modalities' feature maps at
/// one tap, aggregated over the dataset. shared_path and adaptor_path need an
/// lma-mode model, two_stream a two-stream model; raw_input compares the
/// input rasters (tap must be "input"). Throws invalid_argument on
/// model/source/dataset mismatch, runtime_error when too few pairs are valid.
BiasHistogram bias_histogram(const Model& model, const Dataset& ds, const std::string& tap,
                             FeatureSource source);

/// One histogram per tap (a single "input" pseudo-tap for raw_input).
std::vector<BiasHistogram> bias_histograms(const Model& model, const Dataset& ds,
                                           FeatureSource source);

struct DepthPoint {
    std::string tap;
    /// 1 - mean |rho| over valid channel-pairs.
    double heterogeneity = 0.0;
    int valid_pairs = 0;
    int excluded = 0;
};

/// Heterogeneity proxy per tap, shallow to deep. Uses the two-stream features
/// for two-stream models and the shared path for lma modes; rejects unimodal.
std::vector<DepthPoint> depth_profile(const Model& model, const Dataset& ds);

struct RankReport {
    struct BlockRank {
        int block = 0;
        double average_active_rank = 0.0;
        int adaptor_count = 0;
    };
    /// Data-flow order, one entry per block.
    std::vector<BlockRank> blocks;
    double overall_average = 0.0;
    int r_init = 0;
    /// Caller-supplied schedule target; negative when not applicable.
    double target_average = -1.0;
    /// Throws logic_error if any average falls outside [0, r_init].
    void validate() const;
};

RankReport rank_report(const Model& model, double target_average = -1.0);

struct ParamReport {
    Mode mode = Mode::unimodal;
    long total = 0;
    long unimodal = 0;
    long increment = 0;
    double increment_percent = 0.0;
};

/// Parameter accounting from actual storage, cross-checked against the
/// closed-form counts; throws logic_error if the two disagree.
ParamReport param_report(const Model& model);

/// CSV emitters. First line is a versioned schema comment, then a header
/// row, then data rows; no timestamps, byte-stable for fixed inputs.
std::string bias_histogram_csv(const std::vector<BiasHistogram>& histograms);
std::string depth_profile_csv(const std::vector<DepthPoint>& profile);
std::string rank_report_csv(const RankReport& report);
std::string param_report_csv(const ParamReport& report);

} // namespace lma

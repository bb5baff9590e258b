// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Paired-modality image container and its on-disk FORA1 format: the header
// (magic "FORA1", then H, W, C, sample count, class count as little-endian
// 32-bit ints) followed by per-sample records of the two modality rasters
// as little-endian 32-bit floats plus a 32-bit label.
#pragma once

#include <string>
#include <vector>

#include "lma/tensor.hpp"

namespace lma {

struct Sample {
    Tensor visible;
    Tensor infrared;
    int label = 0;
};

struct Dataset {
    int height = 0;
    int width = 0;
    int channels = 0;
    int class_count = 0;
    std::vector<Sample> samples;

    /// Throws unless every sample matches the header geometry and labels lie
    /// in [0, class_count).
    void validate() const;
};

/// Writes the dataset; values are quantized to 32-bit floats.
void save_fora1(const std::string& path, const Dataset& dataset);

/// Reads a FORA1 container. Malformed input is reported with the byte
/// offset where parsing failed.
Dataset load_fora1(const std::string& path);

} // namespace lma

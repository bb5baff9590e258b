// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Named-entry checkpoint container. Entries are f64 tensors (rank + extents +
// payload) or opaque byte arrays (masks, RNG state, config echo), serialized
// little-endian for bit-exact resume.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lma/tensor.hpp"

namespace lma {

struct CheckpointEntry {
    enum class Kind : std::uint8_t { tensor = 0, bytes = 1 };
    std::string name;
    Kind kind = Kind::tensor;
    Tensor tensor;
    std::vector<std::uint8_t> bytes;
};

/// Ordered collection of uniquely named entries. Serialization is
/// deterministic: same entries in the same order give the same bytes.
class Checkpoint {
public:
    /// Throw invalid_argument on duplicate or empty names.
    void put_tensor(const std::string& name, const Tensor& value);
    void put_bytes(const std::string& name, std::vector<std::uint8_t> value);
    void put_scalar(const std::string& name, double value);
    void put_string(const std::string& name, const std::string& value);

    bool has(const std::string& name) const;
    /// Throw out_of_range when missing, invalid_argument on kind mismatch.
    const Tensor& tensor(const std::string& name) const;
    const std::vector<std::uint8_t>& bytes(const std::string& name) const;
    double scalar(const std::string& name) const;
    std::string string(const std::string& name) const;

    const std::vector<CheckpointEntry>& entries() const { return entries_; }

    std::vector<std::uint8_t> serialize() const;
    /// origin names the source in errors (a path, usually). Malformed input
    /// is reported with byte offsets.
    static Checkpoint deserialize(const std::vector<std::uint8_t>& data,
                                  const std::string& origin);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

private:
    const CheckpointEntry& find(const std::string& name) const;

    std::vector<CheckpointEntry> entries_;
};

} // namespace lma

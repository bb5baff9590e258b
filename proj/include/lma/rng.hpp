// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace lma {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256++ generator. The standard library distributions are
/// implementation-defined, so all randomness in this project goes through
/// this class to keep datasets and training runs reproducible byte for byte.
class Rng {
public:
    static constexpr const char* kAlgorithmTag = "xoshiro256++/v1";

    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    /// Derives an independent stream, e.g. one per dataset sample.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t sm = seed;
        std::uint64_t mixed = splitmix64(sm) ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
        return Rng(mixed);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    int below_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    /// Standard normal via Box-Muller (cosine branch only; stateless apart
    /// from the generator itself, which keeps serialization trivial).
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates; std::shuffle is implementation-defined.
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::uint8_t> serialize() const {
        std::vector<std::uint8_t> out(sizeof(s_));
        std::memcpy(out.data(), s_.data(), sizeof(s_));
        return out;
    }

    static Rng deserialize(const std::vector<std::uint8_t>& bytes, const std::string& tag) {
        if (tag != kAlgorithmTag)
            throw std::runtime_error("Rng: unknown algorithm tag '" + tag + "'");
        if (bytes.size() != sizeof(std::array<std::uint64_t, 4>))
            throw std::runtime_error("Rng: bad state size");
        Rng r;
        std::memcpy(r.s_.data(), bytes.data(), bytes.size());
        return r;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> s_{};
};

} // namespace lma

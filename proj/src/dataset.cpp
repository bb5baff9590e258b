// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/dataset.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lma {

namespace {

constexpr char kMagic[5] = {'F', 'O', 'R', 'A', '1'};

void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
    const auto u = static_cast<std::uint32_t>(v);
    out.push_back(static_cast<std::uint8_t>(u & 0xff));
    out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((u >> 24) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, sizeof(u));
    put_i32(out, static_cast<std::int32_t>(u));
}

struct Cursor {
    const std::vector<std::uint8_t>& bytes;
    const std::string& path;
    std::size_t pos = 0;

    void need(std::size_t n, const std::string& what) const {
        if (pos + n > bytes.size())
            throw std::runtime_error(path + ": truncated while reading " + what + " at offset " +
                                     std::to_string(pos));
    }

    std::int32_t i32(const std::string& what) {
        need(4, what);
        std::uint32_t u = 0;
        for (int i = 3; i >= 0; --i) u = (u << 8) | bytes[pos + static_cast<std::size_t>(i)];
        pos += 4;
        return static_cast<std::int32_t>(u);
    }

    float f32(const std::string& what) {
        const auto u = static_cast<std::uint32_t>(i32(what));
        float v;
        std::memcpy(&v, &u, sizeof(v));
        return v;
    }
};

} // namespace

void Dataset::validate() const {
    if (height < 1 || width < 1 || channels < 1 || class_count < 1)
        throw std::invalid_argument("dataset: header fields must be positive");
    const Shape want{channels, height, width};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.visible.shape() != want || s.infrared.shape() != want)
            throw std::invalid_argument("dataset: sample " + std::to_string(i) +
                                        " does not match header geometry");
        if (s.label < 0 || s.label >= class_count)
            throw std::invalid_argument("dataset: sample " + std::to_string(i) +
                                        " label out of range");
    }
}

void save_fora1(const std::string& path, const Dataset& dataset) {
    dataset.validate();
    std::vector<std::uint8_t> out;
    const std::size_t raster = dataset.samples.empty()
                                   ? 0
                                   : dataset.samples[0].visible.numel();
    out.reserve(25 + dataset.samples.size() * (raster * 8 + 4));
    out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
    put_i32(out, dataset.height);
    put_i32(out, dataset.width);
    put_i32(out, dataset.channels);
    put_i32(out, static_cast<std::int32_t>(dataset.samples.size()));
    put_i32(out, dataset.class_count);
    for (const auto& s : dataset.samples) {
        for (std::size_t i = 0; i < s.visible.numel(); ++i)
            put_f32(out, static_cast<float>(s.visible[i]));
        for (std::size_t i = 0; i < s.infrared.numel(); ++i)
            put_f32(out, static_cast<float>(s.infrared[i]));
        put_i32(out, s.label);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error(path + ": write failed");
}

Dataset load_fora1(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    Cursor cur{bytes, path};

    cur.need(sizeof(kMagic), "magic");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path + ": bad magic at offset 0, not a FORA1 container");
    cur.pos = sizeof(kMagic);

    Dataset ds;
    ds.height = cur.i32("height");
    ds.width = cur.i32("width");
    ds.channels = cur.i32("channels");
    const std::int32_t count = cur.i32("sample count");
    ds.class_count = cur.i32("class count");
    if (ds.height < 1 || ds.width < 1 || ds.channels < 1 || ds.class_count < 1 || count < 0)
        throw std::runtime_error(path + ": invalid header field at offset " +
                                 std::to_string(sizeof(kMagic)));

    const std::size_t raster =
        static_cast<std::size_t>(ds.channels) * static_cast<std::size_t>(ds.height) *
        static_cast<std::size_t>(ds.width);
    const Shape shape{ds.channels, ds.height, ds.width};
    ds.samples.reserve(static_cast<std::size_t>(count));
    for (std::int32_t s = 0; s < count; ++s) {
        Sample sample;
        const std::string tag = "sample " + std::to_string(s);
        Tensor vis(shape), inf(shape);
        for (std::size_t i = 0; i < raster; ++i) vis[i] = static_cast<double>(cur.f32(tag));
        for (std::size_t i = 0; i < raster; ++i) inf[i] = static_cast<double>(cur.f32(tag));
        sample.visible = std::move(vis);
        sample.infrared = std::move(inf);
        sample.label = cur.i32(tag + " label");
        if (sample.label < 0 || sample.label >= ds.class_count)
            throw std::runtime_error(path + ": label out of range in " + tag + " at offset " +
                                     std::to_string(cur.pos - 4));
        ds.samples.push_back(std::move(sample));
    }
    if (cur.pos != bytes.size())
        throw std::runtime_error(path + ": " + std::to_string(bytes.size() - cur.pos) +
                                 " trailing bytes at offset " + std::to_string(cur.pos));
    return ds;
}

} // namespace lma

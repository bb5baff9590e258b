// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lma {

namespace {

constexpr char kMagic[] = {'L', 'M', 'A', 'C', '1'};

void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct Cursor {
    const std::vector<std::uint8_t>& data;
    const std::string& origin;
    std::size_t pos = 0;

    void need(std::size_t n, const std::string& what) {
        if (pos + n > data.size())
            throw std::runtime_error(origin + ": truncated while reading " + what +
                                     " at offset " + std::to_string(pos));
    }

    std::int32_t i32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return static_cast<std::int32_t>(v);
    }

    double f64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 8;
        double d = 0.0;
        std::memcpy(&d, &v, sizeof(d));
        return d;
    }
};

} // namespace

void Checkpoint::put_tensor(const std::string& name, const Tensor& value) {
    if (name.empty()) throw std::invalid_argument("checkpoint entry name must not be empty");
    if (has(name)) throw std::invalid_argument("duplicate checkpoint entry: " + name);
    CheckpointEntry e;
    e.name = name;
    e.kind = CheckpointEntry::Kind::tensor;
    e.tensor = value;
    entries_.push_back(std::move(e));
}

void Checkpoint::put_bytes(const std::string& name, std::vector<std::uint8_t> value) {
    if (name.empty()) throw std::invalid_argument("checkpoint entry name must not be empty");
    if (has(name)) throw std::invalid_argument("duplicate checkpoint entry: " + name);
    CheckpointEntry e;
    e.name = name;
    e.kind = CheckpointEntry::Kind::bytes;
    e.bytes = std::move(value);
    entries_.push_back(std::move(e));
}

void Checkpoint::put_scalar(const std::string& name, double value) {
    put_tensor(name, Tensor::scalar(value));
}

void Checkpoint::put_string(const std::string& name, const std::string& value) {
    put_bytes(name, std::vector<std::uint8_t>(value.begin(), value.end()));
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const CheckpointEntry& Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw std::out_of_range("checkpoint entry not found: " + name);
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    const auto& e = find(name);
    if (e.kind != CheckpointEntry::Kind::tensor)
        throw std::invalid_argument("checkpoint entry " + name + " is not a tensor");
    return e.tensor;
}

const std::vector<std::uint8_t>& Checkpoint::bytes(const std::string& name) const {
    const auto& e = find(name);
    if (e.kind != CheckpointEntry::Kind::bytes)
        throw std::invalid_argument("checkpoint entry " + name + " is not a byte array");
    return e.bytes;
}

double Checkpoint::scalar(const std::string& name) const {
    const Tensor& t = tensor(name);
    if (t.numel() != 1)
        throw std::invalid_argument("checkpoint entry " + name + " is not a scalar");
    return t[0];
}

std::string Checkpoint::string(const std::string& name) const {
    const auto& b = bytes(name);
    return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
    std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
    put_i32(out, static_cast<std::int32_t>(entries_.size()));
    for (const auto& e : entries_) {
        put_i32(out, static_cast<std::int32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<std::uint8_t>(e.kind));
        if (e.kind == CheckpointEntry::Kind::tensor) {
            const auto& shape = e.tensor.shape();
            put_i32(out, static_cast<std::int32_t>(shape.size()));
            for (int extent : shape) put_i32(out, extent);
            for (std::size_t i = 0; i < e.tensor.numel(); ++i) put_f64(out, e.tensor[i]);
        } else {
            put_i32(out, static_cast<std::int32_t>(e.bytes.size()));
            out.insert(out.end(), e.bytes.begin(), e.bytes.end());
        }
    }
    return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& data,
                                   const std::string& origin) {
    Cursor cur{data, origin};
    cur.need(sizeof(kMagic), "magic");
    if (std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(origin + ": bad magic at offset 0, not a checkpoint");
    cur.pos = sizeof(kMagic);
    const std::int32_t count = cur.i32("entry count");
    if (count < 0)
        throw std::runtime_error(origin + ": negative entry count at offset 5");

    Checkpoint ck;
    for (std::int32_t n = 0; n < count; ++n) {
        const std::string tag = "entry " + std::to_string(n);
        const std::int32_t name_len = cur.i32(tag + " name length");
        if (name_len <= 0)
            throw std::runtime_error(origin + ": invalid name length at offset " +
                                     std::to_string(cur.pos - 4));
        cur.need(static_cast<std::size_t>(name_len), tag + " name");
        std::string name(data.begin() + static_cast<std::ptrdiff_t>(cur.pos),
                         data.begin() + static_cast<std::ptrdiff_t>(cur.pos) + name_len);
        cur.pos += static_cast<std::size_t>(name_len);
        cur.need(1, tag + " kind");
        const std::uint8_t kind = data[cur.pos++];
        if (kind == static_cast<std::uint8_t>(CheckpointEntry::Kind::tensor)) {
            const std::int32_t rank = cur.i32(name + " rank");
            if (rank < 0 || rank > 8)
                throw std::runtime_error(origin + ": implausible tensor rank at offset " +
                                         std::to_string(cur.pos - 4));
            Shape shape;
            for (std::int32_t d = 0; d < rank; ++d) shape.push_back(cur.i32(name + " extent"));
            std::int64_t numel = 0;
            try {
                numel = shape_numel(shape);
            } catch (const std::exception&) {
                throw std::runtime_error(origin + ": invalid extents for " + name +
                                         " at offset " + std::to_string(cur.pos));
            }
            std::vector<double> payload(static_cast<std::size_t>(numel));
            for (auto& v : payload) v = cur.f64(name + " payload");
            ck.put_tensor(name, Tensor(std::move(shape), std::move(payload)));
        } else if (kind == static_cast<std::uint8_t>(CheckpointEntry::Kind::bytes)) {
            const std::int32_t len = cur.i32(name + " byte length");
            if (len < 0)
                throw std::runtime_error(origin + ": negative byte length at offset " +
                                         std::to_string(cur.pos - 4));
            cur.need(static_cast<std::size_t>(len), name + " bytes");
            ck.put_bytes(name,
                         std::vector<std::uint8_t>(
                             data.begin() + static_cast<std::ptrdiff_t>(cur.pos),
                             data.begin() + static_cast<std::ptrdiff_t>(cur.pos) + len));
            cur.pos += static_cast<std::size_t>(len);
        } else {
            throw std::runtime_error(origin + ": unknown entry kind at offset " +
                                     std::to_string(cur.pos - 1));
        }
    }
    if (cur.pos != data.size())
        throw std::runtime_error(origin + ": " + std::to_string(data.size() - cur.pos) +
                                 " trailing bytes at offset " + std::to_string(cur.pos));
    return ck;
}

void Checkpoint::save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error(path + ": write failed");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    return deserialize(data, path);
}

} // namespace lma

// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "lma/checkpoint.hpp"
#include "testutil.hpp"

using lma::Checkpoint;
using lma::Tensor;

namespace {

Checkpoint sample_checkpoint() {
    Checkpoint ck;
    ck.put_tensor("backbone.l0.weight", Tensor({2, 3}, {1.0, -2.5, 0.0, 1e-300, 3.25, -0.0}));
    ck.put_scalar("trainer.step", 41.0);
    ck.put_bytes("adaptor.0.mask", {1, 0, 1, 1});
    ck.put_string("rng.algorithm", "xoshiro256++/v1");
    ck.put_tensor("empty.shape.scalar", Tensor::scalar(7.5));
    return ck;
}

} // namespace

TEST_CASE("checkpoint entries round-trip through bytes") {
    const Checkpoint ck = sample_checkpoint();
    const auto bytes = ck.serialize();
    const Checkpoint back = Checkpoint::deserialize(bytes, "mem");

    REQUIRE(back.entries().size() == ck.entries().size());
    for (std::size_t i = 0; i < ck.entries().size(); ++i) {
        CHECK(back.entries()[i].name == ck.entries()[i].name);
        CHECK(back.entries()[i].kind == ck.entries()[i].kind);
    }
    const Tensor& w = back.tensor("backbone.l0.weight");
    CHECK((w.shape() == lma::Shape{2, 3}));
    CHECK(std::memcmp(w.data(), ck.tensor("backbone.l0.weight").data(),
                      w.numel() * sizeof(double)) == 0);
    CHECK(back.scalar("trainer.step") == 41.0);
    CHECK((back.bytes("adaptor.0.mask") == std::vector<std::uint8_t>{1, 0, 1, 1}));
    CHECK(back.string("rng.algorithm") == "xoshiro256++/v1");
    CHECK(back.scalar("empty.shape.scalar") == 7.5);

    // Re-serialization is byte-identical.
    CHECK(back.serialize() == bytes);
}

TEST_CASE("special float values survive bit-exactly") {
    Checkpoint ck;
    const double nan = std::nan("");
    const double inf = std::numeric_limits<double>::infinity();
    const double denorm = std::numeric_limits<double>::denorm_min();
    ck.put_tensor("specials", Tensor({4}, {nan, inf, -inf, denorm}));
    const auto back = Checkpoint::deserialize(ck.serialize(), "mem");
    const Tensor& t = back.tensor("specials");
    CHECK(std::memcmp(t.data(), ck.tensor("specials").data(), 4 * sizeof(double)) == 0);
}

TEST_CASE("lookups enforce names and kinds") {
    Checkpoint ck = sample_checkpoint();
    CHECK(ck.has("trainer.step"));
    CHECK_FALSE(ck.has("missing"));
    CHECK_THROWS_AS((void)ck.tensor("missing"), std::out_of_range);
    CHECK_THROWS_AS((void)ck.tensor("adaptor.0.mask"), std::invalid_argument);
    CHECK_THROWS_AS((void)ck.bytes("trainer.step"), std::invalid_argument);
    CHECK_THROWS_AS((void)ck.scalar("backbone.l0.weight"), std::invalid_argument);
    CHECK_THROWS_AS(ck.put_scalar("trainer.step", 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ck.put_bytes("", {}), std::invalid_argument);
}

TEST_CASE("malformed inputs are reported with offsets") {
    const auto good = sample_checkpoint().serialize();

    std::vector<std::uint8_t> junk{'J', 'U', 'N', 'K', '1', 0, 0, 0, 0};
    CHECK_THROWS_WITH_AS((void)Checkpoint::deserialize(junk, "mem"),
                         doctest::Contains("bad magic"), std::runtime_error);

    for (std::size_t cut : {std::size_t(7), std::size_t(12), good.size() / 2, good.size() - 1}) {
        auto trunc = good;
        trunc.resize(cut);
        CHECK_THROWS_WITH_AS((void)Checkpoint::deserialize(trunc, "mem"),
                             doctest::Contains("offset"), std::runtime_error);
    }

    auto extra = good;
    extra.push_back(0);
    CHECK_THROWS_WITH_AS((void)Checkpoint::deserialize(extra, "mem"),
                         doctest::Contains("trailing"), std::runtime_error);

    // Corrupt the first entry's kind byte (offset 9 + 4 + name length).
    auto badkind = good;
    badkind[9 + 4 + 18] = 9;
    CHECK_THROWS_WITH_AS((void)Checkpoint::deserialize(badkind, "mem"),
                         doctest::Contains("unknown entry kind"), std::runtime_error);
}

TEST_CASE("checkpoint files round-trip on disk") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "lma_checkpoint_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string path = (dir / "state.ckpt").string();

    const Checkpoint ck = sample_checkpoint();
    ck.save(path);
    const Checkpoint back = Checkpoint::load(path);
    CHECK(back.serialize() == ck.serialize());

    CHECK_THROWS_AS((void)Checkpoint::load((dir / "absent.ckpt").string()), std::runtime_error);
    fs::remove_all(dir);
}

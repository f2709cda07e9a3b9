#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "helpers.hpp"
#include "stull/index.hpp"
#include "stull/invariants.hpp"
#include "stull/sampler.hpp"

using namespace stull;

namespace {

IndexConfig config_h(std::uint32_t h, std::int64_t interval = kSecondsPerDay) {
    IndexConfig c;
    c.height = h;
    c.bin_interval = interval;
    return c;
}

// Per-leaf counts by direct rectangle tests, then balanced segment sizes summed per level.
std::vector<std::size_t> expected_level_totals(const std::vector<GeoPoint>& pts, std::uint32_t h) {
    const std::uint32_t side = 1u << (h - 1);
    std::vector<std::size_t> per_leaf(side * side, 0);
    for (const auto& p : pts) {
        const auto col = std::min<std::uint32_t>(side - 1, static_cast<std::uint32_t>(p.x * side));
        const auto row = std::min<std::uint32_t>(side - 1, static_cast<std::uint32_t>(p.y * side));
        ++per_leaf[row * side + col];
    }
    std::vector<std::size_t> totals(h + 1, 0);
    for (std::size_t m : per_leaf) {
        for (std::uint32_t s = 1; s <= h; ++s) totals[s] += m / h + (s <= m % h ? 1 : 0);
    }
    return totals;
}

}  // namespace

TEST_CASE("empty input builds an empty index") {
    const StullIndex index = build_index({}, config_h(4), 1);
    CHECK(index.bins().empty());
    CHECK(index.size() == 0);
    CHECK(scan_query(index, {{0, 0, 1, 1}, {0, 100}}).empty());
    CHECK(check_invariants(index).ok());
}

TEST_CASE("1000 uniform points, H=4: per-level totals follow the balanced split") {
    const auto pts = testing::uniform_points(1000, 7);
    const StullIndex index = build_index(pts, config_h(4), 7);
    REQUIRE(index.bins().size() == 1);
    const TemporalBin& bin = index.bins().begin()->second;
    const auto expected = expected_level_totals(pts, 4);

    std::vector<std::size_t> got(5, 0);
    for (std::uint32_t level = 1; level < 4; ++level) {
        for (std::uint32_t cell = 0; cell < index.geometry().cells_at(level); ++cell) {
            got[level] += bin.pyramid.buffer(level, cell).size();
        }
    }
    for (const auto& leaf : bin.pyramid.leaves()) got[4] += leaf.segment(4).size();

    std::size_t sum = 0;
    for (std::uint32_t l = 1; l <= 4; ++l) {
        CHECK(got[l] == expected[l]);
        // within one point per leaf of an exact quarter
        CHECK(std::abs(static_cast<long>(got[l]) - 250) <= 64);
        sum += got[l];
    }
    CHECK(sum == 1000);
    // the leaf remainder rule front-loads segment 1
    CHECK(got[1] >= got[2]);
    CHECK(got[2] >= got[3]);
    CHECK(got[3] >= got[4]);
    CHECK(check_invariants(index).ok());
}

TEST_CASE("a 16-point leaf splits 4/4/4/4 and each segment lands in its ancestor buffer") {
    std::vector<GeoPoint> pts;
    for (int i = 0; i < 16; ++i) pts.emplace_back(i, 0.01 + 0.001 * i, 0.02, 10);
    const StullIndex index = build_index(pts, config_h(4), 3);
    const TemporalBin& bin = index.bins().at(0);
    const CircularArray& leaf = bin.pyramid.leaf(0);
    REQUIRE(leaf.size() == 16);
    CHECK(leaf.segment_bounds == std::vector<std::uint32_t>{0, 4, 8, 12, 16});
    for (std::uint32_t level = 1; level < 4; ++level) {
        auto seg = std::vector<GeoPoint>(leaf.segment(level).begin(), leaf.segment(level).end());
        auto buf = bin.pyramid.buffer(level, 0);
        CHECK(testing::ids_of(seg) == testing::ids_of(buf));
    }
}

TEST_CASE("segment remainders go to the first segments") {
    CircularArray arr;
    arr.data.resize(10);
    arr.partition(4);
    CHECK(arr.segment_bounds == std::vector<std::uint32_t>{0, 3, 6, 8, 10});
    arr.data.resize(2);
    arr.partition(4);
    CHECK(arr.segment_bounds == std::vector<std::uint32_t>{0, 1, 2, 2, 2});
}

TEST_CASE("builds are deterministic per seed") {
    const auto pts = testing::uniform_points(3000, 5, {0, 0, 1, 1}, 0, 3 * kSecondsPerDay);
    const StullIndex a = build_index(pts, config_h(4), 42);
    const StullIndex b = build_index(pts, config_h(4), 42);
    const StullIndex c = build_index(pts, config_h(4), 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (const auto& [i, bin] : a.bins()) CHECK(structural_checksum(bin) == structural_checksum(b.bins().at(i)));
}

TEST_CASE("invariants hold across heights, extents and bin layouts") {
    for (std::uint32_t h : {2u, 3u, 5u, 7u}) {
        IndexConfig cfg = config_h(h, 3600);
        cfg.extent = {-180, -90, 180, 90};
        cfg.origin_time = 1000;
        auto pts = testing::uniform_points(5000, h, cfg.extent, 1000, 1000 + 10 * 3600);
        pts.emplace_back(999999, 180.0, 90.0, 1000);  // closed max corner
        const StullIndex index = build_index(pts, cfg, h);
        const InvariantReport rep = check_invariants(index);
        CHECK(rep.ok());
        if (!rep.ok()) MESSAGE(rep.violations.front());
        CHECK(index.size() == pts.size());
    }
}

TEST_CASE("invariant checker notices tampering") {
    const auto pts = testing::uniform_points(500, 2);
    StullIndex index = build_index(pts, config_h(3), 2);
    auto& bin = index.mutable_bins().begin()->second;
    SUBCASE("buffer point removed") { bin.pyramid.buffer(2, 1).pop_back(); }
    SUBCASE("point moved to the wrong leaf") {
        auto& leaf0 = bin.pyramid.leaf(0);
        auto& leaf15 = bin.pyramid.leaf(15);
        std::swap(leaf0.data.front(), leaf15.data.front());
    }
    SUBCASE("duplicate id") { bin.pyramid.leaf(3).data.front().id = bin.pyramid.leaf(4).data.front().id; }
    CHECK_FALSE(check_invariants(index).ok());
}

TEST_CASE("temporal bins are half-open and start at the origin") {
    IndexConfig cfg = config_h(3, 100);
    cfg.origin_time = 1000;
    const std::vector<GeoPoint> pts{{1, 0.5, 0.5, 1000}, {2, 0.5, 0.5, 1099}, {3, 0.5, 0.5, 1100}, {4, 0.5, 0.5, 1350}};
    const StullIndex index = build_index(pts, cfg, 1);
    CHECK(index.bins().size() == 3);
    CHECK(index.bins().at(0).count == 2);
    CHECK(index.bins().at(1).count == 1);
    CHECK(index.bins().at(3).count == 1);
    CHECK(index.bin_range(1) == TimeRange{1100, 1200});
}

TEST_CASE("points that cannot be indexed are rejected by id") {
    IndexConfig cfg = config_h(3);
    cfg.origin_time = 50;
    auto expect_reject = [&](GeoPoint bad) {
        std::vector<GeoPoint> pts{{1, 0.2, 0.2, 60}, bad};
        try {
            build_index(pts, cfg, 1);
            FAIL("accepted an invalid point");
        } catch (const InvalidPointError& e) {
            CHECK(e.id() == bad.id);
        }
    };
    expect_reject({77, 1.5, 0.2, 60});
    expect_reject({78, std::numeric_limits<double>::quiet_NaN(), 0.2, 60});
    expect_reject({79, 0.2, std::numeric_limits<double>::infinity(), 60});
    expect_reject({80, 0.2, 0.2, 49});
    CHECK_THROWS_AS(build_index({}, config_h(1), 1), ConfigError);
}

TEST_CASE("insert_points") {
    IndexConfig cfg = config_h(4);
    const auto pts = testing::uniform_points(8000, 21, cfg.extent, 0, 4 * kSecondsPerDay);
    StullIndex index = build_index(pts, cfg, 9);
    REQUIRE(index.bins().size() == 4);
    std::map<std::int64_t, std::uint64_t> before;
    for (const auto& [i, bin] : index.bins()) before[i] = structural_checksum(bin);

    SUBCASE("nothing to insert") {
        const InsertReport rep = insert_points(index, {}, 1);
        CHECK(rep.bins_touched == 0);
        for (const auto& [i, bin] : index.bins()) CHECK(structural_checksum(bin) == before[i]);
    }
    SUBCASE("100 points over two bins") {
        auto extra = testing::uniform_points(50, 3, cfg.extent, kSecondsPerDay, 2 * kSecondsPerDay, 100000);
        auto more = testing::uniform_points(50, 4, cfg.extent, 3 * kSecondsPerDay, 4 * kSecondsPerDay, 200000);
        extra.insert(extra.end(), more.begin(), more.end());
        const InsertReport rep = insert_points(index, extra, 2);
        CHECK(rep.bins_touched == 2);
        CHECK(rep.touched == std::vector<std::int64_t>{1, 3});
        CHECK(structural_checksum(index.bins().at(0)) == before[0]);
        CHECK(structural_checksum(index.bins().at(2)) == before[2]);
        CHECK(index.size() == 8100);
        CHECK(check_invariants(index).ok());
    }
    SUBCASE("points past the last bin append new bins") {
        const auto later = testing::uniform_points(10, 5, cfg.extent, 6 * kSecondsPerDay, 7 * kSecondsPerDay, 300000);
        const InsertReport rep = insert_points(index, later, 2);
        CHECK(rep.bins_touched == 1);
        CHECK(index.bins().size() == 5);
        CHECK(index.bins().at(6).count == 10);
        CHECK(check_invariants(index).ok());
    }
    SUBCASE("one bad point leaves the index untouched") {
        std::vector<GeoPoint> bad{{400000, 0.5, 0.5, 10}, {400001, 2.0, 0.5, 10}};
        CHECK_THROWS_AS(insert_points(index, bad, 2), InvalidPointError);
        CHECK(index.size() == 8000);
        for (const auto& [i, bin] : index.bins()) CHECK(structural_checksum(bin) == before[i]);
    }
}

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "helpers.hpp"
#include "stull/index.hpp"
#include "stull/evaluation.hpp"
#include "stull/sampler.hpp"

using namespace stull;

namespace {

IndexConfig config_h(std::uint32_t h) {
    IndexConfig c;
    c.height = h;
    return c;
}

}  // namespace

TEST_CASE("chunk windows partition every source for every phase") {
    for (std::size_t len = 0; len < 60; ++len) {
        for (std::uint32_t parts = 1; parts <= 7; ++parts) {
            for (std::uint32_t phase = 0; phase < parts; ++phase) {
                std::size_t expect_lo = 0;
                for (std::uint32_t chunk = 1; chunk <= parts; ++chunk) {
                    const auto [lo, hi] = chunk_window(len, chunk, parts, phase);
                    CHECK(lo == expect_lo);
                    CHECK(hi >= lo);
                    CHECK(hi - lo <= len / parts + 1);
                    expect_lo = hi;
                }
                CHECK(expect_lo == len);
            }
            // averaged over phases each window holds exactly len/parts offsets
            for (std::uint32_t chunk = 1; chunk <= parts; ++chunk) {
                std::size_t total = 0;
                for (std::uint32_t phase = 0; phase < parts; ++phase) {
                    const auto [lo, hi] = chunk_window(len, chunk, parts, phase);
                    total += hi - lo;
                }
                CHECK(total == len);
            }
        }
    }
    // phase 0 is plain floor arithmetic
    CHECK(chunk_window(10, 2, 3, 0) == std::pair<std::size_t, std::size_t>{3, 6});
}

TEST_CASE("16 points in one leaf, H=4, U=1: each update delivers the segment its rotation reaches") {
    std::vector<GeoPoint> pts;
    for (int i = 0; i < 16; ++i) pts.emplace_back(i, 0.05 + 0.001 * i, 0.03, 100);
    const StullIndex index = build_index(pts, config_h(4), 12);
    const CircularArray& leaf = index.bins().at(0).pyramid.leaf(0);
    const Query q{{0, 0, 1, 1}, {0, kSecondsPerDay}};

    for (std::uint32_t start = 1; start <= 4; ++start) {
        SamplingSession s(index, q, {1, 5}, SessionOptions{start, 0});
        CHECK(s.query_level() == 1);
        for (std::uint32_t u = 1; u <= 4; ++u) {
            const SampleBatch b = s.next_update();
            const std::uint32_t level = (start - 1 + u - 1) % 4 + 1;
            const auto seg = leaf.segment(level);
            CHECK(b.points.size() == 4);
            CHECK(testing::ids_of(b.points) == testing::ids_of(std::vector<GeoPoint>(seg.begin(), seg.end())));
        }
        CHECK(s.exhausted());
    }
}

TEST_CASE("sessions are exhaustive and never repeat a point") {
    IndexConfig cfg = config_h(4);
    const auto pts = testing::uniform_points(10000, 8, cfg.extent, 0, 3 * kSecondsPerDay);
    const StullIndex index = build_index(pts, cfg, 4);
    stull::SplitMix64 rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const Query q = testing::random_query(rng, 3 * kSecondsPerDay);
        const std::uint32_t per_level = 1 + static_cast<std::uint32_t>(rng.bounded(6));
        const auto batches = run_to_completion(index, q, {per_level, rng()});
        const auto expected = testing::ids_of(scan_query(index, q));
        // a query missing every bin or the whole extent is exhausted from the start
        if (!expected.empty()) CHECK(batches.size() == 4u * per_level);
        CHECK((batches.empty() || batches.size() == 4u * per_level));
        const auto got = testing::ids_of(testing::flatten(batches));
        CHECK_FALSE(testing::has_duplicates(got));
        CHECK(got == expected);
        const QueryRegion region = resolve_query(q, cfg.extent);
        for (const auto& b : batches) {
            for (const auto& p : b.points) CHECK(region.matches(p));
        }
    }
}

TEST_CASE("leaf-only cursors are exhaustive too") {
    const auto pts = testing::uniform_points(4000, 31);
    const StullIndex index = build_index(pts, config_h(4), 4);
    const Query deep{{0.13, 0.13, 0.24, 0.24}, {0, kSecondsPerDay}};  // inside one leaf
    REQUIRE(level_of_query(index, deep) == 4);
    for (std::uint32_t start = 1; start <= 4; ++start) {
        for (std::uint32_t phase = 0; phase < 3; ++phase) {
            SamplingSession s(index, deep, {3, 1}, SessionOptions{start, phase});
            REQUIRE(s.cursors().size() == 1);
            CHECK((s.cursors()[0].mode == CursorMode::leaf_only) == (start < 4));
            const auto got = testing::ids_of(testing::flatten(drain(s)));
            CHECK_FALSE(testing::has_duplicates(got));
            CHECK(got == testing::ids_of(scan_query(index, deep)));
        }
    }
}

TEST_CASE("forced start level 2 with l_Q = 3 runs in leaf-only mode") {
    const auto pts = testing::uniform_points(2000, 3);
    const StullIndex index = build_index(pts, config_h(4), 4);
    const Query q{{0.03, 0.03, 0.2, 0.2}, {0, kSecondsPerDay}};
    REQUIRE(level_of_query(index, q) == 3);
    const SamplingSession s(index, q, {2, 9}, SessionOptions{2, std::nullopt});
    CHECK(s.cursors().front().mode == CursorMode::leaf_only);
    const SamplingSession t(index, q, {2, 9}, SessionOptions{3, std::nullopt});
    CHECK(t.cursors().front().mode == CursorMode::buffer_walk);
}

TEST_CASE("one cursor per intersecting bin, each with its own start level") {
    const auto pts = testing::uniform_points(4000, 5, {0, 0, 1, 1}, 0, 4 * kSecondsPerDay);
    const StullIndex index = build_index(pts, config_h(4), 1);
    const SamplingSession all(index, {{0, 0, 1, 1}, {0, 4 * kSecondsPerDay}}, {1, 3});
    CHECK(all.cursors().size() == 4);
    std::set<std::uint32_t> starts;
    for (int seed = 0; seed < 20; ++seed) {
        const SamplingSession s(index, {{0, 0, 1, 1}, {0, 4 * kSecondsPerDay}}, {1, static_cast<std::uint64_t>(seed)});
        for (const auto& c : s.cursors()) {
            CHECK(c.start_level >= 1);
            CHECK(c.start_level <= 4);
            starts.insert(c.start_level);
        }
    }
    CHECK(starts.size() == 4);
    const SamplingSession one(index, {{0, 0, 1, 1}, {kSecondsPerDay + 5, kSecondsPerDay + 500}}, {1, 3});
    CHECK(one.cursors().size() == 1);
}

TEST_CASE("full extent, H=4, U=5: every update returns about 5% of the bin") {
    const auto pts = testing::uniform_points(40000, 77);
    const StullIndex index = build_index(pts, config_h(4), 77);
    SamplingSession s(index, {{0, 0, 1, 1}, {0, kSecondsPerDay}}, {5, 1});
    CHECK(s.theta() == doctest::Approx(0.05));
    // rounding slack: one point per source per update, plus the per-leaf
    // remainder spread between levels
    const double slack = 64 + 64;
    double last_fraction = 0.0;
    while (!s.exhausted()) {
        const SampleBatch b = s.next_update();
        CHECK(std::abs(static_cast<double>(b.points.size()) - 2000.0) <= slack);
        CHECK(b.fraction_complete > last_fraction);
        last_fraction = b.fraction_complete;
    }
    CHECK(last_fraction == 1.0);
}

TEST_CASE("run_to_completion and exhaustion") {
    const auto pts = testing::uniform_points(500, 2);
    IndexConfig cfg = config_h(2);
    const StullIndex index = build_index(pts, cfg, 2);
    CHECK(run_to_completion(index, {{0, 0, 1, 1}, {0, kSecondsPerDay}}, {1, 4}).size() == 2);

    SUBCASE("query matching no bin") {
        SamplingSession s(index, {{0, 0, 1, 1}, {5 * kSecondsPerDay, 6 * kSecondsPerDay}}, {3, 1});
        CHECK(s.exhausted());
        CHECK(run_to_completion(index, {{0, 0, 1, 1}, {5 * kSecondsPerDay, 6 * kSecondsPerDay}}, {3, 1}).empty());
        CHECK_THROWS_AS(s.next_update(), SessionExhaustedError);
    }
    SUBCASE("query outside the extent") {
        SamplingSession s(index, {{3, 3, 4, 4}, {0, kSecondsPerDay}}, {3, 1});
        CHECK(s.exhausted());
    }
    SUBCASE("calling past the end keeps throwing") {
        SamplingSession s(index, {{0, 0, 1, 1}, {0, kSecondsPerDay}}, {1, 1});
        drain(s);
        CHECK_THROWS_AS(s.next_update(), SessionExhaustedError);
        CHECK_THROWS_AS(s.next_update(), SessionExhaustedError);
    }
    CHECK_THROWS_AS(SamplingSession(index, {{0, 0, 1, 1}, {0, 10}}, {0, 1}), ConfigError);
}

TEST_CASE("equal seeds give equal batch sequences") {
    const auto pts = testing::uniform_points(3000, 6, {0, 0, 1, 1}, 0, 2 * kSecondsPerDay);
    const StullIndex index = build_index(pts, config_h(4), 6);
    const Query q{{0.1, 0.2, 0.8, 0.7}, {0, 2 * kSecondsPerDay}};
    const auto a = run_to_completion(index, q, {3, 55});
    const auto b = run_to_completion(index, q, {3, 55});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].points == b[i].points);
}

TEST_CASE("first-update selection frequency is flat (small Monte Carlo)") {
    // 200 points spread over a partial query; each session uses a fresh build
    // seed and a fresh session seed.
    IndexConfig cfg = config_h(3);
    const auto pts = testing::uniform_points(200, 4);
    const Query q{{0.1, 0.1, 0.8, 0.9}, {0, kSecondsPerDay}};
    const std::uint32_t per_level = 2;
    const double theta = 1.0 / 6.0;
    const int sessions = 6000;
    std::map<std::uint64_t, int> hits;
    std::size_t matches = 0;
    for (int s = 0; s < sessions; ++s) {
        const StullIndex index = build_index(pts, cfg, 1000 + s);
        if (s == 0) matches = scan_query(index, q).size();
        SamplingSession session(index, q, {per_level, static_cast<std::uint64_t>(s)});
        for (const auto& p : session.next_update().points) ++hits[p.id];
    }
    const double sigma = std::sqrt(theta * (1 - theta) / sessions);
    CHECK(hits.size() == matches);
    for (const auto& [id, n] : hits) {
        CHECK(std::abs(n / static_cast<double>(sessions) - theta) <= 4.5 * sigma);
    }
}

TEST_CASE("three unequal bins: first update and first level are uniform across bins") {
    IndexConfig cfg = config_h(3);
    auto pts = testing::uniform_points(90, 1, cfg.extent, 0, kSecondsPerDay);
    const auto mid = testing::uniform_points(240, 2, cfg.extent, kSecondsPerDay, 2 * kSecondsPerDay, 1000);
    const auto late = testing::uniform_points(30, 3, cfg.extent, 2 * kSecondsPerDay, 3 * kSecondsPerDay, 2000);
    pts.insert(pts.end(), mid.begin(), mid.end());
    pts.insert(pts.end(), late.begin(), late.end());
    const Query q{{0.05, 0.1, 0.9, 0.95}, {0, 3 * kSecondsPerDay}};
    const std::uint32_t per_level = 2;
    const int sessions = 20000;
    std::map<std::uint64_t, std::uint64_t> first;
    std::map<std::uint64_t, std::uint64_t> first_level;
    for (int s = 0; s < sessions; ++s) {
        const StullIndex index = build_index(pts, cfg, derive_seed(5, {static_cast<std::uint64_t>(s)}));
        if (s == 0) {
            REQUIRE(index.bins().size() == 3);
            for (const auto& p : scan_query(index, q)) first[p.id] = first_level[p.id] = 0;
        }
        SamplingSession session(index, q, {per_level, derive_seed(6, {static_cast<std::uint64_t>(s)})});
        for (std::uint32_t u = 1; u <= per_level; ++u) {
            for (const auto& p : session.next_update().points) {
                if (u == 1) ++first.at(p.id);
                ++first_level.at(p.id);
            }
        }
    }
    auto check = [&](const std::map<std::uint64_t, std::uint64_t>& hits, double p) {
        const double sigma = std::sqrt(p * (1 - p) / sessions);
        std::vector<std::uint64_t> counts;
        for (const auto& [id, n] : hits) {
            CHECK(std::abs(n / static_cast<double>(sessions) - p) <= 4 * sigma);
            counts.push_back(n);
        }
        CHECK(chi_square_uniform(counts, p * sessions).p_value > 0.001);
    };
    check(first, 1.0 / 6.0);
    check(first_level, 2.0 / 6.0);
}

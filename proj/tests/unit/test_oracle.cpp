#include <doctest.h>

#include <map>

#include "helpers.hpp"
#include "stull/index.hpp"
#include "stull/oracle.hpp"
#include "stull/sampler.hpp"

using namespace stull;

namespace {

LeafLayout random_layout(stull::SplitMix64& rng, std::uint32_t height, std::size_t max_per_leaf) {
    LeafLayout layout;
    const std::size_t leaves = std::size_t{1} << (2 * (height - 1));
    for (std::size_t i = 0; i < leaves; ++i) layout.leaf_sizes.push_back(rng.bounded(max_per_leaf + 1));
    layout.query_level = 1 + static_cast<std::uint32_t>(rng.bounded(height));
    return layout;
}

}  // namespace

TEST_CASE("exhaustion gives probability one") {
    stull::SplitMix64 rng(1);
    const LeafLayout layout = random_layout(rng, 3, 9);
    for (const auto& p : selection_probability_oracle(layout, 3, 2, 6)) {
        if (p != 0) CHECK(p == 1);
    }
}

TEST_CASE("one full level at H=4, U=1 selects a quarter of every point") {
    stull::SplitMix64 rng(2);
    const LeafLayout layout = random_layout(rng, 4, 6);
    const auto probs = selection_probability_oracle(layout, 4, 1, 1);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (layout.leaf_sizes[i] > 0) CHECK(probs[i] == Probability(1, 4));
    }
}

TEST_CASE("k = 1, H = 4, U = 2 gives 1/8 per point") {
    stull::SplitMix64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const LeafLayout layout = random_layout(rng, 4, 7);
        const auto probs = selection_probability_oracle(layout, 4, 2, 1);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (layout.leaf_sizes[i] > 0) CHECK(probs[i] == Probability(1, 8));
        }
    }
}

TEST_CASE("every layout, level and k gives exactly k * theta") {
    stull::SplitMix64 rng(4);
    for (std::uint32_t height : {2u, 3u, 4u}) {
        for (std::uint32_t per_level : {1u, 2u, 3u, 5u}) {
            for (int trial = 0; trial < 3; ++trial) {
                const LeafLayout layout = random_layout(rng, height, 11);
                const std::uint32_t total = height * per_level;
                for (std::uint32_t k = 1; k <= total; ++k) {
                    const Probability expect(static_cast<long>(k), static_cast<long>(total));
                    const auto probs = selection_probability_oracle(layout, height, per_level, k);
                    for (std::size_t i = 0; i < probs.size(); ++i) {
                        if (layout.leaf_sizes[i] > 0) CHECK(probs[i] == expect);
                    }
                }
            }
        }
    }
}

TEST_CASE("a fixed layout is exact whenever k is a multiple of U") {
    // With the shuffle fixed, the only randomness left is the start level and
    // the window phase. Full levels are then exact for every slot.
    const auto pts = testing::uniform_points(300, 8);
    IndexConfig cfg;
    cfg.height = 3;
    const StullIndex index = build_index(pts, cfg, 8);
    const TemporalBin& bin = index.bins().at(0);
    for (std::uint32_t per_level : {1u, 2u, 3u}) {
        for (std::uint32_t query_level : {1u, 2u, 3u}) {
            for (std::uint32_t k = per_level; k <= 3 * per_level; k += per_level) {
                const Probability expect(static_cast<long>(k), static_cast<long>(3 * per_level));
                for (std::uint32_t leaf = 0; leaf < 16; ++leaf) {
                    for (std::size_t pos = 0; pos < bin.pyramid.leaf(leaf).size(); ++pos) {
                        const PointSlot slot = locate_slot(index, bin, leaf, pos);
                        CHECK(conditional_selection_probability(slot, 3, per_level, query_level, k) == expect);
                    }
                }
            }
        }
    }
}

TEST_CASE("the conditional oracle matches real sessions over every start level and phase") {
    const auto pts = testing::uniform_points(400, 12);
    IndexConfig cfg;
    cfg.height = 4;
    const StullIndex index = build_index(pts, cfg, 12);
    const TemporalBin& bin = index.bins().at(0);
    const std::vector<Query> queries{{{0, 0, 1, 1}, {0, kSecondsPerDay}},
                                     {{0.05, 0.05, 0.2, 0.2}, {0, kSecondsPerDay}},
                                     {{0.55, 0.1, 0.95, 0.45}, {0, kSecondsPerDay}}};
    for (const Query& q : queries) {
        const std::uint32_t ql = level_of_query(index, q);
        const QueryRegion region = resolve_query(q, cfg.extent);
        for (std::uint32_t per_level : {1u, 2u, 3u}) {
            const std::uint32_t total = 4 * per_level;
            for (std::uint32_t k : {1u, per_level + 1, total - 1}) {
                std::map<std::uint64_t, long> hits;
                for (std::uint32_t start = 1; start <= 4; ++start) {
                    for (std::uint32_t phase = 0; phase < per_level; ++phase) {
                        SamplingSession s(index, q, {per_level, 0}, SessionOptions{start, phase});
                        for (std::uint32_t u = 0; u < k; ++u) {
                            for (const auto& p : s.next_update().points) ++hits[p.id];
                        }
                    }
                }
                for (std::uint32_t leaf = 0; leaf < 64; ++leaf) {
                    const auto& arr = bin.pyramid.leaf(leaf);
                    for (std::size_t pos = 0; pos < arr.size(); ++pos) {
                        if (!region.matches(arr.data[pos])) continue;
                        const PointSlot slot = locate_slot(index, bin, leaf, pos);
                        const Probability p = conditional_selection_probability(slot, 4, per_level, ql, k);
                        CHECK(p == Probability(hits[arr.data[pos].id], static_cast<long>(4 * per_level)));
                    }
                }
            }
        }
    }
}

TEST_CASE("layout_of reads leaf sizes from a built bin") {
    const auto pts = testing::uniform_points(100, 1);
    IndexConfig cfg;
    cfg.height = 2;
    const StullIndex index = build_index(pts, cfg, 1);
    const LeafLayout layout = layout_of(index.bins().at(0), 2);
    REQUIRE(layout.leaf_sizes.size() == 4);
    std::size_t sum = 0;
    for (auto n : layout.leaf_sizes) sum += n;
    CHECK(sum == 100);
    CHECK(layout.query_level == 2);
    CHECK_THROWS_AS(selection_probability_oracle(layout, 3, 1, 1), ConfigError);
}

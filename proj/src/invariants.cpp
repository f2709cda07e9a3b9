#include "stull/invariants.hpp"

#include <algorithm>
#include <sstream>

namespace stull {

namespace {

template <typename... Args>
std::string describe(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

}  // namespace

void check_bin(const StullIndex& index, const TemporalBin& bin, InvariantReport& report) {
    auto fail = [&](auto&&... args) {
        report.violations.push_back(describe("bin ", bin.index, ": ", args...));
    };
    const auto& geo = index.geometry();
    const Pyramid& pyr = bin.pyramid;
    const std::uint32_t h = index.height();

    if (pyr.height() != h) fail("pyramid height ", pyr.height(), " != ", h);
    if (!(bin.range == index.bin_range(bin.index))) fail("time range does not match bin index");
    if (pyr.leaves().size() != geo.leaf_count()) {
        fail("leaf count ", pyr.leaves().size(), " != ", geo.leaf_count());
        return;
    }

    std::size_t total = 0;
    for (std::uint32_t id = 0; id < pyr.leaves().size(); ++id) {
        const CircularArray& leaf = pyr.leaf(id);
        total += leaf.size();
        const auto& b = leaf.segment_bounds;
        if (b.size() != h + 1 || b.front() != 0 || b.back() != leaf.size()) {
            fail("leaf ", id, " segment bounds do not cover the array");
            continue;
        }
        const std::size_t m = leaf.size();
        for (std::uint32_t s = 1; s <= h; ++s) {
            const std::size_t want = m / h + (s <= m % h ? 1 : 0);
            if (b[s] < b[s - 1] || b[s] - b[s - 1] != want) {
                fail("leaf ", id, " segment ", s, " has ", b[s] - b[s - 1], " points, expected ", want);
            }
        }
        for (const auto& p : leaf.data) {
            if (!bin.range.contains(p.t)) fail("point ", p.id, " has t outside the bin");
            if (!geo.in_extent(p.x, p.y)) fail("point ", p.id, " outside extent");
            else if (geo.leaf_of(p.x, p.y) != id) fail("point ", p.id, " stored in wrong leaf ", id);
            if (p.hour != hour_of_day(p.t)) fail("point ", p.id, " has stale hour");
        }
    }
    if (total != bin.count) fail("leaf total ", total, " != bin count ", bin.count);

    // provenance: level-l buffer == union of segment l of the descendant leaves
    for (std::uint32_t level = 1; level < h; ++level) {
        const std::size_t cells = geo.cells_at(level);
        std::vector<std::vector<GeoPoint>> expected(cells);
        std::vector<std::size_t> population(cells, 0);
        const std::size_t leaves_per_cell = geo.leaf_count() / cells;
        for (std::uint32_t id = 0; id < pyr.leaves().size(); ++id) {
            const auto anc = geo.ancestor_of(id, level);
            auto seg = pyr.leaf(id).segment(level);
            expected[anc].insert(expected[anc].end(), seg.begin(), seg.end());
            population[anc] += pyr.leaf(id).size();
        }
        auto by_id = [](const GeoPoint& a, const GeoPoint& b) { return a.id < b.id; };
        for (std::uint32_t c = 0; c < cells; ++c) {
            std::vector<GeoPoint> actual = pyr.buffer(level, c);
            std::sort(actual.begin(), actual.end(), by_id);
            std::sort(expected[c].begin(), expected[c].end(), by_id);
            if (actual != expected[c]) {
                fail("buffer (level ", level, ", cell ", c, ") is not the union of its leaves' segment ",
                     level);
            }
            const std::size_t n = population[c];
            const std::size_t lo = n / h > leaves_per_cell ? n / h - leaves_per_cell : 0;
            const std::size_t hi = (n + h - 1) / h + leaves_per_cell;
            if (actual.size() < lo || actual.size() > hi) {
                fail("buffer (level ", level, ", cell ", c, ") size ", actual.size(),
                     " not proportional to population ", n);
            }
        }
    }
}

InvariantReport check_invariants(const StullIndex& index) {
    InvariantReport report;
    std::vector<std::uint64_t> ids;
    ids.reserve(index.size());
    for (const auto& [key, bin] : index.bins()) {
        if (key != bin.index) report.violations.push_back(describe("bin key ", key, " != index ", bin.index));
        check_bin(index, bin, report);
        for (const auto& leaf : bin.pyramid.leaves()) {
            for (const auto& p : leaf.data) ids.push_back(p.id);
        }
    }
    std::sort(ids.begin(), ids.end());
    const auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) report.violations.push_back(describe("id ", *dup, " stored more than once"));
    return report;
}

}  // namespace stull

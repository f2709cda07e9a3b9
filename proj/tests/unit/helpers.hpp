#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "stull/random.hpp"
#include "stull/sampler.hpp"
#include "stull/types.hpp"

namespace testing {

inline std::vector<stull::GeoPoint> uniform_points(std::size_t n, std::uint64_t seed,
                                                   stull::SpatialRect extent = {0, 0, 1, 1},
                                                   std::int64_t t0 = 0,
                                                   std::int64_t t1 = stull::kSecondsPerDay,
                                                   std::uint64_t first_id = 0) {
    stull::SplitMix64 rng(seed);
    std::vector<stull::GeoPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = extent.min_x + rng.uniform() * extent.width();
        const double y = extent.min_y + rng.uniform() * extent.height();
        const auto t = t0 + static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(t1 - t0)));
        out.emplace_back(first_id + i, x, y, t);
    }
    return out;
}

inline std::vector<std::uint64_t> ids_of(const std::vector<stull::GeoPoint>& pts) {
    std::vector<std::uint64_t> ids;
    ids.reserve(pts.size());
    for (const auto& p : pts) ids.push_back(p.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline std::vector<stull::GeoPoint> flatten(const std::vector<stull::SampleBatch>& batches) {
    std::vector<stull::GeoPoint> out;
    for (const auto& b : batches) out.insert(out.end(), b.points.begin(), b.points.end());
    return out;
}

inline bool has_duplicates(std::vector<std::uint64_t> sorted_ids) {
    return std::adjacent_find(sorted_ids.begin(), sorted_ids.end()) != sorted_ids.end();
}

/// Random query rectangle, sometimes thin, sometimes spilling past the extent.
inline stull::Query random_query(stull::SplitMix64& rng, std::int64_t t_max) {
    auto coord = [&] { return -0.1 + 1.2 * rng.uniform(); };
    double a = coord(), b = coord(), c = coord(), d = coord();
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    if (rng.bounded(4) == 0) b = a + 1e-3;
    if (b <= a) b = a + 1e-6;
    if (d <= c) d = c + 1e-6;
    auto t_lo = static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(t_max)));
    auto t_hi = t_lo + 1 + static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(t_max)));
    if (rng.bounded(3) == 0) {
        t_lo = 0;
        t_hi = t_max;
    }
    return {{a, c, b, d}, {t_lo, t_hi}};
}

}  // namespace testing

#pragma once

#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "stull/index.hpp"

namespace stull {

/// Exact probabilities for the selection-probability checks.
using Probability = boost::multiprecision::cpp_rational;

/// Where one point sits after construction: its leaf segment and its offsets
/// inside that segment and inside the level-`segment` ancestor buffer.
struct PointSlot {
    std::uint32_t segment = 1;
    std::size_t segment_length = 0;
    std::size_t segment_offset = 0;
    std::size_t buffer_length = 0;  // unused when segment == height
    std::size_t buffer_offset = 0;
};

/// P(point delivered within the first k updates | its slot), enumerating every
/// start level and every window phase. Simulates the retrieval schedule
/// directly, without going through a session.
Probability conditional_selection_probability(const PointSlot& slot, std::uint32_t height,
                                              std::uint32_t updates_per_level,
                                              std::uint32_t query_level, std::uint32_t k);

/// Per-leaf point counts of one bin, row-major, plus the query level l_Q.
struct LeafLayout {
    std::vector<std::size_t> leaf_sizes;
    std::uint32_t query_level = 1;
};

LeafLayout layout_of(const TemporalBin& bin, std::uint32_t query_level);

/// Exact selection probability after k updates of a query-matching point in
/// each leaf, averaged over start levels, window phases and the uniformly
/// random positions the shuffles give it.
std::vector<Probability> selection_probability_oracle(const LeafLayout& layout, std::uint32_t height,
                                                      std::uint32_t updates_per_level,
                                                      std::uint32_t k);

/// Looks up where a stored point ended up in a built bin.
PointSlot locate_slot(const StullIndex& index, const TemporalBin& bin, std::uint32_t leaf,
                      std::size_t position_in_leaf);

}  // namespace stull

#include "stull/oracle.hpp"

#include <algorithm>

namespace stull {

namespace {

// Level and chunk read by update u (1-based) of a cursor that started at l_r.
struct Step {
    std::uint32_t level;
    std::uint32_t chunk;
};

Step schedule(std::uint32_t start, std::uint32_t u, std::uint32_t height, std::uint32_t per_level) {
    return {(start - 1 + (u - 1) / per_level) % height + 1, (u - 1) % per_level + 1};
}

bool reads_buffer(std::uint32_t start, std::uint32_t level, std::uint32_t height,
                  std::uint32_t query_level) {
    return start >= query_level && level < height;
}

// Offsets of a length-len source read at `level` within the first k updates.
std::size_t count_read(std::size_t len, std::uint32_t level, std::uint32_t start,
                       std::uint32_t phase, std::uint32_t height, std::uint32_t per_level,
                       std::uint32_t k) {
    std::size_t n = 0;
    for (std::uint32_t u = 1; u <= k; ++u) {
        const Step st = schedule(start, u, height, per_level);
        if (st.level != level) continue;
        const std::size_t lo = (len * (st.chunk - 1) + phase) / per_level;
        const std::size_t hi = (len * st.chunk + phase) / per_level;
        n += hi - lo;
    }
    return n;
}

std::size_t segment_size(std::size_t m, std::uint32_t s, std::uint32_t height) {
    return m / height + (s <= m % height ? 1 : 0);
}

}  // namespace

Probability conditional_selection_probability(const PointSlot& slot, std::uint32_t height,
                                              std::uint32_t per_level, std::uint32_t query_level,
                                              std::uint32_t k) {
    k = std::min(k, height * per_level);
    long hits = 0;
    for (std::uint32_t start = 1; start <= height; ++start) {
        for (std::uint32_t phase = 0; phase < per_level; ++phase) {
            for (std::uint32_t u = 1; u <= k; ++u) {
                const Step st = schedule(start, u, height, per_level);
                if (st.level != slot.segment) continue;
                const bool buffered = reads_buffer(start, st.level, height, query_level);
                const std::size_t len = buffered ? slot.buffer_length : slot.segment_length;
                const std::size_t off = buffered ? slot.buffer_offset : slot.segment_offset;
                const std::size_t lo = (len * (st.chunk - 1) + phase) / per_level;
                const std::size_t hi = (len * st.chunk + phase) / per_level;
                if (off >= lo && off < hi) {
                    ++hits;
                    break;
                }
            }
        }
    }
    return Probability(hits, static_cast<long>(height) * per_level);
}

LeafLayout layout_of(const TemporalBin& bin, std::uint32_t query_level) {
    LeafLayout layout;
    layout.query_level = query_level;
    for (const auto& leaf : bin.pyramid.leaves()) layout.leaf_sizes.push_back(leaf.size());
    return layout;
}

std::vector<Probability> selection_probability_oracle(const LeafLayout& layout,
                                                      std::uint32_t height,
                                                      std::uint32_t per_level, std::uint32_t k) {
    k = std::min(k, height * per_level);
    const std::size_t leaves = layout.leaf_sizes.size();
    std::uint32_t side = 1;
    while (static_cast<std::size_t>(side) * side < leaves) side *= 2;
    if (static_cast<std::size_t>(side) * side != leaves || side != (1u << (height - 1))) {
        throw ConfigError("leaf layout does not match the pyramid height");
    }

    // buffer length per (level, ancestor): sum of that segment over descendant leaves
    auto ancestor = [&](std::size_t leaf, std::uint32_t level) {
        const std::uint32_t shift = height - level;
        const std::size_t col = leaf % side;
        const std::size_t row = leaf / side;
        return (row >> shift) * (std::size_t{1} << (level - 1)) + (col >> shift);
    };
    std::vector<std::vector<std::size_t>> buffer_len(height);
    for (std::uint32_t level = 1; level < height; ++level) {
        buffer_len[level].assign(std::size_t{1} << (2 * (level - 1)), 0);
        for (std::size_t leaf = 0; leaf < leaves; ++leaf) {
            buffer_len[level][ancestor(leaf, level)] +=
                segment_size(layout.leaf_sizes[leaf], level, height);
        }
    }

    std::vector<Probability> out(leaves);
    for (std::size_t leaf = 0; leaf < leaves; ++leaf) {
        const std::size_t m = layout.leaf_sizes[leaf];
        if (m == 0) continue;
        Probability p = 0;
        for (std::uint32_t start = 1; start <= height; ++start) {
            for (std::uint32_t phase = 0; phase < per_level; ++phase) {
                for (std::uint32_t s = 1; s <= height; ++s) {
                    const std::size_t z = segment_size(m, s, height);
                    if (z == 0) continue;
                    const bool buffered = reads_buffer(start, s, height, layout.query_level);
                    const std::size_t len = buffered ? buffer_len[s][ancestor(leaf, s)] : z;
                    const std::size_t read =
                        count_read(len, s, start, phase, height, per_level, k);
                    // P(segment s) * P(offset read | segment s)
                    p += Probability(static_cast<long>(z), static_cast<long>(m)) *
                         Probability(static_cast<long>(read), static_cast<long>(len));
                }
            }
        }
        out[leaf] = p / (static_cast<long>(height) * per_level);
    }
    return out;
}

PointSlot locate_slot(const StullIndex& index, const TemporalBin& bin, std::uint32_t leaf,
                      std::size_t position) {
    const std::uint32_t h = index.height();
    const CircularArray& arr = bin.pyramid.leaf(leaf);
    PointSlot slot;
    for (std::uint32_t s = 1; s <= h; ++s) {
        if (position < arr.segment_bounds[s]) {
            slot.segment = s;
            break;
        }
    }
    slot.segment_length = arr.segment(slot.segment).size();
    slot.segment_offset = position - arr.segment_bounds[slot.segment - 1];
    if (slot.segment < h) {
        const auto& buf =
            bin.pyramid.buffer(slot.segment, index.geometry().ancestor_of(leaf, slot.segment));
        const std::uint64_t id = arr.data[position].id;
        const auto it = std::find_if(buf.begin(), buf.end(), [id](const GeoPoint& p) { return p.id == id; });
        slot.buffer_length = buf.size();
        slot.buffer_offset = static_cast<std::size_t>(it - buf.begin());
    }
    return slot;
}

}  // namespace stull

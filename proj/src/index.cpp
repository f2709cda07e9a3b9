#include "stull/index.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "stull/random.hpp"

namespace stull {

void IndexConfig::validate() const {
    if (height < 2 || height > 15) throw ConfigError("height must be in [2, 15]");
    if (bin_interval <= 0) throw ConfigError("bin_interval must be positive");
    if (!extent.valid()) throw ConfigError("extent must satisfy min < max on both axes");
}

void CircularArray::partition(std::uint32_t height) {
    const auto m = static_cast<std::uint32_t>(data.size());
    const std::uint32_t base = m / height;
    const std::uint32_t extra = m % height;
    segment_bounds.assign(height + 1, 0);
    for (std::uint32_t s = 1; s <= height; ++s) {
        segment_bounds[s] = segment_bounds[s - 1] + base + (s <= extra ? 1 : 0);
    }
}

Pyramid::Pyramid(std::uint32_t height)
    : height_(height),
      leaves_(std::size_t{1} << (2 * (height - 1))),
      buffers_(level_offset(height)) {
    for (auto& leaf : leaves_) leaf.partition(height);
}

StullIndex::StullIndex(const IndexConfig& config) : config_(config) {
    config_.validate();
    geometry_ = PyramidGeometry(config_.extent, config_.height);
}

std::size_t StullIndex::size() const {
    std::size_t n = 0;
    for (const auto& [_, bin] : bins_) n += bin.count;
    return n;
}

std::int64_t StullIndex::bin_index_of(std::int64_t t) const {
    return (t - config_.origin_time) / config_.bin_interval;
}

TimeRange StullIndex::bin_range(std::int64_t index) const {
    const std::int64_t start = config_.origin_time + index * config_.bin_interval;
    return {start, start + config_.bin_interval};
}

std::vector<const TemporalBin*> StullIndex::bins_overlapping(const TimeRange& range) const {
    std::vector<const TemporalBin*> out;
    if (!range.valid()) return out;
    for (const auto& [_, bin] : bins_) {
        if (bin.range.intersects(range)) out.push_back(&bin);
    }
    return out;
}

void StullIndex::validate_point(const GeoPoint& p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw InvalidPointError(p.id, "non-finite coordinate");
    }
    if (!geometry_.in_extent(p.x, p.y)) {
        throw InvalidPointError(p.id, "outside the index extent");
    }
    if (p.t < config_.origin_time) {
        throw InvalidPointError(p.id, "timestamp precedes the first temporal bin");
    }
}

TemporalBin& StullIndex::bin_for_write(std::int64_t index) {
    auto it = bins_.find(index);
    if (it == bins_.end()) {
        TemporalBin bin;
        bin.index = index;
        bin.range = bin_range(index);
        bin.pyramid = Pyramid(config_.height);
        it = bins_.emplace(index, std::move(bin)).first;
    }
    return it->second;
}

void rebuild_sample_buffers(TemporalBin& bin, const PyramidGeometry& geometry, std::uint64_t seed) {
    Pyramid& pyr = bin.pyramid;
    const std::uint32_t h = pyr.height();

    for (std::uint32_t level = 1; level < h; ++level) {
        for (std::uint32_t c = 0; c < geometry.cells_at(level); ++c) pyr.buffer(level, c).clear();
    }

    auto& leaves = pyr.leaves();
    // size buffers exactly before copying
    std::vector<std::size_t> sizes(pyr.buffer_count(), 0);
    for (std::uint32_t id = 0; id < leaves.size(); ++id) {
        leaves[id].partition(h);
        for (std::uint32_t level = 1; level < h; ++level) {
            sizes[Pyramid::level_offset(level) + geometry.ancestor_of(id, level)] +=
                leaves[id].segment(level).size();
        }
    }
    for (std::uint32_t level = 1; level < h; ++level) {
        for (std::uint32_t c = 0; c < geometry.cells_at(level); ++c) {
            pyr.buffer(level, c).reserve(sizes[Pyramid::level_offset(level) + c]);
        }
    }

    const auto bin_key = static_cast<std::uint64_t>(bin.index);
    for (std::uint32_t id = 0; id < leaves.size(); ++id) {
        CircularArray& leaf = leaves[id];
        SplitMix64 rng(derive_seed(seed, {bin_key, h, id}));
        fisher_yates(std::span<GeoPoint>(leaf.data), rng);
        // segment H stays in place; the leaf itself is its level-H "ancestor"
        for (std::uint32_t level = 1; level < h; ++level) {
            auto seg = leaf.segment(level);
            auto& buf = pyr.buffer(level, geometry.ancestor_of(id, level));
            buf.insert(buf.end(), seg.begin(), seg.end());
        }
    }

    for (std::uint32_t level = 1; level < h; ++level) {
        for (std::uint32_t c = 0; c < geometry.cells_at(level); ++c) {
            SplitMix64 rng(derive_seed(seed, {bin_key, level, c}));
            fisher_yates(std::span<GeoPoint>(pyr.buffer(level, c)), rng);
        }
    }
}

namespace {

void route_into_leaves(TemporalBin& bin, const PyramidGeometry& geometry,
                       std::span<const GeoPoint> points) {
    auto& leaves = bin.pyramid.leaves();
    std::vector<std::uint32_t> leaf_of(points.size());
    std::vector<std::size_t> counts(leaves.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        leaf_of[i] = geometry.leaf_of(points[i].x, points[i].y);
        ++counts[leaf_of[i]];
    }
    for (std::size_t id = 0; id < leaves.size(); ++id) {
        leaves[id].data.reserve(leaves[id].data.size() + counts[id]);
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        leaves[leaf_of[i]].data.push_back(points[i]);
    }
    bin.count += points.size();
}

std::map<std::int64_t, std::vector<GeoPoint>> group_by_bin(const StullIndex& index,
                                                           std::span<const GeoPoint> points) {
    std::map<std::int64_t, std::size_t> counts;
    for (const auto& p : points) {
        index.validate_point(p);
        ++counts[index.bin_index_of(p.t)];
    }
    std::map<std::int64_t, std::vector<GeoPoint>> groups;
    for (const auto& [b, n] : counts) groups[b].reserve(n);
    for (const auto& p : points) {
        GeoPoint q = p;
        q.hour = hour_of_day(q.t);
        groups[index.bin_index_of(p.t)].push_back(q);
    }
    return groups;
}

}  // namespace

StullIndex build_index(std::span<const GeoPoint> points, const IndexConfig& config,
                       std::uint64_t seed) {
    StullIndex index(config);
    auto groups = group_by_bin(index, points);
    for (auto& [b, pts] : groups) {
        TemporalBin& bin = index.bin_for_write(b);
        route_into_leaves(bin, index.geometry(), pts);
        rebuild_sample_buffers(bin, index.geometry(), seed);
    }
    return index;
}

InsertReport insert_points(StullIndex& index, std::span<const GeoPoint> points,
                           std::uint64_t seed) {
    const auto started = std::chrono::steady_clock::now();
    InsertReport report;
    // validation happens before any bin is touched
    auto groups = group_by_bin(index, points);
    for (auto& [b, pts] : groups) {
        TemporalBin& bin = index.bin_for_write(b);
        route_into_leaves(bin, index.geometry(), pts);
        rebuild_sample_buffers(bin, index.geometry(), seed);
        report.touched.push_back(b);
    }
    report.bins_touched = report.touched.size();
    report.elapsed = std::chrono::steady_clock::now() - started;
    return report;
}

std::uint32_t level_of_query(const StullIndex& index, const Query& q) {
    const auto& geo = index.geometry();
    const auto span = geo.footprint(resolve_query(q, geo.extent()));
    return span ? geo.level_of(*span) : 1;
}

std::vector<std::uint32_t> overlapping_cells(const StullIndex& index, std::uint32_t level,
                                             const Query& q) {
    const auto& geo = index.geometry();
    if (level < 1 || level > geo.height()) throw Error("level out of range");
    const auto span = geo.footprint(resolve_query(q, geo.extent()));
    if (!span) return {};
    return geo.overlapping(level, *span);
}

namespace {

class Fnv1a {
public:
    void add(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <typename T>
    void add(const T& v) {
        add(&v, sizeof(T));
    }
    void add_point(const GeoPoint& p) {
        add(p.id);
        add(std::bit_cast<std::uint64_t>(p.x));
        add(std::bit_cast<std::uint64_t>(p.y));
        add(p.t);
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace

std::uint64_t structural_checksum(const TemporalBin& bin) {
    Fnv1a h;
    h.add(bin.index);
    h.add(static_cast<std::uint64_t>(bin.count));
    const Pyramid& pyr = bin.pyramid;
    for (const auto& leaf : pyr.leaves()) {
        h.add(static_cast<std::uint64_t>(leaf.size()));
        for (auto b : leaf.segment_bounds) h.add(b);
        for (const auto& p : leaf.data) h.add_point(p);
    }
    for (std::uint32_t level = 1; level < pyr.height(); ++level) {
        const std::size_t cells = std::size_t{1} << (2 * (level - 1));
        for (std::uint32_t c = 0; c < cells; ++c) {
            const auto& buf = pyr.buffer(level, static_cast<std::uint32_t>(c));
            h.add(static_cast<std::uint64_t>(buf.size()));
            for (const auto& p : buf) h.add_point(p);
        }
    }
    return h.value();
}

}  // namespace stull

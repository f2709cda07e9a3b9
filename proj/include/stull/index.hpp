#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "stull/geometry.hpp"
#include "stull/types.hpp"

namespace stull {

struct IndexConfig {
    /// Pyramid height H; alpha = 1/H.
    std::uint32_t height = 4;
    /// Seconds per temporal bin.
    std::int64_t bin_interval = kSecondsPerDay;
    /// Start of the first bin.
    std::int64_t origin_time = 0;
    SpatialRect extent{0.0, 0.0, 1.0, 1.0};

    double alpha() const { return 1.0 / height; }
    void validate() const;

    friend bool operator==(const IndexConfig&, const IndexConfig&) = default;
};

/// A leaf's point store: a shuffled array split into `height` balanced segments.
class CircularArray {
public:
    std::vector<GeoPoint> data;
    /// height + 1 offsets; segment s (1-based) is [bounds[s-1], bounds[s]).
    std::vector<std::uint32_t> segment_bounds;

    std::size_t size() const { return data.size(); }
    std::span<const GeoPoint> segment(std::uint32_t s) const {
        return std::span<const GeoPoint>(data).subspan(
            segment_bounds[s - 1], segment_bounds[s] - segment_bounds[s - 1]);
    }
    /// Balanced split into `height` segments; the first (m mod height) get one extra point.
    void partition(std::uint32_t height);

    friend bool operator==(const CircularArray&, const CircularArray&) = default;
};

/// Level 1 is the root; level H holds the leaves. Every non-leaf cell owns a
/// sample buffer holding copies of one leaf segment from each descendant leaf.
class Pyramid {
public:
    Pyramid() = default;
    explicit Pyramid(std::uint32_t height);

    std::uint32_t height() const { return height_; }

    std::vector<CircularArray>& leaves() { return leaves_; }
    const std::vector<CircularArray>& leaves() const { return leaves_; }
    CircularArray& leaf(std::uint32_t id) { return leaves_[id]; }
    const CircularArray& leaf(std::uint32_t id) const { return leaves_[id]; }

    /// Sample buffer of a non-leaf cell, level in [1, H-1].
    std::vector<GeoPoint>& buffer(std::uint32_t level, std::uint32_t cell) {
        return buffers_[level_offset(level) + cell];
    }
    const std::vector<GeoPoint>& buffer(std::uint32_t level, std::uint32_t cell) const {
        return buffers_[level_offset(level) + cell];
    }
    std::size_t buffer_count() const { return buffers_.size(); }

    static std::size_t level_offset(std::uint32_t level) {
        return ((std::size_t{1} << (2 * (level - 1))) - 1) / 3;
    }

    friend bool operator==(const Pyramid&, const Pyramid&) = default;

private:
    std::uint32_t height_ = 0;
    std::vector<CircularArray> leaves_;
    std::vector<std::vector<GeoPoint>> buffers_;
};

struct TemporalBin {
    std::int64_t index = 0;
    TimeRange range;
    Pyramid pyramid;
    std::size_t count = 0;

    friend bool operator==(const TemporalBin&, const TemporalBin&) = default;
};

class StullIndex {
public:
    StullIndex() = default;
    explicit StullIndex(const IndexConfig& config);

    const IndexConfig& config() const { return config_; }
    const PyramidGeometry& geometry() const { return geometry_; }
    std::uint32_t height() const { return config_.height; }

    const std::map<std::int64_t, TemporalBin>& bins() const { return bins_; }
    std::size_t size() const;

    std::int64_t bin_index_of(std::int64_t t) const;
    TimeRange bin_range(std::int64_t index) const;
    std::vector<const TemporalBin*> bins_overlapping(const TimeRange& range) const;

    /// Throws InvalidPointError if the point cannot be indexed.
    void validate_point(const GeoPoint& p) const;

    /// Creates an empty bin if missing.
    TemporalBin& bin_for_write(std::int64_t index);
    std::map<std::int64_t, TemporalBin>& mutable_bins() { return bins_; }

    friend bool operator==(const StullIndex& a, const StullIndex& b) {
        return a.config_ == b.config_ && a.bins_ == b.bins_;
    }

private:
    IndexConfig config_;
    PyramidGeometry geometry_;
    std::map<std::int64_t, TemporalBin> bins_;
};

StullIndex build_index(std::span<const GeoPoint> points, const IndexConfig& config,
                       std::uint64_t seed);

struct InsertReport {
    std::size_t bins_touched = 0;
    std::vector<std::int64_t> touched;
    std::chrono::nanoseconds elapsed{0};
};

/// Appends points to their leaves, then rebuilds every sample buffer of each
/// touched bin. Untouched bins are left as they were. The index is unchanged
/// if any point is rejected.
InsertReport insert_points(StullIndex& index, std::span<const GeoPoint> points, std::uint64_t seed);

/// Reshuffles every leaf of the bin and refills all of its sample buffers.
void rebuild_sample_buffers(TemporalBin& bin, const PyramidGeometry& geometry, std::uint64_t seed);

/// Deepest level whose single cell contains the query rectangle (clamped to
/// the extent). 1 when the rectangle misses the extent.
std::uint32_t level_of_query(const StullIndex& index, const Query& q);

/// Cells at `level` overlapping the query rectangle, row-major.
std::vector<std::uint32_t> overlapping_cells(const StullIndex& index, std::uint32_t level,
                                             const Query& q);

/// FNV-1a over a bin's full layout, including leaf and buffer order.
std::uint64_t structural_checksum(const TemporalBin& bin);

}  // namespace stull

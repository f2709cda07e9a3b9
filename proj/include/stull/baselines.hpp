#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "stull/geometry.hpp"
#include "stull/index.hpp"
#include "stull/random.hpp"
#include "stull/sampler.hpp"

namespace stull {

// ---------------------------------------------------------------------------
// RandomPath: per-bin quad-trees with points only in the leaves; each sample is
// one root-to-leaf descent weighted by query-relevant subtree counts.

struct QuadNode {
    CellCoord cell;
    std::array<std::int32_t, 4> children{-1, -1, -1, -1};
    std::size_t count = 0;
    std::vector<GeoPoint> points;  // leaves only

    bool is_leaf() const { return children[0] < 0; }
};

struct QuadTree {
    std::int64_t bin_index = 0;
    TimeRange range;
    std::vector<QuadNode> nodes;  // nodes[0] is the root
};

class QuadTreeIndex {
public:
    /// max_depth 0 means "same as config.height".
    static QuadTreeIndex build(std::span<const GeoPoint> points, const IndexConfig& config,
                               std::uint32_t max_depth = 0, std::size_t leaf_capacity = 64);

    const IndexConfig& config() const { return config_; }
    const PyramidGeometry& geometry() const { return geometry_; }
    std::uint32_t max_depth() const { return geometry_.height(); }
    const std::vector<QuadTree>& trees() const { return trees_; }
    std::size_t size() const;

private:
    IndexConfig config_;
    PyramidGeometry geometry_;
    std::vector<QuadTree> trees_;
};

/// Query-relevant subtree counts over every tree, computed once per query.
class RandomPathPlan {
public:
    RandomPathPlan(const QuadTreeIndex& index, const Query& q);

    std::size_t match_count() const { return total_; }
    /// One weighted descent; requires match_count() > 0.
    const GeoPoint& draw(SplitMix64& rng) const;
    /// All matching points, tree by tree.
    std::vector<GeoPoint> all_matches() const;

private:
    struct TreePlan {
        const QuadTree* tree = nullptr;
        std::vector<std::size_t> qcount;
        std::vector<bool> full;
        std::vector<std::vector<std::uint32_t>> matches;  // per node; leaves that are not full
    };
    std::size_t count_node(TreePlan& plan, std::int32_t node, bool time_full);

    const QuadTreeIndex* index_;
    QueryRegion region_;
    std::optional<LeafSpan> span_;
    std::vector<TreePlan> plans_;
    std::size_t total_ = 0;
};

/// A uniform n-subset of the matching points (all of them when n exceeds the match count).
std::vector<GeoPoint> randompath_sample(const QuadTreeIndex& index, const Query& q, std::size_t n,
                                        std::uint64_t seed);

/// Incremental RandomPath with the same per-update budget as the unbiased
/// sampler: update u brings the cumulative sample to floor(u * M / total).
class RandomPathSession : public IncrementalSampler {
public:
    RandomPathSession(const QuadTreeIndex& index, const Query& q, std::uint32_t total_updates,
                      std::uint64_t seed);

    SampleBatch next_update() override;
    bool exhausted() const override { return update_ >= total_updates_; }
    std::uint32_t total_updates() const override { return total_updates_; }
    std::uint32_t updates_done() const override { return update_; }

private:
    RandomPathPlan plan_;
    SplitMix64 rng_;
    std::unordered_set<std::uint64_t> drawn_;
    std::uint32_t total_updates_;
    std::uint32_t update_ = 0;
};

// ---------------------------------------------------------------------------
// Fixed-size buffers: the same quad-pyramid partition, but every non-leaf cell
// caches a constant number of points drawn uniformly from its subtree.

struct FixedBufferBin {
    std::int64_t index = 0;
    TimeRange range;
    std::vector<std::vector<GeoPoint>> leaves;
    std::vector<std::vector<GeoPoint>> buffers;  // flat, Pyramid::level_offset layout
    std::vector<std::size_t> populations;        // per buffer cell
};

class FixedBufferIndex {
public:
    static FixedBufferIndex build(std::span<const GeoPoint> points, const IndexConfig& config,
                                  std::size_t buffer_size, std::uint64_t seed);

    const IndexConfig& config() const { return config_; }
    const PyramidGeometry& geometry() const { return geometry_; }
    std::size_t buffer_size() const { return buffer_size_; }
    const std::vector<FixedBufferBin>& bins() const { return bins_; }

    /// Buffer of a non-leaf cell, or the full leaf array when level == height.
    std::span<const GeoPoint> source(const FixedBufferBin& bin, std::uint32_t level,
                                     std::uint32_t cell) const;

private:
    IndexConfig config_;
    PyramidGeometry geometry_;
    std::size_t buffer_size_ = 0;
    std::vector<FixedBufferBin> bins_;
};

struct FixedBufferSlice {
    std::vector<GeoPoint> points;  // query-matching points of the slice
    std::size_t examined = 0;      // buffered points read, matching or not
};

/// Positions [first, first + count) of every overlapping cell's buffer at `level`.
FixedBufferSlice fixedbuffer_sample(const FixedBufferIndex& index, const Query& q,
                                    std::uint32_t level, std::size_t first, std::size_t count);

/// Walks levels top-down, taking the next position of every overlapping
/// cell's buffer in turn, so each cell contributes equally regardless of its
/// population. Budget per update matches the unbiased sampler.
class FixedBufferSession : public IncrementalSampler {
public:
    FixedBufferSession(const FixedBufferIndex& index, const Query& q, std::uint32_t total_updates);

    SampleBatch next_update() override;
    bool exhausted() const override { return update_ >= total_updates_; }
    std::uint32_t total_updates() const override { return total_updates_; }
    std::uint32_t updates_done() const override { return update_; }

private:
    void load_level();

    const FixedBufferIndex* index_;
    QueryRegion region_;
    std::optional<LeafSpan> span_;
    std::vector<const FixedBufferBin*> bins_;
    std::size_t matches_ = 0;
    std::size_t delivered_ = 0;
    std::unordered_set<std::uint64_t> seen_;
    std::uint32_t level_ = 1;
    std::vector<std::span<const GeoPoint>> cells_;
    std::size_t max_len_ = 0;
    std::size_t position_ = 0;
    std::size_t cell_cursor_ = 0;
    std::uint32_t total_updates_;
    std::uint32_t update_ = 0;
};

}  // namespace stull

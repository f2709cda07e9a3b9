#include "stull/baselines.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace stull {

namespace {

struct RoutedPoint {
    GeoPoint point;
    std::uint32_t col;
    std::uint32_t row;
};

// Validates and groups points by temporal bin, exactly as the main index would.
std::map<std::int64_t, std::vector<GeoPoint>> group_points(std::span<const GeoPoint> points,
                                                           const StullIndex& shape) {
    std::map<std::int64_t, std::vector<GeoPoint>> groups;
    for (const GeoPoint& p : points) {
        shape.validate_point(p);
        GeoPoint q(p.id, p.x, p.y, p.t);
        groups[shape.bin_index_of(p.t)].push_back(q);
    }
    return groups;
}

bool disjoint(const CellCoord& c, std::uint32_t depth, const LeafSpan& span) {
    const std::uint32_t shift = depth - c.level;
    const std::uint32_t col_lo = c.col << shift;
    const std::uint32_t col_hi = ((c.col + 1) << shift) - 1;
    const std::uint32_t row_lo = c.row << shift;
    const std::uint32_t row_hi = ((c.row + 1) << shift) - 1;
    return col_hi < span.col_lo || col_lo > span.col_hi || row_hi < span.row_lo ||
           row_lo > span.row_hi;
}

void append_subtree(const QuadTree& tree, std::int32_t id, std::vector<GeoPoint>& out) {
    const QuadNode& node = tree.nodes[id];
    if (node.is_leaf()) {
        out.insert(out.end(), node.points.begin(), node.points.end());
        return;
    }
    for (std::int32_t c : node.children) append_subtree(tree, c, out);
}

void split_node(QuadTree& tree, std::int32_t node, std::vector<RoutedPoint> pts,
                std::uint32_t depth, std::size_t capacity) {
    const CellCoord cell = tree.nodes[node].cell;
    tree.nodes[node].count = pts.size();
    if (pts.size() <= capacity || cell.level >= depth) {
        auto& out = tree.nodes[node].points;
        out.reserve(pts.size());
        for (auto& rp : pts) out.push_back(rp.point);
        return;
    }
    const std::uint32_t shift = depth - cell.level - 1;
    std::array<std::vector<RoutedPoint>, 4> parts;
    for (auto& rp : pts) {
        const std::uint32_t dx = (rp.col >> shift) & 1u;
        const std::uint32_t dy = (rp.row >> shift) & 1u;
        parts[dy * 2 + dx].push_back(rp);
    }
    pts.clear();
    pts.shrink_to_fit();
    for (std::uint32_t q = 0; q < 4; ++q) {
        QuadNode child;
        child.cell = {cell.level + 1, cell.col * 2 + (q & 1u), cell.row * 2 + (q >> 1)};
        tree.nodes.push_back(std::move(child));
        const auto id = static_cast<std::int32_t>(tree.nodes.size() - 1);
        tree.nodes[node].children[q] = id;
        split_node(tree, id, std::move(parts[q]), depth, capacity);
    }
}

}  // namespace

// ---------------------------------------------------------------------------

QuadTreeIndex QuadTreeIndex::build(std::span<const GeoPoint> points, const IndexConfig& config,
                                   std::uint32_t max_depth, std::size_t leaf_capacity) {
    config.validate();
    if (leaf_capacity == 0) throw ConfigError("leaf capacity must be positive");
    QuadTreeIndex out;
    out.config_ = config;
    out.geometry_ = PyramidGeometry(config.extent, max_depth == 0 ? config.height : max_depth);
    const StullIndex shape(config);
    const std::uint32_t depth = out.geometry_.height();

    for (auto& [bin, pts] : group_points(points, shape)) {
        QuadTree tree;
        tree.bin_index = bin;
        tree.range = shape.bin_range(bin);
        tree.nodes.push_back(QuadNode{});
        std::vector<RoutedPoint> routed;
        routed.reserve(pts.size());
        for (const GeoPoint& p : pts) {
            routed.push_back({p, out.geometry_.leaf_column(p.x), out.geometry_.leaf_row(p.y)});
        }
        split_node(tree, 0, std::move(routed), depth, leaf_capacity);
        out.trees_.push_back(std::move(tree));
    }
    return out;
}

std::size_t QuadTreeIndex::size() const {
    std::size_t n = 0;
    for (const auto& t : trees_) n += t.nodes.front().count;
    return n;
}

RandomPathPlan::RandomPathPlan(const QuadTreeIndex& index, const Query& q)
    : index_(&index), region_(resolve_query(q, index.config().extent)) {
    span_ = index.geometry().footprint(region_);
    if (!span_) return;
    for (const QuadTree& tree : index.trees()) {
        if (!tree.range.intersects(region_.time)) continue;
        TreePlan plan;
        plan.tree = &tree;
        plan.qcount.assign(tree.nodes.size(), 0);
        plan.full.assign(tree.nodes.size(), false);
        plan.matches.resize(tree.nodes.size());
        const std::size_t n = count_node(plan, 0, region_.time.covers(tree.range));
        if (n == 0) continue;
        total_ += n;
        plans_.push_back(std::move(plan));
    }
}

std::size_t RandomPathPlan::count_node(TreePlan& plan, std::int32_t id, bool time_full) {
    const QuadNode& node = plan.tree->nodes[id];
    const auto& geo = index_->geometry();
    if (node.count == 0 || disjoint(node.cell, geo.height(), *span_)) return 0;
    if (time_full && geo.cell_inside(node.cell, region_)) {
        plan.full[id] = true;
        return plan.qcount[id] = node.count;
    }
    std::size_t n = 0;
    if (node.is_leaf()) {
        auto& hits = plan.matches[id];
        for (std::uint32_t i = 0; i < node.points.size(); ++i) {
            if (region_.matches(node.points[i])) hits.push_back(i);
        }
        n = hits.size();
    } else {
        for (std::int32_t c : node.children) n += count_node(plan, c, time_full);
    }
    return plan.qcount[id] = n;
}

const GeoPoint& RandomPathPlan::draw(SplitMix64& rng) const {
    if (total_ == 0) throw std::logic_error("draw from an empty query result");
    std::uint64_t r = rng.bounded(total_);
    const TreePlan* plan = nullptr;
    for (const TreePlan& p : plans_) {
        if (r < p.qcount[0]) {
            plan = &p;
            break;
        }
        r -= p.qcount[0];
    }
    std::int32_t id = 0;
    bool full = plan->full[0];
    for (;;) {
        const QuadNode& node = plan->tree->nodes[id];
        if (node.is_leaf()) return full ? node.points[r] : node.points[plan->matches[id][r]];
        for (std::int32_t c : node.children) {
            const std::size_t weight = full ? plan->tree->nodes[c].count : plan->qcount[c];
            if (r < weight) {
                id = c;
                break;
            }
            r -= weight;
        }
        full = full || plan->full[id];
    }
}

std::vector<GeoPoint> RandomPathPlan::all_matches() const {
    std::vector<GeoPoint> out;
    out.reserve(total_);
    for (const TreePlan& plan : plans_) {
        std::vector<std::int32_t> stack{0};
        while (!stack.empty()) {
            const std::int32_t id = stack.back();
            stack.pop_back();
            if (plan.qcount[id] == 0) continue;
            const QuadNode& node = plan.tree->nodes[id];
            if (plan.full[id]) {
                append_subtree(*plan.tree, id, out);
            } else if (!node.is_leaf()) {
                for (auto c = node.children.rbegin(); c != node.children.rend(); ++c) stack.push_back(*c);
            } else {
                for (std::uint32_t i : plan.matches[id]) out.push_back(node.points[i]);
            }
        }
    }
    return out;
}

std::vector<GeoPoint> randompath_sample(const QuadTreeIndex& index, const Query& q, std::size_t n,
                                        std::uint64_t seed) {
    const RandomPathPlan plan(index, q);
    if (n >= plan.match_count()) return plan.all_matches();
    SplitMix64 rng(seed);
    std::unordered_set<std::uint64_t> taken;
    std::vector<GeoPoint> out;
    out.reserve(n);
    while (out.size() < n) {
        const GeoPoint& p = plan.draw(rng);
        if (taken.insert(p.id).second) out.push_back(p);
    }
    return out;
}

RandomPathSession::RandomPathSession(const QuadTreeIndex& index, const Query& q,
                                     std::uint32_t total_updates, std::uint64_t seed)
    : plan_(index, q), rng_(seed), total_updates_(total_updates) {
    if (total_updates_ == 0) throw ConfigError("a session needs at least one update");
}

SampleBatch RandomPathSession::next_update() {
    if (exhausted()) throw SessionExhaustedError();
    ++update_;
    const std::size_t m = plan_.match_count();
    SampleBatch batch;
    if (update_ == total_updates_) {
        for (const GeoPoint& p : plan_.all_matches()) {
            if (drawn_.insert(p.id).second) batch.points.push_back(p);
        }
    } else {
        const std::size_t target = static_cast<std::size_t>(update_) * m / total_updates_;
        while (drawn_.size() < target) {
            const GeoPoint& p = plan_.draw(rng_);
            if (drawn_.insert(p.id).second) batch.points.push_back(p);
        }
    }
    batch.update_number = update_;
    batch.fraction_complete = static_cast<double>(update_) / total_updates_;
    batch.exhausted = exhausted();
    return batch;
}

// ---------------------------------------------------------------------------

FixedBufferIndex FixedBufferIndex::build(std::span<const GeoPoint> points,
                                         const IndexConfig& config, std::size_t buffer_size,
                                         std::uint64_t seed) {
    config.validate();
    if (buffer_size == 0) throw ConfigError("buffer size must be positive");
    FixedBufferIndex out;
    out.config_ = config;
    out.geometry_ = PyramidGeometry(config.extent, config.height);
    out.buffer_size_ = buffer_size;
    const StullIndex shape(config);
    const auto& geo = out.geometry_;
    const std::uint32_t h = config.height;

    for (auto& [bin_index, pts] : group_points(points, shape)) {
        FixedBufferBin bin;
        bin.index = bin_index;
        bin.range = shape.bin_range(bin_index);
        bin.leaves.resize(geo.leaf_count());
        for (const GeoPoint& p : pts) bin.leaves[geo.leaf_of(p.x, p.y)].push_back(p);
        const auto key = static_cast<std::uint64_t>(bin_index);
        for (std::uint32_t leaf = 0; leaf < bin.leaves.size(); ++leaf) {
            SplitMix64 rng(derive_seed(seed, {key, h, leaf}));
            fisher_yates(std::span<GeoPoint>(bin.leaves[leaf]), rng);
        }

        bin.buffers.resize(Pyramid::level_offset(h));
        bin.populations.resize(bin.buffers.size());
        for (std::uint32_t level = 1; level < h; ++level) {
            const std::uint32_t shift = h - level;
            for (std::uint32_t cell = 0; cell < geo.cells_at(level); ++cell) {
                const CellCoord c = geo.cell_coord(level, cell);
                std::vector<GeoPoint> pool;
                for (std::uint32_t row = c.row << shift; row < (c.row + 1) << shift; ++row) {
                    for (std::uint32_t col = c.col << shift; col < (c.col + 1) << shift; ++col) {
                        const auto& leaf = bin.leaves[row * geo.leaf_side() + col];
                        pool.insert(pool.end(), leaf.begin(), leaf.end());
                    }
                }
                const std::size_t slot = Pyramid::level_offset(level) + cell;
                bin.populations[slot] = pool.size();
                // partial Fisher-Yates: the first `take` positions are a uniform subset
                SplitMix64 rng(derive_seed(seed, {key, level, cell}));
                const std::size_t take = std::min(buffer_size, pool.size());
                for (std::size_t i = 0; i < take; ++i) {
                    const std::size_t j = i + rng.bounded(pool.size() - i);
                    std::swap(pool[i], pool[j]);
                }
                pool.resize(take);
                pool.shrink_to_fit();
                bin.buffers[slot] = std::move(pool);
            }
        }
        out.bins_.push_back(std::move(bin));
    }
    return out;
}

std::span<const GeoPoint> FixedBufferIndex::source(const FixedBufferBin& bin, std::uint32_t level,
                                                   std::uint32_t cell) const {
    if (level < 1 || level > geometry_.height()) throw ConfigError("level out of range");
    if (level == geometry_.height()) return bin.leaves[cell];
    return bin.buffers[Pyramid::level_offset(level) + cell];
}

FixedBufferSlice fixedbuffer_sample(const FixedBufferIndex& index, const Query& q,
                                    std::uint32_t level, std::size_t first, std::size_t count) {
    const auto& geo = index.geometry();
    if (level < 1 || level > geo.height()) throw ConfigError("level out of range");
    const QueryRegion region = resolve_query(q, index.config().extent);
    FixedBufferSlice out;
    const auto span = geo.footprint(region);
    if (!span) return out;
    for (const FixedBufferBin& bin : index.bins()) {
        if (!bin.range.intersects(region.time)) continue;
        for (std::uint32_t cell : geo.overlapping(level, *span)) {
            const auto src = index.source(bin, level, cell);
            const std::size_t lo = std::min(first, src.size());
            const std::size_t hi = std::min(src.size(), lo + count);
            out.examined += hi - lo;
            for (std::size_t i = lo; i < hi; ++i) {
                if (region.matches(src[i])) out.points.push_back(src[i]);
            }
        }
    }
    return out;
}

FixedBufferSession::FixedBufferSession(const FixedBufferIndex& index, const Query& q,
                                       std::uint32_t total_updates)
    : index_(&index),
      region_(resolve_query(q, index.config().extent)),
      total_updates_(total_updates) {
    if (total_updates_ == 0) throw ConfigError("a session needs at least one update");
    const auto& geo = index.geometry();
    span_ = geo.footprint(region_);
    if (!span_) return;
    for (const FixedBufferBin& bin : index.bins()) {
        if (!bin.range.intersects(region_.time)) continue;
        bins_.push_back(&bin);
        for (std::uint32_t leaf : geo.overlapping(geo.height(), *span_)) {
            for (const GeoPoint& p : bin.leaves[leaf]) matches_ += region_.matches(p) ? 1 : 0;
        }
    }
    load_level();
}

void FixedBufferSession::load_level() {
    cells_.clear();
    max_len_ = 0;
    position_ = 0;
    cell_cursor_ = 0;
    if (!span_) return;
    for (const FixedBufferBin* bin : bins_) {
        for (std::uint32_t cell : index_->geometry().overlapping(level_, *span_)) {
            cells_.push_back(index_->source(*bin, level_, cell));
            max_len_ = std::max(max_len_, cells_.back().size());
        }
    }
}

SampleBatch FixedBufferSession::next_update() {
    if (exhausted()) throw SessionExhaustedError();
    ++update_;
    const std::size_t target =
        update_ == total_updates_ ? matches_ : static_cast<std::size_t>(update_) * matches_ / total_updates_;
    SampleBatch batch;
    const std::uint32_t height = index_->geometry().height();
    while (delivered_ < target) {
        if (cell_cursor_ == cells_.size()) {
            cell_cursor_ = 0;
            if (++position_ >= max_len_) {
                if (++level_ > height) throw std::logic_error("fixed-buffer walk ran past the leaves");
                load_level();
                continue;
            }
        }
        const auto src = cells_[cell_cursor_++];
        if (position_ >= src.size()) continue;
        const GeoPoint& p = src[position_];
        if (region_.matches(p) && seen_.insert(p.id).second) {
            batch.points.push_back(p);
            ++delivered_;
        }
    }
    batch.update_number = update_;
    batch.fraction_complete = static_cast<double>(update_) / total_updates_;
    batch.exhausted = exhausted();
    return batch;
}

}  // namespace stull

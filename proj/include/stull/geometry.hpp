#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "stull/types.hpp"

namespace stull {

/// A query resolved against an index extent. Rect edges are half-open, except
/// that a max edge reaching the extent's max edge is closed (the extent itself
/// is closed at its max edges so boundary points stay indexable).
struct QueryRegion {
    SpatialRect rect;
    TimeRange time;
    bool closed_x = false;
    bool closed_y = false;

    bool matches_xy(double x, double y) const {
        return x >= rect.min_x && (x < rect.max_x || closed_x) &&
               y >= rect.min_y && (y < rect.max_y || closed_y);
    }
    bool matches(const GeoPoint& p) const { return time.contains(p.t) && matches_xy(p.x, p.y); }
};

QueryRegion resolve_query(const Query& q, const SpatialRect& extent);

/// Inclusive range of leaf columns/rows touched by a query.
struct LeafSpan {
    std::uint32_t col_lo = 0;
    std::uint32_t col_hi = 0;
    std::uint32_t row_lo = 0;
    std::uint32_t row_hi = 0;
};

struct CellCoord {
    std::uint32_t level = 1;
    std::uint32_t col = 0;
    std::uint32_t row = 0;

    friend bool operator==(const CellCoord&, const CellCoord&) = default;
};

/// Fixed quadrant-recursive grid over an extent. Level 1 is the root, level
/// `height` holds the leaves. All cell boundaries come from one formula over
/// leaf-level indices so every level tiles the extent identically.
class PyramidGeometry {
public:
    PyramidGeometry() = default;
    PyramidGeometry(const SpatialRect& extent, std::uint32_t height);

    const SpatialRect& extent() const { return extent_; }
    std::uint32_t height() const { return height_; }

    std::uint32_t side(std::uint32_t level) const { return 1u << (level - 1); }
    std::size_t cells_at(std::uint32_t level) const {
        return static_cast<std::size_t>(side(level)) * side(level);
    }
    std::uint32_t leaf_side() const { return side(height_); }
    std::size_t leaf_count() const { return cells_at(height_); }

    double boundary_x(std::uint32_t j) const;
    double boundary_y(std::uint32_t j) const;

    /// Closed at the extent's max edges.
    bool in_extent(double x, double y) const {
        return x >= extent_.min_x && x <= extent_.max_x && y >= extent_.min_y && y <= extent_.max_y;
    }

    /// Root-to-leaf descent, one quadrant decision per level.
    std::uint32_t leaf_column(double x) const;
    std::uint32_t leaf_row(double y) const;
    std::uint32_t leaf_of(double x, double y) const {
        return leaf_row(y) * leaf_side() + leaf_column(x);
    }

    SpatialRect cell_rect(const CellCoord& c) const;
    CellCoord leaf_coord(std::uint32_t leaf) const {
        return {height_, leaf % leaf_side(), leaf / leaf_side()};
    }
    std::uint32_t cell_id(const CellCoord& c) const { return c.row * side(c.level) + c.col; }
    CellCoord cell_coord(std::uint32_t level, std::uint32_t id) const {
        return {level, id % side(level), id / side(level)};
    }
    /// Id (at `level`) of the ancestor of a leaf.
    std::uint32_t ancestor_of(std::uint32_t leaf, std::uint32_t level) const;

    /// Leaf columns/rows that can hold points matching the query; empty if none.
    std::optional<LeafSpan> footprint(const QueryRegion& q) const;
    /// Deepest level at which one cell holds the whole footprint.
    std::uint32_t level_of(const LeafSpan& span) const;
    /// Cells at `level` whose range overlaps the footprint, row-major.
    std::vector<std::uint32_t> overlapping(std::uint32_t level, const LeafSpan& span) const;
    /// True when every point the cell can hold satisfies the query's spatial part.
    bool cell_inside(const CellCoord& c, const QueryRegion& q) const;

private:
    SpatialRect extent_{};
    std::uint32_t height_ = 0;
};

}  // namespace stull

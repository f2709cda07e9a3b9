#include "stull/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace stull {

QueryRegion resolve_query(const Query& q, const SpatialRect& extent) {
    QueryRegion r;
    r.rect = q.rect;
    r.time = q.time;
    r.closed_x = q.rect.max_x >= extent.max_x;
    r.closed_y = q.rect.max_y >= extent.max_y;
    return r;
}

PyramidGeometry::PyramidGeometry(const SpatialRect& extent, std::uint32_t height)
    : extent_(extent), height_(height) {
    if (!extent.valid() || !std::isfinite(extent.min_x) || !std::isfinite(extent.max_x) ||
        !std::isfinite(extent.min_y) || !std::isfinite(extent.max_y)) {
        throw ConfigError("spatial extent must be finite with min < max on both axes");
    }
    if (height < 2 || height > 15) {
        throw ConfigError("pyramid height must be in [2, 15]");
    }
}

double PyramidGeometry::boundary_x(std::uint32_t j) const {
    const std::uint32_t n = leaf_side();
    if (j >= n) return extent_.max_x;
    return extent_.min_x + extent_.width() * j / n;
}

double PyramidGeometry::boundary_y(std::uint32_t j) const {
    const std::uint32_t n = leaf_side();
    if (j >= n) return extent_.max_y;
    return extent_.min_y + extent_.height() * j / n;
}

std::uint32_t PyramidGeometry::leaf_column(double x) const {
    std::uint32_t col = 0;
    for (std::uint32_t level = 1; level < height_; ++level) {
        const std::uint32_t half = leaf_side() >> level;
        if (x >= boundary_x(col + half)) col += half;
    }
    return col;
}

std::uint32_t PyramidGeometry::leaf_row(double y) const {
    std::uint32_t row = 0;
    for (std::uint32_t level = 1; level < height_; ++level) {
        const std::uint32_t half = leaf_side() >> level;
        if (y >= boundary_y(row + half)) row += half;
    }
    return row;
}

SpatialRect PyramidGeometry::cell_rect(const CellCoord& c) const {
    const std::uint32_t span = leaf_side() >> (c.level - 1);
    return {boundary_x(c.col * span), boundary_y(c.row * span), boundary_x((c.col + 1) * span),
            boundary_y((c.row + 1) * span)};
}

std::uint32_t PyramidGeometry::ancestor_of(std::uint32_t leaf, std::uint32_t level) const {
    const CellCoord lc = leaf_coord(leaf);
    const std::uint32_t shift = height_ - level;
    return (lc.row >> shift) * side(level) + (lc.col >> shift);
}

namespace {

// Inclusive leaf index range [lo, hi] of points with coordinate in [a, b) (or
// [a, b] when closed); false when empty.
template <typename Boundary, typename Locate>
bool axis_span(double a, double b, bool closed, double ext_min, double ext_max, std::uint32_t n,
               Boundary boundary, Locate locate, std::uint32_t& lo, std::uint32_t& hi) {
    if (!(a < b)) return false;
    if (a > ext_max || b <= ext_min) return false;
    if (a == ext_max && !closed) return false;
    lo = locate(std::max(a, ext_min));
    if (closed) {
        hi = n - 1;
    } else {
        std::uint32_t j = locate(b);
        if (boundary(j) >= b) {
            if (j == 0) return false;
            --j;
        }
        hi = j;
    }
    return lo <= hi;
}

}  // namespace

std::optional<LeafSpan> PyramidGeometry::footprint(const QueryRegion& q) const {
    LeafSpan s;
    const std::uint32_t n = leaf_side();
    const bool has_x = axis_span(
        q.rect.min_x, q.rect.max_x, q.closed_x, extent_.min_x, extent_.max_x, n,
        [this](std::uint32_t j) { return boundary_x(j); },
        [this](double v) { return leaf_column(v); }, s.col_lo, s.col_hi);
    if (!has_x) return std::nullopt;
    const bool has_y = axis_span(
        q.rect.min_y, q.rect.max_y, q.closed_y, extent_.min_y, extent_.max_y, n,
        [this](std::uint32_t j) { return boundary_y(j); },
        [this](double v) { return leaf_row(v); }, s.row_lo, s.row_hi);
    if (!has_y) return std::nullopt;
    return s;
}

std::uint32_t PyramidGeometry::level_of(const LeafSpan& span) const {
    for (std::uint32_t level = height_; level > 1; --level) {
        const std::uint32_t shift = height_ - level;
        if ((span.col_lo >> shift) == (span.col_hi >> shift) &&
            (span.row_lo >> shift) == (span.row_hi >> shift)) {
            return level;
        }
    }
    return 1;
}

std::vector<std::uint32_t> PyramidGeometry::overlapping(std::uint32_t level,
                                                        const LeafSpan& span) const {
    const std::uint32_t shift = height_ - level;
    const std::uint32_t s = side(level);
    std::vector<std::uint32_t> cells;
    cells.reserve(static_cast<std::size_t>((span.col_hi >> shift) - (span.col_lo >> shift) + 1) *
                  ((span.row_hi >> shift) - (span.row_lo >> shift) + 1));
    for (std::uint32_t r = span.row_lo >> shift; r <= (span.row_hi >> shift); ++r) {
        for (std::uint32_t c = span.col_lo >> shift; c <= (span.col_hi >> shift); ++c) {
            cells.push_back(r * s + c);
        }
    }
    return cells;
}

bool PyramidGeometry::cell_inside(const CellCoord& c, const QueryRegion& q) const {
    const SpatialRect r = cell_rect(c);
    const bool x_in = q.rect.min_x <= r.min_x && (q.closed_x || r.max_x <= q.rect.max_x);
    const bool y_in = q.rect.min_y <= r.min_y && (q.closed_y || r.max_y <= q.rect.max_y);
    return x_in && y_in;
}

}  // namespace stull

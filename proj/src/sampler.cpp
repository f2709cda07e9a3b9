#include "stull/sampler.hpp"

#include <algorithm>

#include "stull/random.hpp"

namespace stull {

SamplingSession::SamplingSession(const StullIndex& index, const Query& q,
                                 const SamplingConfig& cfg, const SessionOptions& options)
    : index_(&index),
      region_(resolve_query(q, index.config().extent)),
      cfg_(cfg),
      height_(index.height()),
      total_updates_(index.height() * cfg.updates_per_level) {
    cfg_.validate();
    if (options.start_level && (*options.start_level < 1 || *options.start_level > height_)) {
        throw ConfigError("forced start level out of range");
    }
    if (options.window_phase && *options.window_phase >= cfg_.updates_per_level) {
        throw ConfigError("forced window phase out of range");
    }

    const auto& geo = index.geometry();
    span_ = geo.footprint(region_);
    if (span_) {
        query_level_ = geo.level_of(*span_);
        for (const TemporalBin* bin : index.bins_overlapping(region_.time)) {
            SplitMix64 rng(derive_seed(cfg_.master_seed, {static_cast<std::uint64_t>(bin->index)}));
            BinCursor c;
            c.bin = bin;
            c.start_level = 1 + static_cast<std::uint32_t>(rng.bounded(height_));
            c.phase = static_cast<std::uint32_t>(rng.bounded(cfg_.updates_per_level));
            if (options.start_level) c.start_level = *options.start_level;
            if (options.window_phase) c.phase = *options.window_phase;
            c.level = c.start_level;
            c.mode = c.start_level >= query_level_ ? CursorMode::buffer_walk : CursorMode::leaf_only;
            cursors_.push_back(std::move(c));
        }
    }
    exhausted_ = cursors_.empty();
}

void SamplingSession::load_sources(BinCursor& cursor) const {
    const auto& geo = index_->geometry();
    const Pyramid& pyr = cursor.bin->pyramid;
    const bool time_inside = region_.time.covers(cursor.bin->range);
    cursor.sources.clear();
    cursor.inside.clear();
    if (cursor.mode == CursorMode::buffer_walk && cursor.level < height_) {
        for (std::uint32_t cell : geo.overlapping(cursor.level, *span_)) {
            cursor.sources.emplace_back(pyr.buffer(cursor.level, cell));
            cursor.inside.push_back(time_inside &&
                                    geo.cell_inside(geo.cell_coord(cursor.level, cell), region_));
        }
    } else {
        for (std::uint32_t leaf : geo.overlapping(height_, *span_)) {
            cursor.sources.push_back(pyr.leaf(leaf).segment(cursor.level));
            cursor.inside.push_back(time_inside && geo.cell_inside(geo.leaf_coord(leaf), region_));
        }
    }
    cursor.loaded = true;
}

SampleBatch SamplingSession::next_update() {
    if (exhausted_) throw SessionExhaustedError();
    const std::uint32_t per_level = cfg_.updates_per_level;
    ++update_;
    const std::uint32_t chunk = (update_ - 1) % per_level + 1;

    SampleBatch batch;
    for (BinCursor& cursor : cursors_) {
        if (!cursor.loaded) load_sources(cursor);
        for (std::size_t i = 0; i < cursor.sources.size(); ++i) {
            const auto src = cursor.sources[i];
            const auto [lo, hi] = chunk_window(src.size(), chunk, per_level, cursor.phase);
            if (cursor.inside[i]) {
                batch.points.insert(batch.points.end(), src.begin() + lo, src.begin() + hi);
            } else {
                for (std::size_t k = lo; k < hi; ++k) {
                    if (region_.matches(src[k])) batch.points.push_back(src[k]);
                }
            }
        }
        // rotate after U updates on a level
        if (update_ % per_level == 0) {
            cursor.level = 1 + cursor.level % height_;
            cursor.loaded = false;
            cursor.sources.clear();
            cursor.inside.clear();
        }
    }

    exhausted_ = update_ >= total_updates_;
    batch.update_number = update_;
    batch.fraction_complete = std::min(1.0, static_cast<double>(update_) / total_updates_);
    batch.exhausted = exhausted_;
    return batch;
}

std::vector<SampleBatch> drain(IncrementalSampler& sampler) {
    std::vector<SampleBatch> out;
    while (!sampler.exhausted()) out.push_back(sampler.next_update());
    return out;
}

std::vector<SampleBatch> run_to_completion(const StullIndex& index, const Query& q,
                                           const SamplingConfig& cfg) {
    SamplingSession session(index, q, cfg);
    return drain(session);
}

std::vector<GeoPoint> scan_query(const StullIndex& index, const Query& q) {
    const QueryRegion region = resolve_query(q, index.config().extent);
    std::vector<GeoPoint> out;
    for (const auto& [_, bin] : index.bins()) {
        if (!bin.range.intersects(region.time)) continue;
        for (const auto& leaf : bin.pyramid.leaves()) {
            for (const auto& p : leaf.data) {
                if (region.matches(p)) out.push_back(p);
            }
        }
    }
    return out;
}

}  // namespace stull

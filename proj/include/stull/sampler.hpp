#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "stull/geometry.hpp"
#include "stull/index.hpp"

namespace stull {

/// theta = alpha / updates_per_level = 1 / (H * U).
struct SamplingConfig {
    std::uint32_t updates_per_level = 5;
    std::uint64_t master_seed = 0;

    void validate() const {
        if (updates_per_level < 1) throw ConfigError("updates_per_level must be >= 1");
    }
    double theta(std::uint32_t height) const { return 1.0 / (static_cast<double>(height) * updates_per_level); }
};

/// Test hooks; normal sessions draw both values from the seed.
struct SessionOptions {
    std::optional<std::uint32_t> start_level;
    std::optional<std::uint32_t> window_phase;
};

struct SampleBatch {
    std::vector<GeoPoint> points;
    std::uint32_t update_number = 0;
    double fraction_complete = 0.0;
    bool exhausted = false;
};

/// Common surface of every incremental sampler (the unbiased one and the baselines).
class IncrementalSampler {
public:
    virtual ~IncrementalSampler() = default;
    virtual SampleBatch next_update() = 0;
    virtual bool exhausted() const = 0;
    virtual std::uint32_t total_updates() const = 0;
    virtual std::uint32_t updates_done() const = 0;
};

/// Chunk `chunk` (1-based) of a source of length `len` split into `parts`
/// windows. The phase in [0, parts) shifts the rounding so each window has
/// expected size exactly len/parts; the windows always partition [0, len).
inline std::pair<std::size_t, std::size_t> chunk_window(std::size_t len, std::uint32_t chunk,
                                                        std::uint32_t parts, std::uint32_t phase) {
    const auto lo = (len * (chunk - 1) + phase) / parts;
    const auto hi = (len * chunk + phase) / parts;
    return {lo, hi};
}

enum class CursorMode { buffer_walk, leaf_only };

/// Retrieval state for one temporal bin.
struct BinCursor {
    const TemporalBin* bin = nullptr;
    std::uint32_t start_level = 1;
    std::uint32_t level = 1;
    std::uint32_t phase = 0;
    CursorMode mode = CursorMode::buffer_walk;
    std::vector<std::span<const GeoPoint>> sources;
    /// Parallel to `sources`: the source lies wholly inside the query.
    std::vector<bool> inside;
    bool loaded = false;
};

/// Incremental unbiased retrieval over every bin that intersects the query.
/// Each update returns about theta of the matching points of every bin; after
/// H*U updates the union of all batches is exactly the query result.
/// The index must not be modified while a session is open.
class SamplingSession : public IncrementalSampler {
public:
    SamplingSession(const StullIndex& index, const Query& q, const SamplingConfig& cfg,
                    const SessionOptions& options = {});

    SampleBatch next_update() override;
    bool exhausted() const override { return exhausted_; }
    std::uint32_t total_updates() const override { return total_updates_; }
    std::uint32_t updates_done() const override { return update_; }

    std::uint32_t query_level() const { return query_level_; }
    const std::vector<BinCursor>& cursors() const { return cursors_; }
    double theta() const { return cfg_.theta(height_); }

private:
    void load_sources(BinCursor& cursor) const;

    const StullIndex* index_;
    QueryRegion region_;
    std::optional<LeafSpan> span_;
    SamplingConfig cfg_;
    std::uint32_t height_;
    std::uint32_t query_level_ = 1;
    std::uint32_t total_updates_;
    std::uint32_t update_ = 0;
    bool exhausted_ = false;
    std::vector<BinCursor> cursors_;
};

inline SamplingSession open_session(const StullIndex& index, const Query& q,
                                    const SamplingConfig& cfg, const SessionOptions& options = {}) {
    return SamplingSession(index, q, cfg, options);
}

/// Runs a sampler until it is exhausted.
std::vector<SampleBatch> drain(IncrementalSampler& sampler);

std::vector<SampleBatch> run_to_completion(const StullIndex& index, const Query& q,
                                           const SamplingConfig& cfg);

/// Every point of the index satisfying the query, by linear scan.
std::vector<GeoPoint> scan_query(const StullIndex& index, const Query& q);

}  // namespace stull

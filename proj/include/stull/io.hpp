#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stull/index.hpp"
#include "stull/sampler.hpp"

namespace stull {

enum class PointFormat { csv, ndjson };

/// ".ndjson" / ".jsonl" select NDJSON, anything else CSV.
PointFormat format_for_path(const std::filesystem::path& path);

struct IngestReport {
    std::size_t rows = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    /// The first ten rejection reasons, each prefixed with its line number.
    std::vector<std::string> reasons;
    std::chrono::nanoseconds elapsed{0};
};

struct IngestResult {
    std::vector<GeoPoint> points;
    IngestReport report;
};

/// CSV rows are `id,x,y,t` with any trailing columns ignored and an optional
/// header line; NDJSON lines are objects with the same four keys. Malformed
/// rows are counted and skipped.
IngestResult parse_points(std::istream& in, PointFormat format);
IngestResult read_points(const std::filesystem::path& path, PointFormat format);

/// Shortest round-trip formatting, so reading back gives identical values.
void write_points(std::ostream& out, std::span<const GeoPoint> points, PointFormat format);
void write_points(const std::filesystem::path& path, std::span<const GeoPoint> points,
                  PointFormat format);

inline constexpr std::uint32_t kIndexFormatVersion = 1;

/// Binary container; layout in docs/index-format.md.
std::string serialize_index(const StullIndex& index);
/// Throws VersionError for a foreign or newer header, FormatError for anything truncated or corrupt.
StullIndex deserialize_index(std::string_view bytes);

void save_index(const StullIndex& index, const std::filesystem::path& path);
StullIndex load_index(const std::filesystem::path& path);

struct EvaluationDefaults {
    std::size_t grid_rows = 256;
    std::size_t grid_cols = 256;
    double bandwidth = 0.0;  // 0 = extent diagonal / 64
    double mask_threshold = 0.05;
    std::size_t buffer_size = 1024;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct AppConfig {
    IndexConfig index;
    SamplingConfig sampling;
    EvaluationDefaults evaluation;
    std::uint64_t build_seed = 42;
};

/// JSON with optional sections "index", "sampling", "evaluation" and key
/// "build_seed"; missing keys keep their defaults, unknown keys are rejected.
AppConfig parse_config(std::string_view json_text);
AppConfig load_config(const std::filesystem::path& path);
std::string dump_config(const AppConfig& config);

}  // namespace stull

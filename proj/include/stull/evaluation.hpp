#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stull/index.hpp"
#include "stull/sampler.hpp"

namespace stull {

// ---------------------------------------------------------------- density

/// Row-major grid of non-negative values; row 0 is the min_y edge.
struct DensityGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    SpatialRect extent;
    std::vector<double> values;

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double max() const;
};

/// Extent diagonal / 64.
double default_bandwidth(const SpatialRect& extent);

/// Gaussian KDE at cell centres, truncated at four bandwidths, max-normalized.
/// An empty input gives an all-zero grid.
DensityGrid kde_grid(std::span<const GeoPoint> points, const SpatialRect& extent, std::size_t rows,
                     std::size_t cols, double bandwidth);

/// Point counts per cell (points outside `extent` ignored, max edges closed), max-normalized.
DensityGrid count_grid(std::span<const GeoPoint> points, const SpatialRect& extent,
                       std::size_t rows, std::size_t cols);

/// RMSE over cells where exact >= threshold. Throws when no cell qualifies.
double rmse_masked(const DensityGrid& approx, const DensityGrid& exact, double threshold = 0.05);

struct HourHistogram {
    std::array<double, 24> values{};
};

/// Points per hour of day, max-normalized.
HourHistogram hourly_histogram(std::span<const GeoPoint> points);
double rmse_hourly(const HourHistogram& a, const HourHistogram& b);

// ---------------------------------------------------------------- statistics

struct MeanEstimate {
    double mean = 0.0;
    double half_width = 0.0;
    double lower() const { return mean - half_width; }
    double upper() const { return mean + half_width; }
};

/// mean +/- z * s / sqrt(n); z is exactly 2 at 95% and the normal quantile otherwise.
MeanEstimate ci_mean(std::span<const double> sample, double confidence = 0.95);

struct ChiSquareResult {
    double statistic = 0.0;
    std::size_t dof = 0;
    double p_value = 1.0;
};

/// Goodness of fit of observed counts against one common expected count.
ChiSquareResult chi_square_uniform(std::span<const std::uint64_t> observed, double expected);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------- latency

struct LatencyReport {
    std::string label;
    std::size_t repetitions = 0;
    std::uint32_t updates = 0;
    /// Every measured update of every repetition, milliseconds.
    std::vector<double> update_ms;
    std::vector<std::size_t> update_points;
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double p90_ms = 0.0;
    double p99_ms = 0.0;
    double mean_total_ms = 0.0;
    double mean_points = 0.0;
};

using SamplerFactory = std::function<std::unique_ptr<IncrementalSampler>(std::uint64_t seed)>;

/// Times `updates` consecutive updates (0 = until exhaustion) of fresh samplers,
/// after `warmup` untimed runs. Session construction is not timed.
LatencyReport bench_sampler(const SamplerFactory& make, std::size_t repetitions,
                            std::uint32_t updates = 0, std::size_t warmup = 3);

LatencyReport bench_retrieval(const StullIndex& index, const Query& q, const SamplingConfig& cfg,
                              std::size_t repetitions, std::uint32_t updates = 0);

void write_latency_csv(std::ostream& out, std::span<const LatencyReport> reports);

// ---------------------------------------------------------------- synthetic data

enum class SyntheticMode { clustered, scattered };

struct ClusterSpec {
    double x = 0.5;
    double y = 0.5;
    double spread = 0.05;
    double weight = 1.0;
    int peak_hour = 12;
};

struct SyntheticSpec {
    SyntheticMode mode = SyntheticMode::clustered;
    std::size_t count = 0;
    SpatialRect extent{0.0, 0.0, 1.0, 1.0};
    /// Empty: centres, spreads, weights and peak hours are drawn from the seed.
    std::vector<ClusterSpec> clusters;
    /// Number of drawn clusters when `clusters` is empty; 0 picks 6 (clustered) or 150 (scattered).
    std::size_t cluster_count = 0;
    /// Share of points placed uniformly over the extent; negative picks 0 (clustered) or 0.3 (scattered).
    double uniform_fraction = -1.0;
    std::int64_t time_start = 0;
    std::int64_t time_span = 7 * kSecondsPerDay;
    /// Probability that a clustered point's hour is drawn around its cluster's peak hour.
    double hour_concentration = 0.6;
    std::uint64_t seed = 1;

    void validate() const;
};

std::vector<GeoPoint> generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------- accuracy experiment

struct AccuracySetup {
    IndexConfig index;
    std::uint32_t updates_per_level = 5;
    std::size_t buffer_size = 1024;
    std::size_t grid_rows = 256;
    std::size_t grid_cols = 256;
    double bandwidth = 0.0;  // 0 = default_bandwidth(index.extent)
    double mask_threshold = 0.05;
    std::vector<double> fractions{0.05, 0.2, 0.5, 1.0};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<std::string> samplers{"stull", "randompath", "fixedbuffer"};
};

/// One row of the CSV report `metric,sampler,dataset,theta,seed,value`; theta
/// is the cumulative sample fraction.
struct MetricRecord {
    std::string metric;
    std::string sampler;
    std::string dataset;
    double theta = 0.0;
    std::uint64_t seed = 0;
    double value = 0.0;
};

/// KDE and hourly RMSE of cumulative samples against the exact query result,
/// for every sampler, seed and fraction. Fractions are rounded to whole updates.
std::vector<MetricRecord> run_accuracy(std::span<const GeoPoint> points, const Query& q,
                                       const AccuracySetup& setup, const std::string& dataset);

void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records);
/// Mean of `value` grouped by metric, sampler, dataset and theta, as JSON.
std::string metrics_summary_json(std::span<const MetricRecord> records);
double mean_metric(std::span<const MetricRecord> records, const std::string& metric,
                   const std::string& sampler, double theta);

}  // namespace stull

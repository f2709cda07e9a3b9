#include "stull/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <tuple>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "stull/baselines.hpp"
#include "stull/random.hpp"

namespace stull {

namespace {

using Clock = std::chrono::steady_clock;

void normalize_max(std::vector<double>& v) {
    const double m = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    if (m <= 0.0) return;
    for (double& x : v) x /= m;
}

double percentile(std::vector<double> sorted_values, double q) {
    if (sorted_values.empty()) return 0.0;
    std::sort(sorted_values.begin(), sorted_values.end());
    const double pos = q * static_cast<double>(sorted_values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

double DensityGrid::max() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double default_bandwidth(const SpatialRect& extent) {
    return std::hypot(extent.width(), extent.height()) / 64.0;
}

DensityGrid kde_grid(std::span<const GeoPoint> points, const SpatialRect& extent, std::size_t rows,
                     std::size_t cols, double bandwidth) {
    if (rows == 0 || cols == 0) throw ConfigError("grid needs at least one row and one column");
    if (!(bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
    if (!extent.valid()) throw ConfigError("grid extent is empty");
    DensityGrid grid{rows, cols, extent, std::vector<double>(rows * cols, 0.0)};
    const double cw = extent.width() / static_cast<double>(cols);
    const double ch = extent.height() / static_cast<double>(rows);
    const double reach = 4.0 * bandwidth;
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);

    std::vector<double> wx;
    std::vector<double> wy;
    for (const GeoPoint& p : points) {
        // cell centres within reach: centre(c) = min + (c + 0.5) * size
        const auto c_lo = static_cast<long>(std::ceil((p.x - reach - extent.min_x) / cw - 0.5));
        const auto c_hi = static_cast<long>(std::floor((p.x + reach - extent.min_x) / cw - 0.5));
        const auto r_lo = static_cast<long>(std::ceil((p.y - reach - extent.min_y) / ch - 0.5));
        const auto r_hi = static_cast<long>(std::floor((p.y + reach - extent.min_y) / ch - 0.5));
        const long c0 = std::max(0L, c_lo);
        const long c1 = std::min(static_cast<long>(cols) - 1, c_hi);
        const long r0 = std::max(0L, r_lo);
        const long r1 = std::min(static_cast<long>(rows) - 1, r_hi);
        if (c0 > c1 || r0 > r1) continue;
        wx.resize(static_cast<std::size_t>(c1 - c0 + 1));
        wy.resize(static_cast<std::size_t>(r1 - r0 + 1));
        for (long c = c0; c <= c1; ++c) {
            const double dx = extent.min_x + (static_cast<double>(c) + 0.5) * cw - p.x;
            wx[static_cast<std::size_t>(c - c0)] = std::exp(-dx * dx * inv);
        }
        for (long r = r0; r <= r1; ++r) {
            const double dy = extent.min_y + (static_cast<double>(r) + 0.5) * ch - p.y;
            wy[static_cast<std::size_t>(r - r0)] = std::exp(-dy * dy * inv);
        }
        for (long r = r0; r <= r1; ++r) {
            double* row = &grid.values[static_cast<std::size_t>(r) * cols];
            const double a = wy[static_cast<std::size_t>(r - r0)];
            for (long c = c0; c <= c1; ++c) row[c] += a * wx[static_cast<std::size_t>(c - c0)];
        }
    }
    normalize_max(grid.values);
    return grid;
}

DensityGrid count_grid(std::span<const GeoPoint> points, const SpatialRect& extent,
                       std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw ConfigError("grid needs at least one row and one column");
    if (!extent.valid()) throw ConfigError("grid extent is empty");
    DensityGrid grid{rows, cols, extent, std::vector<double>(rows * cols, 0.0)};
    for (const GeoPoint& p : points) {
        if (p.x < extent.min_x || p.x > extent.max_x || p.y < extent.min_y || p.y > extent.max_y) continue;
        auto c = static_cast<std::size_t>((p.x - extent.min_x) / extent.width() * static_cast<double>(cols));
        auto r = static_cast<std::size_t>((p.y - extent.min_y) / extent.height() * static_cast<double>(rows));
        grid.at(std::min(r, rows - 1), std::min(c, cols - 1)) += 1.0;
    }
    normalize_max(grid.values);
    return grid;
}

double rmse_masked(const DensityGrid& approx, const DensityGrid& exact, double threshold) {
    if (approx.rows != exact.rows || approx.cols != exact.cols) {
        throw ConfigError("grids have different shapes");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < exact.values.size(); ++i) {
        if (exact.values[i] < threshold) continue;
        const double d = approx.values[i] - exact.values[i];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw Error("no grid cell reaches the mask threshold");
    return std::sqrt(sum / static_cast<double>(n));
}

HourHistogram hourly_histogram(std::span<const GeoPoint> points) {
    HourHistogram h;
    for (const GeoPoint& p : points) h.values[hour_of_day(p.t)] += 1.0;
    const double m = *std::max_element(h.values.begin(), h.values.end());
    if (m > 0.0) {
        for (double& v : h.values) v /= m;
    }
    return h;
}

double rmse_hourly(const HourHistogram& a, const HourHistogram& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 24; ++i) {
        const double d = a.values[i] - b.values[i];
        sum += d * d;
    }
    return std::sqrt(sum / 24.0);
}

MeanEstimate ci_mean(std::span<const double> sample, double confidence) {
    if (sample.size() < 2) throw ConfigError("a confidence interval needs at least two values");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must be in (0, 1)");
    const double n = static_cast<double>(sample.size());
    const double mean = std::accumulate(sample.begin(), sample.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : sample) ss += (v - mean) * (v - mean);
    const double stderr_mean = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    double z = 2.0;
    if (std::abs(confidence - 0.95) > 1e-12) {
        z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
    }
    return {mean, z * stderr_mean};
}

ChiSquareResult chi_square_uniform(std::span<const std::uint64_t> observed, double expected) {
    if (observed.size() < 2 || !(expected > 0.0)) throw ConfigError("chi-square needs >= 2 cells and a positive expectation");
    ChiSquareResult r;
    for (std::uint64_t o : observed) {
        const double d = static_cast<double>(o) - expected;
        r.statistic += d * d / expected;
    }
    r.dof = observed.size() - 1;
    const boost::math::chi_squared dist(static_cast<double>(r.dof));
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("linear fit needs two or more paired values");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ConfigError("linear fit needs distinct x values");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

LatencyReport bench_sampler(const SamplerFactory& make, std::size_t repetitions,
                            std::uint32_t updates, std::size_t warmup) {
    LatencyReport report;
    report.repetitions = repetitions;
    double total_ms = 0.0;
    for (std::size_t run = 0; run < warmup + repetitions; ++run) {
        auto sampler = make(run);
        const std::uint32_t limit = updates == 0 ? sampler->total_updates() : updates;
        report.updates = limit;
        for (std::uint32_t u = 0; u < limit && !sampler->exhausted(); ++u) {
            const auto t0 = Clock::now();
            const SampleBatch batch = sampler->next_update();
            const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
            if (run < warmup) continue;
            report.update_ms.push_back(ms);
            report.update_points.push_back(batch.points.size());
            total_ms += ms;
        }
    }
    if (!report.update_ms.empty()) {
        const double n = static_cast<double>(report.update_ms.size());
        report.mean_ms = std::accumulate(report.update_ms.begin(), report.update_ms.end(), 0.0) / n;
        report.median_ms = percentile(report.update_ms, 0.5);
        report.p90_ms = percentile(report.update_ms, 0.9);
        report.p99_ms = percentile(report.update_ms, 0.99);
        report.mean_points = static_cast<double>(std::accumulate(report.update_points.begin(),
                                                                 report.update_points.end(),
                                                                 std::size_t{0})) / n;
    }
    if (repetitions > 0) report.mean_total_ms = total_ms / static_cast<double>(repetitions);
    return report;
}

LatencyReport bench_retrieval(const StullIndex& index, const Query& q, const SamplingConfig& cfg,
                              std::size_t repetitions, std::uint32_t updates) {
    auto report = bench_sampler(
        [&](std::uint64_t run) {
            SamplingConfig c = cfg;
            c.master_seed = derive_seed(cfg.master_seed, {run});
            return std::make_unique<SamplingSession>(index, q, c);
        },
        repetitions, updates);
    report.label = "stull";
    return report;
}

void write_latency_csv(std::ostream& out, std::span<const LatencyReport> reports) {
    out << "label,repetitions,updates,mean_ms,median_ms,p90_ms,p99_ms,mean_total_ms,mean_points\n";
    for (const auto& r : reports) {
        out << r.label << ',' << r.repetitions << ',' << r.updates << ',' << r.mean_ms << ','
            << r.median_ms << ',' << r.p90_ms << ',' << r.p99_ms << ',' << r.mean_total_ms << ','
            << r.mean_points << '\n';
    }
}

void SyntheticSpec::validate() const {
    if (!extent.valid()) throw ConfigError("synthetic extent is empty");
    if (time_span <= 0) throw ConfigError("synthetic time span must be positive");
    if (hour_concentration < 0.0 || hour_concentration > 1.0) {
        throw ConfigError("hour concentration must be in [0, 1]");
    }
    if (uniform_fraction > 1.0) throw ConfigError("uniform fraction must be <= 1");
    for (const auto& c : clusters) {
        if (!(c.spread > 0.0) || !(c.weight > 0.0)) throw ConfigError("cluster spread and weight must be positive");
        if (c.peak_hour < 0 || c.peak_hour > 23) throw ConfigError("cluster peak hour must be in 0..23");
    }
}

std::vector<GeoPoint> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SplitMix64 rng(spec.seed);
    const SpatialRect& ext = spec.extent;
    const bool scattered = spec.mode == SyntheticMode::scattered;

    std::vector<ClusterSpec> clusters = spec.clusters;
    if (clusters.empty()) {
        const std::size_t k = spec.cluster_count ? spec.cluster_count : (scattered ? 150 : 6);
        const double scale = std::min(ext.width(), ext.height());
        for (std::size_t i = 0; i < k; ++i) {
            ClusterSpec c;
            c.x = ext.min_x + (0.05 + 0.9 * rng.uniform()) * ext.width();
            c.y = ext.min_y + (0.05 + 0.9 * rng.uniform()) * ext.height();
            c.spread = scale * (scattered ? 0.02 + 0.04 * rng.uniform() : 0.01 + 0.03 * rng.uniform());
            // heavy-tailed weights in clustered mode, flat in scattered mode
            c.weight = scattered ? 0.5 + rng.uniform() : std::pow(0.02 + rng.uniform(), 3.0);
            c.peak_hour = static_cast<int>(rng.bounded(24));
            clusters.push_back(c);
        }
    }
    const double uniform_share =
        spec.uniform_fraction >= 0.0 ? spec.uniform_fraction : (scattered ? 0.3 : 0.0);

    std::vector<double> weights;
    for (const auto& c : clusters) weights.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::int64_t days = std::max<std::int64_t>(1, spec.time_span / kSecondsPerDay);
    auto timestamp = [&](int peak_hour, bool concentrated) {
        for (;;) {
            const auto day = static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(days)));
            std::int64_t hour;
            if (concentrated) {
                hour = static_cast<std::int64_t>(std::lround(peak_hour + 2.5 * gauss(rng)));
                hour = ((hour % 24) + 24) % 24;
            } else {
                hour = static_cast<std::int64_t>(rng.bounded(24));
            }
            const auto sec = static_cast<std::int64_t>(rng.bounded(kSecondsPerHour));
            const std::int64_t offset = day * kSecondsPerDay + hour * kSecondsPerHour + sec;
            if (offset < spec.time_span) return spec.time_start + offset;
        }
    };

    std::vector<GeoPoint> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        double x;
        double y;
        std::int64_t t;
        if (rng.uniform() < uniform_share || clusters.empty()) {
            x = ext.min_x + rng.uniform() * ext.width();
            y = ext.min_y + rng.uniform() * ext.height();
            t = timestamp(0, false);
        } else {
            const ClusterSpec& c = clusters[pick(rng)];
            do {
                x = c.x + c.spread * gauss(rng);
                y = c.y + c.spread * gauss(rng);
            } while (x < ext.min_x || x >= ext.max_x || y < ext.min_y || y >= ext.max_y);
            t = timestamp(c.peak_hour, rng.uniform() < spec.hour_concentration);
        }
        out.emplace_back(static_cast<std::uint64_t>(i), x, y, t);
    }
    return out;
}

std::vector<MetricRecord> run_accuracy(std::span<const GeoPoint> points, const Query& q,
                                       const AccuracySetup& setup, const std::string& dataset) {
    setup.index.validate();
    const std::uint32_t total = setup.index.height * setup.updates_per_level;
    const double bw = setup.bandwidth > 0.0 ? setup.bandwidth : default_bandwidth(setup.index.extent);
    const QueryRegion region = resolve_query(q, setup.index.extent);

    std::vector<GeoPoint> exact;
    for (const GeoPoint& p : points) {
        if (region.matches(p)) exact.push_back(p);
    }
    const DensityGrid exact_grid = kde_grid(exact, setup.index.extent, setup.grid_rows, setup.grid_cols, bw);
    const HourHistogram exact_hours = hourly_histogram(exact);

    std::vector<std::pair<double, std::uint32_t>> checkpoints;
    for (double f : setup.fractions) {
        const auto k = static_cast<std::uint32_t>(std::clamp<long>(std::lround(f * total), 1, total));
        checkpoints.emplace_back(f, k);
    }
    std::sort(checkpoints.begin(), checkpoints.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });

    std::unique_ptr<QuadTreeIndex> tree;
    std::vector<MetricRecord> records;
    for (const std::string& name : setup.samplers) {
        for (std::uint64_t seed : setup.seeds) {
            std::unique_ptr<StullIndex> stull_index;
            std::unique_ptr<FixedBufferIndex> fixed_index;
            std::unique_ptr<IncrementalSampler> sampler;
            if (name == "stull") {
                stull_index = std::make_unique<StullIndex>(build_index(points, setup.index, seed));
                SamplingConfig cfg{setup.updates_per_level, seed};
                sampler = std::make_unique<SamplingSession>(*stull_index, q, cfg);
            } else if (name == "randompath") {
                if (!tree) tree = std::make_unique<QuadTreeIndex>(QuadTreeIndex::build(points, setup.index));
                sampler = std::make_unique<RandomPathSession>(*tree, q, total, seed);
            } else if (name == "fixedbuffer") {
                fixed_index = std::make_unique<FixedBufferIndex>(
                    FixedBufferIndex::build(points, setup.index, setup.buffer_size, seed));
                sampler = std::make_unique<FixedBufferSession>(*fixed_index, q, total);
            } else {
                throw ConfigError("unknown sampler '" + name + "'");
            }

            std::vector<GeoPoint> cumulative;
            std::uint32_t done = 0;
            for (const auto& [fraction, k] : checkpoints) {
                while (done < k) {
                    auto batch = sampler->next_update();
                    cumulative.insert(cumulative.end(), batch.points.begin(), batch.points.end());
                    ++done;
                }
                const DensityGrid grid =
                    kde_grid(cumulative, setup.index.extent, setup.grid_rows, setup.grid_cols, bw);
                records.push_back({"kde_rmse", name, dataset, fraction, seed,
                                   rmse_masked(grid, exact_grid, setup.mask_threshold)});
                records.push_back({"hour_rmse", name, dataset, fraction, seed,
                                   rmse_hourly(hourly_histogram(cumulative), exact_hours)});
                records.push_back({"sample_size", name, dataset, fraction, seed,
                                   static_cast<double>(cumulative.size())});
            }
        }
    }
    return records;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records) {
    out << "metric,sampler,dataset,theta,seed,value\n";
    for (const auto& r : records) {
        out << r.metric << ',' << r.sampler << ',' << r.dataset << ',' << r.theta << ',' << r.seed
            << ',' << r.value << '\n';
    }
}

std::string metrics_summary_json(std::span<const MetricRecord> records) {
    std::map<std::tuple<std::string, std::string, std::string, double>, std::pair<double, std::size_t>> groups;
    for (const auto& r : records) {
        auto& g = groups[{r.metric, r.sampler, r.dataset, r.theta}];
        g.first += r.value;
        ++g.second;
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, acc] : groups) {
        const auto& [metric, sampler, dataset, theta] = key;
        rows.push_back({{"metric", metric},
                        {"sampler", sampler},
                        {"dataset", dataset},
                        {"theta", theta},
                        {"runs", acc.second},
                        {"mean", acc.first / static_cast<double>(acc.second)}});
    }
    return nlohmann::json{{"summary", rows}}.dump(2);
}

double mean_metric(std::span<const MetricRecord> records, const std::string& metric,
                   const std::string& sampler, double theta) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
        if (r.metric == metric && r.sampler == sampler && std::abs(r.theta - theta) < 1e-12) {
            sum += r.value;
            ++n;
        }
    }
    if (n == 0) throw Error("no records for " + metric + "/" + sampler);
    return sum / static_cast<double>(n);
}

}  // namespace stull

// Command-line front end: data generation, index build/insert/inspection,
// sampling, accuracy and latency experiments, and the HTTP service.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <limits>

#include "stull/evaluation.hpp"
#include "stull/invariants.hpp"
#include "stull/io.hpp"
#include "stull/sampler.hpp"
#include "stull/service.hpp"

namespace {

using namespace stull;

struct QueryArgs {
    std::vector<double> rect;
    std::vector<std::int64_t> time;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--rect", rect, "min_x min_y max_x max_y (default: whole extent)")->expected(4);
        cmd->add_option("--time", time, "start end, epoch seconds (default: all time)")->expected(2);
    }
    Query resolve(const SpatialRect& extent) const {
        Query q{extent, {std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::max()}};
        if (rect.size() == 4) q.rect = {rect[0], rect[1], rect[2], rect[3]};
        if (time.size() == 2) q.time = {time[0], time[1]};
        if (!q.rect.valid() || !q.time.valid()) throw ConfigError("query rect/time must have min < max");
        return q;
    }
};

AppConfig config_or_default(const std::string& path) {
    return path.empty() ? AppConfig{} : load_config(path);
}

std::vector<GeoPoint> ingest(const std::string& path) {
    auto result = read_points(path, format_for_path(path));
    const auto& r = result.report;
    std::cerr << "read " << r.rows << " rows: " << r.accepted << " accepted, " << r.rejected
              << " rejected\n";
    for (const auto& why : r.reasons) std::cerr << "  " << why << '\n';
    if (r.accepted == 0) std::cerr << "warning: no usable rows in " << path << '\n';
    return std::move(result.points);
}

void print_index_summary(const StullIndex& index) {
    const auto& c = index.config();
    std::cout << "height " << c.height << ", bin interval " << c.bin_interval << " s, origin "
              << c.origin_time << "\nextent [" << c.extent.min_x << ", " << c.extent.min_y << "] - ["
              << c.extent.max_x << ", " << c.extent.max_y << "]\n"
              << index.bins().size() << " bins, " << index.size() << " points\n";
    for (const auto& [i, bin] : index.bins()) {
        std::cout << "  bin " << i << " [" << bin.range.start << ", " << bin.range.end << "): " << bin.count
                  << " points, checksum " << std::hex << structural_checksum(bin) << std::dec << '\n';
    }
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unbiased online sampling over spatiotemporal point data"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("-c,--config", config_path, "JSON configuration file");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic point set");
    std::string gen_mode = "clustered";
    std::string gen_out;
    SyntheticSpec spec;
    std::vector<double> gen_extent;
    gen->add_option("--mode", gen_mode)->check(CLI::IsMember({"clustered", "scattered"}));
    gen->add_option("-n,--count", spec.count)->required();
    gen->add_option("--seed", spec.seed);
    gen->add_option("--clusters", spec.cluster_count, "number of clusters (0 = mode default)");
    gen->add_option("--start", spec.time_start, "first timestamp");
    gen->add_option("--span", spec.time_span, "time span in seconds");
    gen->add_option("--extent", gen_extent, "min_x min_y max_x max_y (default: config extent)")->expected(4);
    gen->add_option("-o,--out", gen_out, ".csv or .ndjson")->required();

    // build
    auto* build = app.add_subcommand("build", "Build an index from a point file");
    std::string build_in;
    std::string build_out;
    std::optional<std::uint64_t> build_seed;
    build->add_option("-i,--input", build_in)->required()->check(CLI::ExistingFile);
    build->add_option("-o,--out", build_out)->required();
    build->add_option("--seed", build_seed, "shuffle seed (default: config build_seed)");

    // insert
    auto* ins = app.add_subcommand("insert", "Insert points into a saved index");
    std::string ins_index;
    std::string ins_in;
    std::string ins_out;
    std::uint64_t ins_seed = 1;
    ins->add_option("--index", ins_index)->required()->check(CLI::ExistingFile);
    ins->add_option("-i,--input", ins_in)->required()->check(CLI::ExistingFile);
    ins->add_option("-o,--out", ins_out, "default: overwrite --index");
    ins->add_option("--seed", ins_seed);

    // info
    auto* info = app.add_subcommand("info", "Summarize a saved index and check its invariants");
    std::string info_index;
    info->add_option("--index", info_index)->required()->check(CLI::ExistingFile);

    // sample
    auto* sample = app.add_subcommand("sample", "Run an incremental sampling session");
    std::string sample_index;
    std::string sample_out;
    QueryArgs sample_q;
    std::optional<std::uint32_t> sample_u;
    std::optional<std::uint64_t> sample_seed;
    std::uint32_t sample_updates = 0;
    sample->add_option("--index", sample_index)->required()->check(CLI::ExistingFile);
    sample_q.add_to(sample);
    sample->add_option("-U,--updates-per-level", sample_u);
    sample->add_option("--seed", sample_seed);
    sample->add_option("-k,--updates", sample_updates, "stop after k updates (0 = run to exhaustion)");
    sample->add_option("-o,--out", sample_out, "write delivered points (csv/ndjson)");

    // eval
    auto* eval = app.add_subcommand("eval", "KDE and hourly RMSE of every sampler against the exact result");
    std::string eval_in;
    std::string eval_csv;
    std::string eval_json;
    std::string eval_name = "dataset";
    QueryArgs eval_q;
    std::vector<double> eval_fractions{0.05, 0.2, 0.5, 1.0};
    std::vector<std::string> eval_samplers{"stull", "randompath", "fixedbuffer"};
    eval->add_option("-i,--input", eval_in)->required()->check(CLI::ExistingFile);
    eval->add_option("--name", eval_name, "dataset label in the report");
    eval_q.add_to(eval);
    eval->add_option("--fractions", eval_fractions);
    eval->add_option("--samplers", eval_samplers);
    eval->add_option("--csv", eval_csv, "metric,sampler,dataset,theta,seed,value rows");
    eval->add_option("--json", eval_json, "summary of means");

    // bench
    auto* bench = app.add_subcommand("bench", "Per-update retrieval latency");
    std::string bench_index;
    std::string bench_csv;
    QueryArgs bench_q;
    std::vector<std::uint32_t> bench_u{1, 2, 4, 8};
    std::size_t bench_reps = 10;
    std::uint32_t bench_updates = 0;
    bench->add_option("--index", bench_index)->required()->check(CLI::ExistingFile);
    bench_q.add_to(bench);
    bench->add_option("-U,--updates-per-level", bench_u, "one report per value");
    bench->add_option("-r,--repetitions", bench_reps);
    bench->add_option("-k,--updates", bench_updates, "updates timed per run (0 = all)");
    bench->add_option("--csv", bench_csv);

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the /v1 HTTP API");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::vector<std::string> preload;
    serve->add_option("--host", host);
    serve->add_option("-p,--port", port);
    serve->add_option("--load", preload, "index files to register at startup");

    CLI11_PARSE(app, argc, argv);

    try {
        const AppConfig cfg = config_or_default(config_path);

        if (*gen) {
            spec.mode = gen_mode == "scattered" ? SyntheticMode::scattered : SyntheticMode::clustered;
            spec.extent = cfg.index.extent;
            if (gen_extent.size() == 4) spec.extent = {gen_extent[0], gen_extent[1], gen_extent[2], gen_extent[3]};
            const auto points = generate_synthetic(spec);
            write_points(gen_out, points, format_for_path(gen_out));
            std::cout << "wrote " << points.size() << " points to " << gen_out << '\n';
        } else if (*build) {
            const auto points = ingest(build_in);
            const auto start = std::chrono::steady_clock::now();
            const StullIndex index = build_index(points, cfg.index, build_seed.value_or(cfg.build_seed));
            const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            save_index(index, build_out);
            std::cout << "built " << index.size() << " points into " << index.bins().size() << " bins in "
                      << ms << " ms; saved to " << build_out << '\n';
        } else if (*ins) {
            StullIndex index = load_index(ins_index);
            const auto points = ingest(ins_in);
            const InsertReport rep = insert_points(index, points, ins_seed);
            save_index(index, ins_out.empty() ? ins_index : ins_out);
            std::cout << "inserted " << points.size() << " points, " << rep.bins_touched << " bins touched in "
                      << std::chrono::duration<double, std::milli>(rep.elapsed).count() << " ms\n";
        } else if (*info) {
            const StullIndex index = load_index(info_index);
            print_index_summary(index);
            const InvariantReport rep = check_invariants(index);
            if (rep.ok()) {
                std::cout << "invariants: ok\n";
            } else {
                std::cout << "invariants: " << rep.violations.size() << " violations\n";
                for (std::size_t i = 0; i < std::min<std::size_t>(rep.violations.size(), 20); ++i) {
                    std::cout << "  " << rep.violations[i] << '\n';
                }
                return 2;
            }
        } else if (*sample) {
            const StullIndex index = load_index(sample_index);
            SamplingConfig sc = cfg.sampling;
            if (sample_u) sc.updates_per_level = *sample_u;
            if (sample_seed) sc.master_seed = *sample_seed;
            SamplingSession session(index, sample_q.resolve(index.config().extent), sc);
            std::cout << "query level " << session.query_level() << ", " << session.cursors().size()
                      << " bins, " << session.total_updates() << " updates\n";
            std::vector<GeoPoint> delivered;
            while (!session.exhausted() && (sample_updates == 0 || session.updates_done() < sample_updates)) {
                const SampleBatch b = session.next_update();
                delivered.insert(delivered.end(), b.points.begin(), b.points.end());
                std::cout << "update " << b.update_number << ": " << b.points.size() << " points, "
                          << b.fraction_complete * 100.0 << "% complete" << (b.exhausted ? ", exhausted" : "")
                          << '\n';
            }
            if (!sample_out.empty()) write_points(sample_out, delivered, format_for_path(sample_out));
        } else if (*eval) {
            const auto points = ingest(eval_in);
            AccuracySetup setup;
            setup.index = cfg.index;
            setup.updates_per_level = cfg.sampling.updates_per_level;
            setup.buffer_size = cfg.evaluation.buffer_size;
            setup.grid_rows = cfg.evaluation.grid_rows;
            setup.grid_cols = cfg.evaluation.grid_cols;
            setup.bandwidth = cfg.evaluation.bandwidth;
            setup.mask_threshold = cfg.evaluation.mask_threshold;
            setup.seeds = cfg.evaluation.seeds;
            setup.fractions = eval_fractions;
            setup.samplers = eval_samplers;
            const auto records = run_accuracy(points, eval_q.resolve(cfg.index.extent), setup, eval_name);
            if (!eval_csv.empty()) {
                std::ofstream out(eval_csv);
                write_metrics_csv(out, records);
            } else {
                write_metrics_csv(std::cout, records);
            }
            if (!eval_json.empty()) std::ofstream(eval_json) << metrics_summary_json(records) << '\n';
        } else if (*bench) {
            const StullIndex index = load_index(bench_index);
            const Query q = bench_q.resolve(index.config().extent);
            std::vector<LatencyReport> reports;
            for (std::uint32_t u : bench_u) {
                SamplingConfig sc = cfg.sampling;
                sc.updates_per_level = u;
                auto r = bench_retrieval(index, q, sc, bench_reps, bench_updates);
                r.label = "stull_U" + std::to_string(u);
                reports.push_back(std::move(r));
            }
            if (!bench_csv.empty()) {
                std::ofstream out(bench_csv);
                write_latency_csv(out, reports);
            }
            write_latency_csv(std::cout, reports);
        } else if (*serve) {
            ServiceOptions opts;
            opts.defaults = cfg;
            Service service(opts);
            for (const auto& path : preload) {
                std::cout << "loaded " << path << " as dataset " << service.add_dataset(load_index(path), cfg) << '\n';
            }
            httplib::Server server;
            service.register_routes(server);
            g_server = &server;
            std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
            std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
            std::cout << "listening on http://" << host << ':' << port << "/v1\n" << std::flush;
            if (!server.listen(host, port)) {
                std::cerr << "cannot listen on " << host << ':' << port << '\n';
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

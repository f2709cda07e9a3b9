#include "stull/service.hpp"

#include <cstdio>
#include <limits>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "stull/evaluation.hpp"

namespace stull {

using nlohmann::json;

struct Service::Dataset {
    std::string id;
    AppConfig config;

    std::mutex mu;
    std::condition_variable cv;
    std::string status = "building";
    std::string error;
    std::unique_ptr<StullIndex> index;
    std::shared_ptr<const QuadTreeIndex> tree;
    std::shared_ptr<const FixedBufferIndex> fixed;
    std::size_t readers = 0;
    bool writing = false;
    std::uint64_t inserts = 0;
};

struct Service::Session {
    std::string id;
    std::shared_ptr<Dataset> dataset;
    std::string sampler;
    Query query;
    SpatialRect view;

    std::mutex mu;
    std::shared_ptr<const QuadTreeIndex> tree;
    std::shared_ptr<const FixedBufferIndex> fixed;
    std::unique_ptr<IncrementalSampler> cursor;
    std::vector<GeoPoint> delivered;
    ServiceOptions::Clock::time_point last_access;
    bool leased = false;
};

namespace {

json point_json(const GeoPoint& p) { return {{"id", p.id}, {"x", p.x}, {"y", p.y}, {"t", p.t}}; }

std::vector<GeoPoint> points_from_json(const json& arr) {
    if (!arr.is_array()) throw ConfigError("'points' must be an array");
    std::vector<GeoPoint> out;
    out.reserve(arr.size());
    for (const auto& p : arr) {
        if (!p.is_object() || !p.contains("id") || !p.contains("x") || !p.contains("y") || !p.contains("t")) {
            throw ConfigError("every point needs id, x, y and t");
        }
        out.emplace_back(p.at("id").get<std::uint64_t>(), p.at("x").get<double>(),
                         p.at("y").get<double>(), p.at("t").get<std::int64_t>());
    }
    return out;
}

std::vector<GeoPoint> all_points(const StullIndex& index) {
    std::vector<GeoPoint> out;
    out.reserve(index.size());
    for (const auto& [_, bin] : index.bins()) {
        for (const auto& leaf : bin.pyramid.leaves()) out.insert(out.end(), leaf.data.begin(), leaf.data.end());
    }
    return out;
}

StullIndex build_from_source(const json& source, const AppConfig& cfg) {
    const std::string type = source.value("type", "");
    if (type == "synthetic") {
        SyntheticSpec spec;
        spec.mode = source.value("mode", "clustered") == "scattered" ? SyntheticMode::scattered
                                                                       : SyntheticMode::clustered;
        spec.count = source.value("count", std::size_t{0});
        spec.seed = source.value("seed", std::uint64_t{1});
        spec.extent = cfg.index.extent;
        spec.time_start = source.value("time_start", cfg.index.origin_time);
        spec.time_span = source.value("time_span", std::int64_t{7 * kSecondsPerDay});
        const auto points = generate_synthetic(spec);
        return build_index(points, cfg.index, cfg.build_seed);
    }
    if (type == "file") {
        const std::string path = source.at("path").get<std::string>();
        const std::string fmt = source.value("format", "");
        const PointFormat format = fmt.empty() ? format_for_path(path)
                                               : (fmt == "ndjson" ? PointFormat::ndjson : PointFormat::csv);
        const auto result = read_points(path, format);
        return build_index(result.points, cfg.index, cfg.build_seed);
    }
    if (type == "index") return load_index(source.at("path").get<std::string>());
    if (type == "points") return build_index(points_from_json(source.at("points")), cfg.index, cfg.build_seed);
    throw ConfigError("source.type must be synthetic, file, index or points");
}

const char* code_for(int status) {
    switch (status) {
        case 400: return "bad_request";
        case 404: return "not_found";
        case 409: return "conflict";
        case 410: return "gone";
        default: return "internal";
    }
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)) {}

Service::~Service() {
    for (auto& job : jobs_) {
        if (job.joinable()) job.join();
    }
}

std::string Service::make_id(const char* prefix) {
    static thread_local std::mt19937_64 salt{std::random_device{}()};
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%llu-%08llx", prefix, static_cast<unsigned long long>(next_id_++),
                  static_cast<unsigned long long>(salt() & 0xffffffffULL));
    return buf;
}

Service::Response Service::error(int status, const std::string& message, int retry_after) const {
    return {status, json{{"code", code_for(status)}, {"message", message}}.dump(), retry_after};
}

std::string Service::add_dataset(StullIndex index, const AppConfig& config) {
    auto ds = std::make_shared<Dataset>();
    ds->config = config;
    ds->config.index = index.config();
    ds->index = std::make_unique<StullIndex>(std::move(index));
    ds->status = "ready";
    std::lock_guard lock(mu_);
    ds->id = make_id("d");
    datasets_[ds->id] = ds;
    return ds->id;
}

bool Service::wait_ready(const std::string& id) {
    auto ds = find_dataset(id);
    if (!ds) return false;
    std::unique_lock lock(ds->mu);
    ds->cv.wait(lock, [&] { return ds->status != "building"; });
    return true;
}

std::shared_ptr<Service::Dataset> Service::find_dataset(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = datasets_.find(id);
    return it == datasets_.end() ? nullptr : it->second;
}

std::shared_ptr<Service::Session> Service::find_session(const std::string& sid, bool& gone) {
    reap_expired();
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(sid);
    gone = it == sessions_.end() && retired_.contains(sid);
    return it == sessions_.end() ? nullptr : it->second;
}

void Service::release(Session& s) {
    if (!s.leased) return;
    s.leased = false;
    std::lock_guard lock(s.dataset->mu);
    --s.dataset->readers;
    s.dataset->cv.notify_all();
}

std::size_t Service::reap_expired() {
    const auto now = options_.now();
    std::vector<std::shared_ptr<Session>> dropped;
    {
        std::lock_guard lock(mu_);
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            Session& s = *it->second;
            std::unique_lock session_lock(s.mu, std::try_to_lock);
            if (session_lock.owns_lock() && now - s.last_access > options_.session_ttl) {
                retired_.insert(it->first);
                dropped.push_back(it->second);
                it = sessions_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& s : dropped) {
        std::lock_guard lock(s->mu);
        release(*s);
    }
    return dropped.size();
}

std::size_t Service::open_session_count() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

Service::Response Service::create_dataset(const std::string& body) {
    json doc;
    AppConfig cfg = options_.defaults;
    try {
        doc = json::parse(body);
        if (!doc.is_object() || !doc.contains("source") || !doc["source"].is_object()) {
            return error(400, "body needs a 'source' object");
        }
        const std::string type = doc["source"].value("type", "");
        if (type != "synthetic" && type != "file" && type != "index" && type != "points") {
            return error(400, "source type must be synthetic, file, index or points");
        }
        if (doc.contains("config")) cfg = parse_config(doc["config"].dump());
    } catch (const json::exception& e) {
        return error(400, std::string("malformed body: ") + e.what());
    } catch (const Error& e) {
        return error(400, e.what());
    }

    auto ds = std::make_shared<Dataset>();
    ds->config = cfg;
    {
        std::lock_guard lock(mu_);
        ds->id = make_id("d");
        datasets_[ds->id] = ds;
        jobs_.emplace_back([ds, source = doc["source"], cfg] {
            std::unique_ptr<StullIndex> built;
            std::string failure;
            try {
                built = std::make_unique<StullIndex>(build_from_source(source, cfg));
            } catch (const std::exception& e) {
                failure = e.what();
            }
            std::lock_guard lock(ds->mu);
            if (built) {
                ds->config.index = built->config();
                ds->index = std::move(built);
                ds->status = "ready";
            } else {
                ds->status = "failed";
                ds->error = failure;
            }
            ds->cv.notify_all();
        });
    }
    return {202, json{{"id", ds->id}, {"status", "building"}}.dump()};
}

Service::Response Service::dataset_status(const std::string& id) {
    auto ds = find_dataset(id);
    if (!ds) return error(404, "unknown dataset '" + id + "'");
    std::lock_guard lock(ds->mu);
    json out{{"id", ds->id}, {"status", ds->status}};
    if (!ds->error.empty()) out["error"] = ds->error;
    if (ds->index) {
        const auto& c = ds->index->config();
        out["size"] = ds->index->size();
        out["bins"] = ds->index->bins().size();
        out["height"] = c.height;
        out["bin_interval"] = c.bin_interval;
        out["origin_time"] = c.origin_time;
        out["extent"] = {c.extent.min_x, c.extent.min_y, c.extent.max_x, c.extent.max_y};
        out["open_sessions"] = ds->readers;
        out["inserts"] = ds->inserts;
    }
    return {200, out.dump()};
}

Service::Response Service::insert(const std::string& id, const std::string& body) {
    auto ds = find_dataset(id);
    if (!ds) return error(404, "unknown dataset '" + id + "'");
    std::vector<GeoPoint> points;
    try {
        const json doc = json::parse(body);
        if (!doc.is_object() || !doc.contains("points")) return error(400, "body needs a 'points' array");
        points = points_from_json(doc["points"]);
    } catch (const json::exception& e) {
        return error(400, std::string("malformed body: ") + e.what());
    } catch (const Error& e) {
        return error(400, e.what());
    }

    {
        std::lock_guard lock(ds->mu);
        if (ds->status != "ready") return error(409, "dataset is not ready", options_.retry_after_seconds);
        if (ds->writing) return error(409, "another insert is in progress", options_.retry_after_seconds);
        ds->writing = true;
    }
    const auto deadline = std::chrono::steady_clock::now() + options_.insert_wait;
    std::unique_lock lock(ds->mu);
    while (ds->readers > 0) {
        if (std::chrono::steady_clock::now() >= deadline) {
            ds->writing = false;
            ds->cv.notify_all();
            return error(409, "open sessions did not finish in time", options_.retry_after_seconds);
        }
        ds->cv.wait_for(lock, std::chrono::milliseconds(20));
        lock.unlock();
        reap_expired();
        lock.lock();
    }

    Response out;
    try {
        const auto seed = derive_seed(ds->config.build_seed, {++ds->inserts});
        const InsertReport rep = insert_points(*ds->index, points, seed);
        ds->tree.reset();
        ds->fixed.reset();
        out = {200, json{{"bins_touched", rep.bins_touched},
                         {"touched", rep.touched},
                         {"inserted", points.size()},
                         {"elapsed_ms", std::chrono::duration<double, std::milli>(rep.elapsed).count()}}
                        .dump()};
    } catch (const InvalidPointError& e) {
        out = error(400, e.what());
    }
    ds->writing = false;
    ds->cv.notify_all();
    return out;
}

Service::Response Service::open(const std::string& id, const std::string& body) {
    auto ds = find_dataset(id);
    if (!ds) return error(404, "unknown dataset '" + id + "'");

    auto session = std::make_shared<Session>();
    std::uint32_t per_level = 0;
    std::uint64_t seed = 0;
    {
        std::lock_guard lock(ds->mu);
        if (ds->status != "ready") return error(409, "dataset is not ready", options_.retry_after_seconds);
        per_level = ds->config.sampling.updates_per_level;
        seed = ds->config.sampling.master_seed;
        try {
            const json doc = body.empty() ? json::object() : json::parse(body);
            if (!doc.is_object()) return error(400, "body must be a JSON object");
            const auto& extent = ds->index->config().extent;
            Query q{extent, {std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::max()}};
            if (doc.contains("rect")) {
                const auto r = doc["rect"].get<std::vector<double>>();
                if (r.size() != 4) return error(400, "rect must be [min_x, min_y, max_x, max_y]");
                q.rect = {r[0], r[1], r[2], r[3]};
            }
            if (doc.contains("time")) {
                const auto t = doc["time"].get<std::vector<std::int64_t>>();
                if (t.size() != 2) return error(400, "time must be [start, end]");
                q.time = {t[0], t[1]};
            }
            if (!q.rect.valid()) return error(400, "rect must have min < max on both axes");
            if (!q.time.valid()) return error(400, "time must have start < end");
            per_level = doc.value("updates_per_level", per_level);
            if (per_level < 1) return error(400, "updates_per_level must be >= 1");
            seed = doc.value("seed", seed);
            session->sampler = doc.value("sampler", std::string("stull"));
            session->query = q;
            session->view = {std::max(q.rect.min_x, extent.min_x), std::max(q.rect.min_y, extent.min_y),
                             std::min(q.rect.max_x, extent.max_x), std::min(q.rect.max_y, extent.max_y)};
            if (!session->view.valid()) session->view = extent;
        } catch (const json::exception& e) {
            return error(400, std::string("malformed body: ") + e.what());
        }
        if (session->sampler != "stull" && session->sampler != "randompath" && session->sampler != "fixedbuffer") {
            return error(400, "sampler must be stull, randompath or fixedbuffer");
        }
        if (ds->writing) return error(409, "an insert is in progress", options_.retry_after_seconds);

        const std::uint32_t total = ds->index->height() * per_level;
        if (session->sampler == "stull") {
            session->cursor = std::make_unique<SamplingSession>(*ds->index, session->query,
                                                                SamplingConfig{per_level, seed});
        } else if (session->sampler == "randompath") {
            if (!ds->tree) ds->tree = std::make_shared<QuadTreeIndex>(
                QuadTreeIndex::build(all_points(*ds->index), ds->index->config()));
            session->tree = ds->tree;
            session->cursor = std::make_unique<RandomPathSession>(*session->tree, session->query, total, seed);
        } else {
            if (!ds->fixed) ds->fixed = std::make_shared<FixedBufferIndex>(FixedBufferIndex::build(
                all_points(*ds->index), ds->index->config(), ds->config.evaluation.buffer_size,
                ds->config.build_seed));
            session->fixed = ds->fixed;
            session->cursor = std::make_unique<FixedBufferSession>(*session->fixed, session->query, total);
        }
        if (!session->cursor->exhausted()) {
            ++ds->readers;
            session->leased = true;
        }
    }
    session->dataset = ds;
    session->last_access = options_.now();
    const std::uint32_t total = session->cursor->total_updates();
    {
        std::lock_guard lock(mu_);
        session->id = make_id("s");
        sessions_[session->id] = session;
    }
    return {201, json{{"session", session->id},
                      {"sampler", session->sampler},
                      {"updates_per_level", per_level},
                      {"total_updates", total},
                      {"theta", 1.0 / total},
                      {"seed", seed}}
                     .dump()};
}

Service::Response Service::next(const std::string& sid) {
    bool gone = false;
    auto s = find_session(sid, gone);
    if (!s) return gone ? error(410, "session expired or closed") : error(404, "unknown session '" + sid + "'");
    std::lock_guard lock(s->mu);
    s->last_access = options_.now();
    if (s->cursor->exhausted()) {
        release(*s);
        return error(410, "session is exhausted");
    }
    const SampleBatch batch = s->cursor->next_update();
    s->delivered.insert(s->delivered.end(), batch.points.begin(), batch.points.end());
    if (batch.exhausted) release(*s);
    json pts = json::array();
    for (const GeoPoint& p : batch.points) pts.push_back(point_json(p));
    return {200, json{{"points", std::move(pts)},
                      {"update_number", batch.update_number},
                      {"fraction_complete", batch.fraction_complete},
                      {"exhausted", batch.exhausted}}
                     .dump()};
}

Service::Response Service::grid(const std::string& sid, std::size_t rows, std::size_t cols) {
    bool gone = false;
    auto s = find_session(sid, gone);
    if (!s) return gone ? error(410, "session expired or closed") : error(404, "unknown session '" + sid + "'");
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) return error(400, "rows and cols must be in 1..4096");
    std::lock_guard lock(s->mu);
    s->last_access = options_.now();
    const DensityGrid g = count_grid(s->delivered, s->view, rows, cols);
    const auto& e = g.extent;
    return {200, json{{"rows", rows},
                      {"cols", cols},
                      {"extent", {e.min_x, e.min_y, e.max_x, e.max_y}},
                      {"points", s->delivered.size()},
                      {"values", g.values}}
                     .dump()};
}

Service::Response Service::hours(const std::string& sid) {
    bool gone = false;
    auto s = find_session(sid, gone);
    if (!s) return gone ? error(410, "session expired or closed") : error(404, "unknown session '" + sid + "'");
    std::lock_guard lock(s->mu);
    s->last_access = options_.now();
    const HourHistogram h = hourly_histogram(s->delivered);
    return {200, json{{"points", s->delivered.size()}, {"values", h.values}}.dump()};
}

Service::Response Service::close(const std::string& sid) {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(sid);
        if (it == sessions_.end()) {
            return retired_.contains(sid) ? error(410, "session expired or closed")
                                          : error(404, "unknown session '" + sid + "'");
        }
        s = it->second;
        sessions_.erase(it);
        retired_.insert(sid);
    }
    std::lock_guard lock(s->mu);
    release(*s);
    return {204, ""};
}

void Service::register_routes(httplib::Server& server) {
    auto send = [this](httplib::Response& res, const Response& r) {
        res.status = r.status;
        if (r.retry_after > 0) res.set_header("Retry-After", std::to_string(r.retry_after));
        if (!r.body.empty()) res.set_content(r.body, "application/json");
    };
    auto guarded = [this, send](auto fn) {
        return [this, send, fn](const httplib::Request& req, httplib::Response& res) {
            try {
                send(res, fn(req));
            } catch (const std::exception& e) {
                send(res, error(500, e.what()));
            }
        };
    };
    auto dim = [](const httplib::Request& req, const char* key) -> std::size_t {
        if (!req.has_param(key)) return 64;
        try {
            const long v = std::stol(req.get_param_value(key));
            return v > 0 ? static_cast<std::size_t>(v) : 0;
        } catch (const std::exception&) {
            return 0;
        }
    };

    server.Post("/v1/datasets", guarded([this](const httplib::Request& req) { return create_dataset(req.body); }));
    server.Get(R"(/v1/datasets/([^/]+))",
               guarded([this](const httplib::Request& req) { return dataset_status(req.matches[1]); }));
    server.Post(R"(/v1/datasets/([^/]+)/points)",
                guarded([this](const httplib::Request& req) { return insert(req.matches[1], req.body); }));
    server.Post(R"(/v1/datasets/([^/]+)/sessions)",
                guarded([this](const httplib::Request& req) { return open(req.matches[1], req.body); }));
    server.Get(R"(/v1/sessions/([^/]+)/next)",
               guarded([this](const httplib::Request& req) { return next(req.matches[1]); }));
    server.Get(R"(/v1/sessions/([^/]+)/grid)", guarded([this, dim](const httplib::Request& req) {
                   return grid(req.matches[1], dim(req, "rows"), dim(req, "cols"));
               }));
    server.Get(R"(/v1/sessions/([^/]+)/hours)",
               guarded([this](const httplib::Request& req) { return hours(req.matches[1]); }));
    server.Delete(R"(/v1/sessions/([^/]+))",
                  guarded([this](const httplib::Request& req) { return close(req.matches[1]); }));
}

}  // namespace stull

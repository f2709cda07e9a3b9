#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stull/baselines.hpp"
#include "stull/index.hpp"
#include "stull/io.hpp"
#include "stull/sampler.hpp"

namespace httplib {
class Server;
}

namespace stull {

struct ServiceOptions {
    using Clock = std::chrono::steady_clock;

    /// Idle time after which a session is reclaimed.
    std::chrono::seconds session_ttl{600};
    /// How long an insert waits for open sessions to finish before giving up with 409.
    std::chrono::milliseconds insert_wait{5000};
    /// Seconds suggested in Retry-After on 409 responses.
    int retry_after_seconds = 1;
    /// Defaults for datasets created without a "config" object.
    AppConfig defaults;
    std::function<Clock::time_point()> now = [] { return Clock::now(); };
};

/// Datasets, their indexes and open sampling sessions behind the /v1 HTTP API.
///
/// Each dataset is single-writer: an insert first blocks new sessions, then
/// waits until every session that can still read the index has finished or
/// been deleted. Sessions that are already exhausted no longer count.
class Service {
public:
    explicit Service(ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    void register_routes(httplib::Server& server);

    /// Registers a ready dataset directly (no build job); returns its id.
    std::string add_dataset(StullIndex index, const AppConfig& config);
    /// Blocks until the dataset's build job is done; false if the id is unknown.
    bool wait_ready(const std::string& id);
    /// Drops sessions idle longer than the TTL; returns how many were reclaimed.
    std::size_t reap_expired();
    /// Sessions not yet deleted or reclaimed, exhausted ones included.
    std::size_t open_session_count() const;

    struct Dataset;
    struct Session;

private:
    struct Response {
        int status = 200;
        std::string body;
        int retry_after = 0;
    };

    Response create_dataset(const std::string& body);
    Response dataset_status(const std::string& id);
    Response insert(const std::string& id, const std::string& body);
    Response open(const std::string& id, const std::string& body);
    Response next(const std::string& sid);
    Response grid(const std::string& sid, std::size_t rows, std::size_t cols);
    Response hours(const std::string& sid);
    Response close(const std::string& sid);

    std::shared_ptr<Dataset> find_dataset(const std::string& id) const;
    /// Null with `gone` set when the id belonged to a reclaimed or exhausted-and-deleted session.
    std::shared_ptr<Session> find_session(const std::string& sid, bool& gone);
    Response error(int status, const std::string& message, int retry_after = 0) const;
    std::string make_id(const char* prefix);
    void release(Session& s);

    ServiceOptions options_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Dataset>> datasets_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::set<std::string> retired_;
    std::uint64_t next_id_ = 1;
    std::vector<std::thread> jobs_;
};

}  // namespace stull

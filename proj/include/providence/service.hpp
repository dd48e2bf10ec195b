#pragma once

// JSON-over-HTTP facade. Handlers only decode requests, call the library and
// encode results; no arithmetic happens here.

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "providence/session.hpp"

namespace httplib {
class Server;
}

namespace providence::service {

struct ServiceConfig {
    std::filesystem::path data_dir = "data/service";
    // Empty disables authentication.
    std::string bearer_token;
    unsigned job_workers = 1;
    // Largest trial count a simulation job may request.
    std::int64_t max_trials = 1'000'000;
};

// Error code to HTTP status. Unknown codes map to 500.
int status_for(std::string_view code);

nlohmann::json error_body(std::string_view code, std::string_view message,
                          nlohmann::json details = nlohmann::json::object());

// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string input_hash(const nlohmann::json& canonical);

nlohmann::json openapi_document();

// Simulation jobs run on a small pool of worker threads; finished results
// are cached on disk under <data_dir>/simulations/<hash>.json.
class JobRunner {
public:
    JobRunner(std::filesystem::path dir, unsigned workers);
    ~JobRunner();
    JobRunner(const JobRunner&) = delete;
    JobRunner& operator=(const JobRunner&) = delete;

    // Returns the job id; an identical request reuses the cached job.
    std::string submit(const nlohmann::json& request, std::function<nlohmann::json()> work);
    // {"job_id", "status": queued|running|done|failed, "result" | "error"}.
    std::optional<nlohmann::json> status(const std::string& id) const;
    // Blocks until the queue is empty and no job is running.
    void drain();

private:
    struct Job {
        std::string status = "queued";
        nlohmann::json request;
        nlohmann::json result;
        nlohmann::json error;
        std::function<nlohmann::json()> work;
    };
    void worker_loop();
    std::filesystem::path path_of(const std::string& id) const;

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::condition_variable cv_, idle_cv_;
    std::deque<std::string> queue_;
    std::map<std::string, Job> jobs_;
    unsigned running_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

class AuditService {
public:
    explicit AuditService(ServiceConfig config);
    ~AuditService();

    // Adds every route to `server`.
    void install(httplib::Server& server);

    // Binds and blocks. Address is "host:port".
    void listen(const std::string& address);

    JobRunner& jobs() { return *jobs_; }
    session::SessionStore& sessions() { return *sessions_; }
    session::ContestStore& contests() { return *contests_; }

private:
    ServiceConfig config_;
    std::unique_ptr<session::SessionStore> sessions_;
    std::unique_ptr<session::ContestStore> contests_;
    std::unique_ptr<JobRunner> jobs_;
};

}  // namespace providence::service

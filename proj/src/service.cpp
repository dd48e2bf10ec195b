#include "providence/service.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "httplib.h"
#include "providence/errors.hpp"
#include "providence/json_io.hpp"
#include "providence/queries.hpp"
#include "providence/simulator.hpp"
#include "providence/workload.hpp"

namespace providence::service {

namespace fs = std::filesystem;
using nlohmann::json;

int status_for(std::string_view code) {
    if (code == "domain_error" || code == "parse_error" || code == "bad_request" || code == "invalid_json") return 400;
    if (code == "unauthorized") return 401;
    if (code == "not_found") return 404;
    if (code == "conflict") return 409;
    if (code == "unsupported_media_type") return 415;
    if (code == "schedule_violation" || code == "capacity") return 422;
    return 500;
}

json error_body(std::string_view code, std::string_view message, json details) {
    return {{"error", {{"code", code}, {"message", message}, {"details", std::move(details)}}}};
}

std::string input_hash(const json& canonical) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// JobRunner

JobRunner::JobRunner(fs::path dir, unsigned workers) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    for (unsigned i = 0; i < std::max(1u, workers); ++i) threads_.emplace_back([this] { worker_loop(); });
}

JobRunner::~JobRunner() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
}

fs::path JobRunner::path_of(const std::string& id) const { return dir_ / (id + ".json"); }

std::string JobRunner::submit(const json& request, std::function<json()> work) {
    const std::string id = input_hash(request);
    std::lock_guard lock(mutex_);
    if (auto it = jobs_.find(id); it != jobs_.end() && it->second.status != "failed") return id;
    Job job;
    job.request = request;
    if (fs::exists(path_of(id))) {
        std::ifstream in(path_of(id));
        try {
            const json cached = json::parse(in);
            if (cached.at("request") == request) {
                job.status = "done";
                job.result = cached.at("result");
                jobs_[id] = std::move(job);
                return id;
            }
        } catch (const json::exception&) {
            // Unreadable cache entries are recomputed and overwritten.
        }
    }
    job.work = std::move(work);
    jobs_[id] = std::move(job);
    queue_.push_back(id);
    cv_.notify_one();
    return id;
}

std::optional<json> JobRunner::status(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) {
        if (!fs::exists(path_of(id))) return std::nullopt;
        std::ifstream in(path_of(id));
        try {
            const json cached = json::parse(in);
            return json{{"job_id", id}, {"status", "done"}, {"request", cached.at("request")},
                        {"result", cached.at("result")}};
        } catch (const json::exception&) {
            return std::nullopt;
        }
    }
    json out = {{"job_id", id}, {"status", it->second.status}, {"request", it->second.request}};
    if (it->second.status == "done") out["result"] = it->second.result;
    if (it->second.status == "failed") out["error"] = it->second.error;
    return out;
}

void JobRunner::drain() {
    std::unique_lock lock(mutex_);
    idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
}

void JobRunner::worker_loop() {
    for (;;) {
        std::string id;
        std::function<json()> work;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
            Job& job = jobs_[id];
            job.status = "running";
            work = std::move(job.work);
            ++running_;
        }
        json result, error;
        bool ok = true;
        try {
            result = work();
        } catch (const Error& e) {
            ok = false;
            error = error_body(e.code(), e.what())["error"];
        } catch (const std::exception& e) {
            ok = false;
            error = error_body("internal", e.what())["error"];
        }
        std::lock_guard lock(mutex_);
        Job& job = jobs_[id];
        if (ok) {
            try {
                session::atomic_write(path_of(id), json{{"request", job.request}, {"result", result}}.dump());
            } catch (const Error&) {
                // The in-memory result is still served if the cache write fails.
            }
            job.result = std::move(result);
            job.status = "done";
        } else {
            job.error = std::move(error);
            job.status = "failed";
        }
        --running_;
        idle_cv_.notify_all();
    }
}

// ---------------------------------------------------------------------------
// Request helpers

namespace {

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw DomainError(std::string("request body is not valid JSON: ") + e.what());
    }
}

template <class T>
std::optional<T> optional_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

std::string random_id(const char* prefix) {
    static std::mutex m;
    static std::mt19937_64 gen{std::random_device{}()};
    std::lock_guard lock(m);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%012llx", prefix,
                  static_cast<unsigned long long>(gen() & 0xffffffffffffULL));
    return buf;
}

json contest_view(const session::StoredContest& c) {
    json pairs = json::array();
    for (const auto& p : election::derive_named_pairwise(c.results)) {
        json e = json_io::encode(p.contest);
        e["winner"] = p.winner;
        e["loser"] = p.loser;
        pairs.push_back(std::move(e));
    }
    json out = {{"contest", json_io::encode(c.results)}, {"pairs", pairs}};
    out["manifest"] = c.manifest ? json_io::encode(*c.manifest) : json(nullptr);
    return out;
}

json session_view(const session::AuditSessionRecord& r) {
    json out = session::encode(r);
    out["drawn"] = r.drawn();
    out["effective_rounds"] = r.effective_rounds().size();
    return out;
}

void check_version(const json& body, const session::AuditSessionRecord& r) {
    if (auto v = optional_field<std::int64_t>(body, "expected_version"); v && *v != r.version) {
        throw ConflictError("session " + r.session_id + " is at version " + std::to_string(r.version) +
                            ", not " + std::to_string(*v));
    }
}

session::RoundSubmission decode_submission(const json& body, const election::ContestResults& contest) {
    session::RoundSubmission s;
    s.cumulative_n = json_io::require_integer(body, "cumulative_n");
    s.cumulative_k = optional_field<std::int64_t>(body, "cumulative_k");
    if (auto it = body.find("tallies"); it != body.end() && !it->is_null()) {
        if (!it->is_object()) throw DomainError("tallies must be an object of candidate counts");
        std::vector<std::pair<std::string, std::int64_t>> t;
        for (auto e = it->begin(); e != it->end(); ++e) t.emplace_back(e.key(), e.value().get<std::int64_t>());
        s.tallies = std::move(t);
    }
    if (auto it = body.find("selection_order"); it != body.end() && !it->is_null()) {
        if (!it->is_array()) throw DomainError("selection_order must be an array");
        std::vector<std::string> names;
        for (const json& e : *it) {
            if (e.is_string()) {
                names.push_back(e.get<std::string>());
            } else if (e.is_number_integer() && (e == 0 || e == 1)) {
                if (contest.tallies.size() != 2) {
                    throw DomainError("0/1 selection orders need a two-candidate contest");
                }
                const std::size_t w = contest.winner_index();
                names.push_back(contest.tallies[e == 1 ? w : 1 - w].first);
            } else {
                throw DomainError("selection_order entries must be candidate names or 0/1");
            }
        }
        s.selection_order = std::move(names);
    }
    s.correction = optional_field<bool>(body, "correction").value_or(false);
    s.note = optional_field<std::string>(body, "note").value_or("");
    return s;
}

audit::PairwiseContest contest_from_body(const json& body) {
    return queries::contest_from(optional_field<double>(body, "margin"), optional_field<double>(body, "p_a"),
                                 optional_field<double>(body, "relevant_fraction").value_or(1.0));
}

audit::RoundHistory history_from_body(const json& body) {
    auto it = body.find("rounds");
    if (it == body.end() || it->is_null()) return {};
    json q = {{"rounds", *it}, {"alpha", 0.1}, {"margin", 0.5}};
    return queries::decode_risk_query(q).history;
}

}  // namespace

// ---------------------------------------------------------------------------

AuditService::AuditService(ServiceConfig config) : config_(std::move(config)) {
    fs::create_directories(config_.data_dir);
    sessions_ = std::make_unique<session::SessionStore>(config_.data_dir);
    contests_ = std::make_unique<session::ContestStore>(config_.data_dir);
    jobs_ = std::make_unique<JobRunner>(config_.data_dir / "simulations", config_.job_workers);
}

AuditService::~AuditService() = default;

void AuditService::install(httplib::Server& server) {
    using Req = httplib::Request;
    using Res = httplib::Response;
    using Body = std::function<json(const Req&, int&)>;

    auto wrap = [this](Body handler) {
        return [this, handler](const Req& req, Res& res) {
            auto reply = [&](int status, const json& body) {
                res.status = status;
                res.set_content(body.dump(), "application/json");
            };
            try {
                if (!config_.bearer_token.empty() &&
                    req.get_header_value("Authorization") != "Bearer " + config_.bearer_token) {
                    reply(401, error_body("unauthorized", "missing or wrong bearer token"));
                    return;
                }
                if (req.method == "POST" && !req.body.empty() &&
                    req.get_header_value("Content-Type").rfind("application/json", 0) != 0) {
                    reply(415, error_body("unsupported_media_type", "request bodies must be application/json"));
                    return;
                }
                int status = 200;
                const json body = handler(req, status);
                reply(status, body);
            } catch (const planner::CapacityError& e) {
                reply(422, error_body(e.code(), e.what(), {{"best", json_io::encode(e.best())}}));
            } catch (const ParseError& e) {
                reply(400, error_body(e.code(), e.what(), {{"line", e.line()}}));
            } catch (const Error& e) {
                reply(status_for(e.code()), error_body(e.code(), e.what()));
            } catch (const json::exception& e) {
                reply(400, error_body("bad_request", e.what()));
            } catch (const std::exception& e) {
                reply(500, error_body("internal", e.what()));
            }
        };
    };

    server.Get("/health", wrap([](const Req&, int&) { return json{{"status", "ok"}}; }));
    server.Get("/spec", wrap([](const Req&, int&) { return openapi_document(); }));

    // Contests ---------------------------------------------------------------
    server.Post("/contests", wrap([this](const Req& req, int& status) {
        const json body = parse_body(req);
        session::StoredContest c;
        if (auto it = body.find("results_csv"); it != body.end()) {
            c.results = election::parse_results(it->get<std::string>(), json_io::require_string(body, "contest_id"));
        } else {
            c.results = json_io::decode_results(body);
        }
        session::check_identifier(c.results.contest_id, "contest id");
        if (auto it = body.find("manifest"); it != body.end() && !it->is_null()) {
            c.manifest = json_io::decode_manifest(*it);
        } else if (auto csv = body.find("manifest_csv"); csv != body.end() && !csv->is_null()) {
            c.manifest = election::BallotManifest::parse_csv(csv->get<std::string>());
        }
        if (c.manifest && c.manifest->total() != c.results.total_ballots_cast) {
            throw DomainError("manifest holds " + std::to_string(c.manifest->total()) +
                              " ballots but the contest reports " + std::to_string(c.results.total_ballots_cast));
        }
        (void)election::derive_named_pairwise(c.results);
        contests_->create(c);
        status = 201;
        return contest_view(c);
    }));
    server.Get("/contests", wrap([this](const Req&, int&) { return json{{"contests", contests_->list()}}; }));
    server.Get(R"(/contests/([A-Za-z0-9_.\-]+))", wrap([this](const Req& req, int&) {
        return contest_view(contests_->get(req.matches[1]));
    }));

    // Sessions ---------------------------------------------------------------
    server.Post("/audits", wrap([this](const Req& req, int& status) {
        const json body = parse_body(req);
        const auto contest = contests_->get(json_io::require_string(body, "contest_id"));
        const std::string id = optional_field<std::string>(body, "session_id").value_or(random_id("audit-"));
        auto record = session::new_session(
            id, contest.results, json_io::require_number(body, "alpha"),
            audit::parse_audit_kind(optional_field<std::string>(body, "audit_kind").value_or("providence")),
            optional_field<std::uint64_t>(body, "seed").value_or(0), session::utc_timestamp());
        if (auto m = optional_field<double>(body, "minerva_multiplier")) {
            if (!(*m > 1.0)) throw DomainError("minerva_multiplier must exceed 1");
            record.minerva_multiplier = *m;
        }
        sessions_->create(record);
        status = 201;
        return session_view(record);
    }));
    server.Get("/audits", wrap([this](const Req&, int&) { return json{{"audits", sessions_->list()}}; }));
    server.Get(R"(/audits/([A-Za-z0-9_.\-]+))", wrap([this](const Req& req, int&) {
        return session_view(sessions_->load(req.matches[1]));
    }));
    server.Post(R"(/audits/([A-Za-z0-9_.\-]+)/plan)", wrap([this](const Req& req, int&) {
        const json body = parse_body(req);
        session::PlanRequest pr;
        pr.target_p = optional_field<double>(body, "target_p");
        pr.misleading_limit = optional_field<double>(body, "misleading_limit");
        pr.max_n = optional_field<std::int64_t>(body, "max_n").value_or(pr.max_n);
        auto [record, plan] = sessions_->update(req.matches[1], [&](session::AuditSessionRecord& r) {
            check_version(body, r);
            return session::plan_next_round(r, pr);
        });
        json out = session::encode(plan);
        out["version"] = record.version;
        return out;
    }));
    server.Post(R"(/audits/([A-Za-z0-9_.\-]+)/rounds)", wrap([this](const Req& req, int& status) {
        const json body = parse_body(req);
        auto [record, verdict] = sessions_->update(req.matches[1], [&](session::AuditSessionRecord& r) {
            check_version(body, r);
            return session::submit_round(r, decode_submission(body, r.contest));
        });
        status = 201;
        json out = session::encode(verdict);
        out["status"] = session::to_string(record.status);
        out["version"] = record.version;
        out["round_index"] = record.rounds.size();
        return out;
    }));
    server.Post(R"(/audits/([A-Za-z0-9_.\-]+)/close)", wrap([this](const Req& req, int&) {
        const json body = parse_body(req);
        const auto target = session::parse_status(json_io::require_string(body, "status"));
        auto record = sessions_->update(req.matches[1], [&](session::AuditSessionRecord& r) {
            check_version(body, r);
            session::close_session(r, target);
        });
        return session_view(record);
    }));
    server.Get(R"(/audits/([A-Za-z0-9_.\-]+)/sample)", wrap([this](const Req& req, int&) {
        const auto record = sessions_->load(req.matches[1]);
        const auto contest = contests_->get(record.contest_id);
        if (!contest.manifest) throw DomainError("contest " + record.contest_id + " has no ballot manifest");
        if (!req.has_param("count")) throw DomainError("query parameter 'count' is required");
        const std::int64_t count = std::stoll(req.get_param_value("count"));
        const std::int64_t from =
            req.has_param("from") ? std::stoll(req.get_param_value("from")) : record.drawn();
        json draws = json::array();
        for (const auto& b : election::draw_sample(*contest.manifest, count, record.seed, from)) {
            draws.push_back(json_io::encode(b));
        }
        return json{{"session_id", record.session_id}, {"seed", record.seed}, {"from", from}, {"draws", draws}};
    }));

    // Stateless computations ---------------------------------------------------
    server.Post("/risk", wrap([](const Req& req, int&) {
        const auto q = queries::decode_risk_query(parse_body(req));
        return json{{"verdict", json_io::encode(queries::evaluate(q))}};
    }));
    server.Post("/kmin", wrap([](const Req& req, int&) {
        const json body = parse_body(req);
        const auto contest = contest_from_body(body);
        const audit::RiskLimit alpha(json_io::require_number(body, "alpha"));
        const auto h = history_from_body(body);
        const std::int64_t n = json_io::require_integer(body, "n");
        const auto kind = audit::parse_audit_kind(optional_field<std::string>(body, "audit_kind").value_or("providence"));
        std::int64_t kmin = 0;
        if (kind == audit::AuditKind::Providence) {
            kmin = audit::providence_kmin(h.last_k(), h.last_n(), n, contest, alpha);
        } else if (kind == audit::AuditKind::EorBravo || kind == audit::AuditKind::SoBravo) {
            kmin = audit::bravo_kmin(n, contest, alpha);
        } else {
            auto schedule = h.cumulative_n();
            schedule.push_back(n);
            kmin = audit::MinervaAudit(contest, alpha, schedule).kmins().back();
        }
        return json{{"kmin", kmin}, {"n", n}};
    }));
    server.Post("/round-size", wrap([](const Req& req, int&) {
        const json body = parse_body(req);
        const auto contest = contest_from_body(body);
        const audit::RiskLimit alpha(json_io::require_number(body, "alpha"));
        const auto h = history_from_body(body);
        const auto kind = audit::parse_audit_kind(optional_field<std::string>(body, "audit_kind").value_or("providence"));
        planner::PlannerConfig cfg;
        cfg.target_p = json_io::require_number(body, "target_p");
        cfg.max_n = optional_field<std::int64_t>(body, "max_n").value_or(cfg.max_n);
        cfg.misleading_limit = optional_field<double>(body, "misleading_limit");
        const planner::RoundPlan plan =
            kind == audit::AuditKind::Providence || kind == audit::AuditKind::Minerva
                ? planner::next_round_size(h, contest, alpha, cfg)
                : planner::next_round_size_for(kind, h, contest, alpha, cfg.target_p, cfg.max_n);
        return json_io::encode(plan);
    }));
    server.Get("/misleading", wrap([](const Req& req, int&) {
        if (!req.has_param("margin") || !req.has_param("limit")) {
            throw DomainError("query parameters 'margin' and 'limit' are required");
        }
        const double margin = std::stod(req.get_param_value("margin"));
        const double limit = std::stod(req.get_param_value("limit"));
        const std::int64_t n = planner::misleading_min_round_size(margin, limit, 10'000'000);
        const double p_a = audit::PairwiseContest::from_margin(margin).p_a;
        return json{{"n", n},
                    {"misleading_prob",
                     planner::misleading_probability(n, p_a, planner::TieRule::CountsAsMisleading)}};
    }));

    // Simulations ---------------------------------------------------------------
    server.Post("/simulations", wrap([this](const Req& req, int& status) {
        const json body = parse_body(req);
        json canon = json::object();
        sim::SimContest contest;
        std::shared_ptr<election::BallotManifest> manifest;
        if (auto id = optional_field<std::string>(body, "contest_id")) {
            const auto stored = contests_->get(*id);
            contest = sim::SimContest::from_results(stored.results);
            canon["contest"] = json_io::encode(stored.results);
            if (stored.manifest) {
                manifest = std::make_shared<election::BallotManifest>(*stored.manifest);
                canon["manifest"] = json_io::encode(*stored.manifest);
            }
        } else {
            const auto pair = contest_from_body(body);
            contest = sim::SimContest::pairwise(pair);
            canon["pair"] = json_io::encode(pair);
        }
        const double alpha = json_io::require_number(body, "alpha");
        (void)audit::RiskLimit(alpha);
        std::vector<audit::AuditKind> kinds;
        if (auto it = body.find("audit_kinds"); it != body.end()) {
            for (const auto& k : *it) kinds.push_back(audit::parse_audit_kind(k.get<std::string>()));
        } else {
            kinds.push_back(
                audit::parse_audit_kind(optional_field<std::string>(body, "audit_kind").value_or("providence")));
        }
        if (kinds.empty()) throw DomainError("audit_kinds must not be empty");
        const auto trials = optional_field<std::int64_t>(body, "trials").value_or(1000);
        if (trials < 1 || trials > config_.max_trials) {
            throw DomainError("trials must lie in [1, " + std::to_string(config_.max_trials) + "]");
        }
        const auto seed = optional_field<std::uint64_t>(body, "seed").value_or(0);
        const auto max_rounds = optional_field<std::size_t>(body, "max_rounds").value_or(5);
        const std::string hyp = optional_field<std::string>(body, "hypothesis").value_or("H_a");
        if (hyp != "H_a" && hyp != "H_0") throw DomainError("hypothesis must be H_a or H_0");
        const auto hypothesis = hyp == "H_0" ? sim::Hypothesis::Null : sim::Hypothesis::Alternative;
        std::vector<double> grid;
        const bool sweep = body.contains("p_grid");
        if (sweep) {
            grid = body.at("p_grid").is_string() && body.at("p_grid") == "default"
                       ? sim::default_p_grid()
                       : body.at("p_grid").get<std::vector<double>>();
            if (grid.empty()) throw DomainError("p_grid must not be empty");
        } else {
            grid.push_back(optional_field<double>(body, "target_p").value_or(0.9));
        }
        for (double p : grid) {
            if (!(p > 0.0 && p < 1.0)) throw DomainError("target probabilities must lie in (0, 1)");
        }
        json kind_names = json::array();
        for (auto k : kinds) kind_names.push_back(audit::to_string(k));
        canon["alpha"] = alpha;
        canon["kinds"] = kind_names;
        canon["trials"] = trials;
        canon["seed"] = seed;
        canon["max_rounds"] = max_rounds;
        canon["hypothesis"] = hyp;
        canon["grid"] = grid;
        canon["sweep"] = sweep;

        const audit::RiskLimit risk(alpha);
        auto work = [=]() -> json {
            sim::RunOptions opts;
            opts.manifest = manifest.get();
            const auto cells = sim::sweep_p(contest, kinds, grid, risk, trials, seed, opts, max_rounds, hypothesis);
            if (!sweep && kinds.size() == 1) return json{{"report", sim::to_json(cells.front().report)}};
            json out = json::array();
            for (const auto& c : cells) {
                out.push_back({{"kind", audit::to_string(c.kind)}, {"p", c.p}, {"report", sim::to_json(c.report)}});
            }
            return json{{"cells", out}, {"csv", sim::sweep_to_csv(cells)}};
        };
        const std::string id = jobs_->submit(canon, work);
        status = 202;
        return *jobs_->status(id);
    }));
    server.Get(R"(/simulations/([0-9a-f]+))", wrap([this](const Req& req, int&) {
        auto s = jobs_->status(req.matches[1]);
        if (!s) throw NotFoundError("no simulation job " + std::string(req.matches[1]));
        return *s;
    }));

    server.Post("/workload", wrap([this](const Req& req, int&) {
        const json body = parse_body(req);
        json cells_json;
        if (auto id = optional_field<std::string>(body, "job_id")) {
            auto s = jobs_->status(*id);
            if (!s) throw NotFoundError("no simulation job " + *id);
            if ((*s)["status"] != "done") throw ConflictError("simulation job " + *id + " has not finished");
            cells_json = (*s)["result"].at("cells");
        } else {
            cells_json = json_io::require(body, "cells");
        }
        std::vector<sim::SweepCell> cells;
        for (const json& c : cells_json) {
            cells.push_back({audit::parse_audit_kind(json_io::require_string(c, "kind")),
                             json_io::require_number(c, "p"), sim::report_from_json(json_io::require(c, "report"))});
        }
        workload::Objective obj;
        obj.model = workload::parse_model(optional_field<std::string>(body, "model").value_or("workload"));
        const json params = body.value("params", json::object());
        obj.workload = {params.value("w_b", 1.0), params.value("w_r", 0.0), params.value("w_p", 0.0),
                        params.value("constant", 0.0)};
        obj.real_time = {params.value("t_b", 75.0), params.value("t_r", 10800.0), params.value("t_p", 75.0),
                         params.value("constant", 0.0)};
        json values = json::array();
        for (const auto& c : cells) {
            values.push_back({{"kind", audit::to_string(c.kind)}, {"p", c.p}, {"value", workload::evaluate(c.report, obj)}});
        }
        json optima = json::array();
        for (const auto& o : workload::optimal_p(cells, obj)) {
            optima.push_back({{"kind", audit::to_string(o.kind)}, {"p", o.p}, {"value", o.value}});
        }
        return json{{"model", workload::to_string(obj.model)}, {"values", values}, {"optima", optima}};
    }));
}

void AuditService::listen(const std::string& address) {
    httplib::Server server;
    install(server);
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw DomainError("listen address must be host:port");
    const std::string host = address.substr(0, colon);
    const int port = std::stoi(address.substr(colon + 1));
    if (!server.listen(host, port)) throw Error("cannot listen on " + address);
}

// ---------------------------------------------------------------------------

json openapi_document() {
    auto op = [](const char* summary, json responses) {
        return json{{"summary", summary}, {"responses", std::move(responses)}};
    };
    auto r = [](std::initializer_list<std::pair<const char*, const char*>> codes) {
        json out = json::object();
        for (const auto& [code, text] : codes) out[code] = {{"description", text}};
        return out;
    };
    json paths = json::object();
    paths["/health"]["get"] = op("Liveness probe", r({{"200", "ok"}}));
    paths["/spec"]["get"] = op("This document", r({{"200", "OpenAPI document"}}));
    paths["/contests"]["post"] =
        op("Store contest results with an optional ballot manifest",
           r({{"201", "stored; derived pairwise contests"}, {"400", "validation error"}, {"409", "duplicate id"}}));
    paths["/contests"]["get"] = op("List contest ids", r({{"200", "ids"}}));
    paths["/contests/{id}"]["get"] = op("Canonical contest and its pairwise reduction",
                                        r({{"200", "contest"}, {"404", "unknown id"}}));
    paths["/audits"]["post"] = op("Open an audit session for a stored contest",
                                  r({{"201", "session"}, {"400", "validation error"}, {"404", "unknown contest"},
                                     {"409", "duplicate session id"}}));
    paths["/audits"]["get"] = op("List session ids", r({{"200", "ids"}}));
    paths["/audits/{id}"]["get"] = op("Session record", r({{"200", "session"}, {"404", "unknown id"}}));
    paths["/audits/{id}/plan"]["post"] =
        op("Next round size for target_p and/or misleading_limit",
           r({{"200", "plan"}, {"400", "validation error"}, {"409", "closed session or version mismatch"},
              {"422", "target not attainable within max_n"}}));
    paths["/audits/{id}/rounds"]["post"] =
        op("Submit cumulative tallies for the next round or a correction",
           r({{"201", "verdict"}, {"400", "invariant breach"}, {"409", "history conflict or version mismatch"},
              {"422", "minerva schedule violation"}}));
    paths["/audits/{id}/close"]["post"] =
        op("Close a session as escalated_full_count or abandoned", r({{"200", "session"}, {"409", "already closed"}}));
    paths["/audits/{id}/sample"]["get"] =
        op("Ballot draws from the contest manifest (query: count, optional from)",
           r({{"200", "draws"}, {"400", "no manifest or bad count"}}));
    paths["/risk"]["post"] = op("Verdict for a pairwise history", r({{"200", "verdict"}, {"400", "validation error"}}));
    paths["/kmin"]["post"] = op("Minimum winner tally for a round size", r({{"200", "kmin"}}));
    paths["/round-size"]["post"] = op("Round size for a target stopping probability",
                                      r({{"200", "plan"}, {"422", "not attainable"}}));
    paths["/misleading"]["get"] = op("Smallest first round with misleading probability at most limit",
                                     r({{"200", "n"}}));
    paths["/simulations"]["post"] =
        op("Queue a simulation or p sweep; identical inputs share one cached job", r({{"202", "job status"}}));
    paths["/simulations/{id}"]["get"] = op("Poll a simulation job", r({{"200", "job status"}, {"404", "unknown job"}}));
    paths["/workload"]["post"] = op("Costs and per-kind optimal p over a finished sweep",
                                    r({{"200", "values and optima"}, {"409", "job not finished"}}));
    return {{"openapi", "3.0.3"},
            {"info", {{"title", "Ballot-polling audit service"}, {"version", "1.0.0"}}},
            {"components",
             {{"securitySchemes", {{"bearer", {{"type", "http"}, {"scheme", "bearer"}}}}},
              {"schemas",
               {{"ApiError",
                 {{"type", "object"},
                  {"properties",
                   {{"code", {{"type", "string"}}},
                    {"message", {{"type", "string"}}},
                    {"details", {{"type", "object"}}}}}}}}}}},
            {"paths", paths}};
}

}  // namespace providence::service

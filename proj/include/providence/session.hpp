#pragma once

// Live audit sessions. A session stores raw cumulative tallies per round;
// verdicts are derived from them and the stored copies are only snapshots
// that must recompute identically when a session is loaded.
//
// Rounds are append-only. A mistaken round is fixed by appending a
// correction round, which replaces the latest effective round.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "providence/audit.hpp"
#include "providence/election_data.hpp"
#include "providence/planner.hpp"

namespace providence::session {

inline constexpr int kSchemaVersion = 1;

enum class Status { Open, StoppedCorrect, EscalatedFullCount, Abandoned };
std::string_view to_string(Status status);
Status parse_status(std::string_view text);

struct PairVerdict {
    std::string loser;
    audit::AuditVerdict verdict;
    // Effective round in which this pair was confirmed, if it has been.
    std::optional<std::size_t> confirmed_round;

    friend bool operator==(const PairVerdict&, const PairVerdict&) = default;
};

struct VerdictSnapshot {
    audit::AuditVerdict combined;
    std::vector<PairVerdict> pairs;
};

struct PlanSnapshot {
    std::optional<double> target_p;
    std::optional<double> misleading_limit;
    planner::RoundPlan plan;
};

struct SessionRound {
    // Over all ballots drawn, relevant or not.
    std::int64_t cumulative_n = 0;
    // Cumulative per-candidate counts in contest order.
    std::vector<std::pair<std::string, std::int64_t>> tallies;
    // This round's draws in order; entries name a candidate or are empty for
    // a ballot showing none of them.
    std::optional<std::vector<std::string>> selection_order;
    bool correction = false;
    std::string note;
    std::optional<PlanSnapshot> plan;
    VerdictSnapshot verdict;
};

struct AuditSessionRecord {
    int schema_version = kSchemaVersion;
    std::string session_id;
    std::string contest_id;
    election::ContestResults contest;
    double alpha = 0.1;
    audit::AuditKind kind = audit::AuditKind::Providence;
    std::string created_at;
    std::uint64_t seed = 0;
    Status status = Status::Open;
    // Incremented by every successful save.
    std::int64_t version = 0;
    double minerva_multiplier = 1.5;
    // Cumulative over all ballots; fixed by the first round for Minerva.
    std::vector<std::int64_t> minerva_schedule;
    std::optional<PlanSnapshot> pending_plan;
    std::vector<SessionRound> rounds;

    // Rounds after applying corrections, oldest first.
    std::vector<const SessionRound*> effective_rounds() const;
    std::int64_t drawn() const;
};

// Input for one submitted round. Exactly one of cumulative_k, tallies and
// selection_order carries the counts; cumulative_k and 0/1 selection orders
// are only accepted for two-candidate contests.
struct RoundSubmission {
    std::int64_t cumulative_n = 0;
    std::optional<std::int64_t> cumulative_k;
    std::optional<std::vector<std::pair<std::string, std::int64_t>>> tallies;
    std::optional<std::vector<std::string>> selection_order;
    bool correction = false;
    std::string note;
};

AuditSessionRecord new_session(std::string session_id, election::ContestResults contest, double alpha,
                               audit::AuditKind kind, std::uint64_t seed, std::string created_at);

// Verdict snapshots for every stored round, recomputed from the tallies.
std::vector<VerdictSnapshot> recompute_verdicts(const AuditSessionRecord& record);

// Validates the submission against the session and appends the round with
// its verdict. Returns the new round's verdict.
VerdictSnapshot submit_round(AuditSessionRecord& record, const RoundSubmission& submission);

struct PlanRequest {
    std::optional<double> target_p;
    std::optional<double> misleading_limit;
    std::int64_t max_n = 10'000'000;
};

struct PairPlan {
    std::string loser;
    planner::RoundPlan plan;
    // Cumulative size over all ballots for this pair alone.
    std::int64_t total_n = 0;
};

struct SessionPlan {
    // Over all ballots; the largest pair requirement.
    planner::RoundPlan plan;
    std::vector<PairPlan> pairs;
};

// Next-round plan for the session. Stored as the pending plan.
SessionPlan plan_next_round(AuditSessionRecord& record, const PlanRequest& request);

// Marks the session escalated or abandoned.
void close_session(AuditSessionRecord& record, Status status);

nlohmann::json encode(const AuditSessionRecord& record);
nlohmann::json encode(const VerdictSnapshot& snapshot);
nlohmann::json encode(const SessionPlan& plan);
// Structural decode only; see load validation in SessionStore.
AuditSessionRecord decode_session(const nlohmann::json& j);

// Throws IntegrityError naming the first invariant that fails.
void revalidate(const AuditSessionRecord& record);

std::string utc_timestamp();

// Writes `text` to `path` through a temporary file in the same directory.
void atomic_write(const std::filesystem::path& path, const std::string& text);

// One JSON document per session under <data_dir>/sessions.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path data_dir);

    // ConflictError if the id exists.
    void create(AuditSessionRecord& record);
    // NotFoundError, IntegrityError.
    AuditSessionRecord load(const std::string& session_id) const;
    // ConflictError unless the stored version still equals record.version;
    // bumps record.version on success.
    void save(AuditSessionRecord& record);
    std::vector<std::string> list() const;

    // Load, apply `fn`, save, under the per-session lock.
    template <class Fn>
    auto update(const std::string& session_id, Fn&& fn) {
        std::lock_guard lock(mutex_for(session_id));
        AuditSessionRecord record = load(session_id);
        if constexpr (std::is_void_v<decltype(fn(record))>) {
            fn(record);
            save_locked(record);
            return record;
        } else {
            auto result = fn(record);
            save_locked(record);
            return std::make_pair(std::move(record), std::move(result));
        }
    }

private:
    std::filesystem::path path_of(const std::string& session_id) const;
    std::mutex& mutex_for(const std::string& session_id);
    void save_locked(AuditSessionRecord& record);

    std::filesystem::path dir_;
    std::mutex map_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

struct StoredContest {
    election::ContestResults results;
    std::optional<election::BallotManifest> manifest;
};

// One JSON document per contest under <data_dir>/contests.
class ContestStore {
public:
    explicit ContestStore(std::filesystem::path data_dir);

    // ConflictError on a duplicate id.
    void create(const StoredContest& contest);
    StoredContest get(const std::string& contest_id) const;
    std::vector<std::string> list() const;

private:
    std::filesystem::path path_of(const std::string& contest_id) const;

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

// Ids become file names, so only [A-Za-z0-9_.-] is allowed.
void check_identifier(const std::string& id, const char* what);

}  // namespace providence::session

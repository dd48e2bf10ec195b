#include "providence/session.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "providence/errors.hpp"
#include "providence/json_io.hpp"

namespace providence::session {

namespace fs = std::filesystem;
using nlohmann::json;
using audit::AuditKind;
using audit::AuditVerdict;
using audit::Decision;
using audit::RoundHistory;

namespace {

// Minerva schedules are materialised this many rounds ahead.
constexpr std::size_t kMinervaHorizon = 64;

struct PairTrack {
    election::NamedPair pair;
    std::vector<std::int64_t> n, k;
    std::vector<std::vector<std::uint8_t>> order;
    bool have_order = true;
    std::optional<AuditVerdict> confirmed;
    std::optional<std::size_t> confirmed_round;
    std::optional<AuditVerdict> last;

    RoundHistory history() const {
        if (have_order && !order.empty()) return RoundHistory(n, k, order);
        return RoundHistory(n, k);
    }
};

AuditVerdict no_sample_verdict() {
    AuditVerdict v;
    v.decision = Decision::Undetermined;
    v.measured_risk = 1.0;
    v.kmin = 1;
    return v;
}

std::int64_t tally_in(const std::vector<std::pair<std::string, std::int64_t>>& tallies,
                      const std::string& name) {
    for (const auto& [n, v] : tallies) {
        if (n == name) return v;
    }
    return 0;
}

// Walks the effective rounds once, building each pair's relevant-ballot
// history and its sticky verdict. `on_round` sees the state after each round.
template <class OnRound>
std::vector<PairTrack> track_pairs(const AuditSessionRecord& record,
                                   const std::vector<const SessionRound*>& effective,
                                   OnRound&& on_round) {
    const audit::RiskLimit alpha(record.alpha);
    std::vector<PairTrack> tracks;
    for (auto& p : election::derive_named_pairwise(record.contest)) {
        PairTrack t;
        t.pair = std::move(p);
        tracks.push_back(std::move(t));
    }
    for (std::size_t r = 0; r < effective.size(); ++r) {
        const SessionRound& round = *effective[r];
        for (PairTrack& t : tracks) {
            const std::int64_t w = tally_in(round.tallies, t.pair.winner);
            const std::int64_t l = tally_in(round.tallies, t.pair.loser);
            const std::int64_t prev_n = t.n.empty() ? 0 : t.n.back();
            if (t.confirmed || w + l == prev_n) continue;
            t.n.push_back(w + l);
            t.k.push_back(w);
            if (round.selection_order) {
                std::vector<std::uint8_t> bits;
                for (const std::string& name : *round.selection_order) {
                    if (name == t.pair.winner) bits.push_back(1);
                    if (name == t.pair.loser) bits.push_back(0);
                }
                t.order.push_back(std::move(bits));
            } else {
                t.have_order = false;
            }
            if (record.kind == AuditKind::SoBravo && !t.have_order) {
                throw DomainError("so_bravo sessions need a selection order for every round");
            }
            const RoundHistory h = t.history();
            AuditVerdict v = audit::verdict_for(record.kind, h, t.pair.contest, alpha, t.n);
            if (v.stopped()) {
                t.confirmed = v;
                t.confirmed_round = r + 1;
            }
            t.last = v;
        }
        on_round(r, tracks);
    }
    return tracks;
}

VerdictSnapshot snapshot_of(std::size_t round, const std::vector<PairTrack>& tracks) {
    VerdictSnapshot snap;
    std::vector<AuditVerdict> verdicts;
    for (const PairTrack& t : tracks) {
        const AuditVerdict v = t.last ? *t.last : no_sample_verdict();
        verdicts.push_back(v);
        snap.pairs.push_back({t.pair.loser, v, t.confirmed_round});
    }
    snap.combined = audit::combine_pairwise(verdicts);
    snap.combined.round = round;
    return snap;
}

// Schema checks for one round against the effective round it follows.
void check_round(const AuditSessionRecord& record, const SessionRound* base, const SessionRound& round) {
    const auto& candidates = record.contest.tallies;
    if (round.tallies.size() != candidates.size()) {
        throw DomainError("tallies must list every candidate exactly once");
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (round.tallies[i].first != candidates[i].first) {
            throw DomainError("tallies must follow the contest's candidate order");
        }
        if (round.tallies[i].second < 0) throw DomainError("tallies must be nonnegative");
    }
    const std::int64_t base_n = base ? base->cumulative_n : 0;
    if (round.cumulative_n <= base_n) {
        throw ConflictError("cumulative_n " + std::to_string(round.cumulative_n) +
                            " does not extend the previous cumulative size " + std::to_string(base_n));
    }
    std::int64_t added = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::int64_t before = base ? base->tallies[i].second : 0;
        if (round.tallies[i].second < before) {
            throw DomainError("cumulative tally for " + candidates[i].first + " decreased from " +
                              std::to_string(before) + " to " + std::to_string(round.tallies[i].second));
        }
        added += round.tallies[i].second - before;
    }
    if (added > round.cumulative_n - base_n) {
        throw DomainError("tallies exceed the ballots drawn this round");
    }
    if (round.selection_order) {
        const auto& order = *round.selection_order;
        if (static_cast<std::int64_t>(order.size()) != round.cumulative_n - base_n) {
            throw DomainError("selection order length must equal the round's new ballots");
        }
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const std::int64_t before = base ? base->tallies[i].second : 0;
            const auto count = std::count(order.begin(), order.end(), candidates[i].first);
            if (count != round.tallies[i].second - before) {
                throw DomainError("selection order does not match the tally for " + candidates[i].first);
            }
        }
    }
}

std::vector<std::int64_t> minerva_totals(std::int64_t first, double multiplier) {
    return planner::minerva_schedule(first, multiplier, kMinervaHorizon);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json encode_pair_verdict(const PairVerdict& p) {
    json j = {{"loser", p.loser}, {"verdict", json_io::encode(p.verdict)}};
    j["confirmed_round"] = p.confirmed_round ? json(*p.confirmed_round) : json(nullptr);
    return j;
}

PairVerdict decode_pair_verdict(const json& j) {
    PairVerdict p;
    p.loser = json_io::require_string(j, "loser");
    p.verdict = json_io::decode_verdict(json_io::require(j, "verdict"));
    if (auto it = j.find("confirmed_round"); it != j.end() && !it->is_null()) {
        p.confirmed_round = it->get<std::size_t>();
    }
    return p;
}

json encode_plan_snapshot(const PlanSnapshot& p) {
    json j = {{"plan", json_io::encode(p.plan)}};
    j["target_p"] = p.target_p ? json(*p.target_p) : json(nullptr);
    j["misleading_limit"] = p.misleading_limit ? json(*p.misleading_limit) : json(nullptr);
    return j;
}

PlanSnapshot decode_plan_snapshot(const json& j) {
    PlanSnapshot p;
    p.plan = json_io::decode_plan(json_io::require(j, "plan"));
    if (auto it = j.find("target_p"); it != j.end() && !it->is_null()) p.target_p = it->get<double>();
    if (auto it = j.find("misleading_limit"); it != j.end() && !it->is_null()) {
        p.misleading_limit = it->get<double>();
    }
    return p;
}

VerdictSnapshot decode_snapshot(const json& j) {
    VerdictSnapshot s;
    s.combined = json_io::decode_verdict(json_io::require(j, "combined"));
    for (const json& p : json_io::require(j, "pairs")) s.pairs.push_back(decode_pair_verdict(p));
    return s;
}

bool same_verdict(const AuditVerdict& a, const AuditVerdict& b) {
    return a.decision == b.decision && a.measured_risk == b.measured_risk && a.kmin == b.kmin &&
           a.misleading_now == b.misleading_now && a.round == b.round;
}

// Plan for one pair at a chosen cumulative pairwise size.
planner::RoundPlan pair_plan_at(AuditKind kind, const RoundHistory& h, const audit::PairwiseContest& c,
                                const audit::RiskLimit& alpha, std::int64_t n) {
    planner::RoundPlan plan;
    plan.cumulative_n = n;
    switch (kind) {
        case AuditKind::Providence:
        case AuditKind::Minerva:
            return planner::providence_plan_at(h, c, alpha, n);
        case AuditKind::EorBravo:
            plan.kmin = audit::bravo_kmin(n, c, alpha);
            plan.stop_prob = planner::stop_probability(h.last_k(), h.last_n(), n, plan.kmin, c.p_a);
            return plan;
        case AuditKind::SoBravo:
            plan.kmin = audit::bravo_kmin(n, c, alpha);
            plan.stop_prob =
                planner::so_bravo_crossing_probs(h.last_k(), h.last_n(), n - h.last_n(), c.p_a, c, alpha).back();
            return plan;
    }
    throw DomainError("unknown audit kind");
}

}  // namespace

std::string_view to_string(Status status) {
    switch (status) {
        case Status::Open: return "open";
        case Status::StoppedCorrect: return "stopped_correct";
        case Status::EscalatedFullCount: return "escalated_full_count";
        case Status::Abandoned: return "abandoned";
    }
    return "unknown";
}

Status parse_status(std::string_view text) {
    for (Status s : {Status::Open, Status::StoppedCorrect, Status::EscalatedFullCount, Status::Abandoned}) {
        if (to_string(s) == text) return s;
    }
    throw DomainError("unknown session status '" + std::string(text) + "'");
}

std::vector<const SessionRound*> AuditSessionRecord::effective_rounds() const {
    std::vector<const SessionRound*> out;
    for (const SessionRound& r : rounds) {
        if (r.correction) {
            if (out.empty()) throw DomainError("a correction round needs an earlier round to replace");
            out.back() = &r;
        } else {
            out.push_back(&r);
        }
    }
    return out;
}

std::int64_t AuditSessionRecord::drawn() const {
    const auto eff = effective_rounds();
    return eff.empty() ? 0 : eff.back()->cumulative_n;
}

AuditSessionRecord new_session(std::string session_id, election::ContestResults contest, double alpha,
                               AuditKind kind, std::uint64_t seed, std::string created_at) {
    check_identifier(session_id, "session id");
    contest.validate();
    (void)audit::RiskLimit(alpha);
    (void)election::derive_named_pairwise(contest);
    AuditSessionRecord r;
    r.session_id = std::move(session_id);
    r.contest_id = contest.contest_id;
    r.contest = std::move(contest);
    r.alpha = alpha;
    r.kind = kind;
    r.seed = seed;
    r.created_at = std::move(created_at);
    return r;
}

std::vector<VerdictSnapshot> recompute_verdicts(const AuditSessionRecord& record) {
    std::vector<VerdictSnapshot> out;
    std::vector<const SessionRound*> effective;
    for (const SessionRound& r : record.rounds) {
        if (r.correction) {
            if (effective.empty()) throw DomainError("a correction round needs an earlier round to replace");
            effective.back() = &r;
        } else {
            effective.push_back(&r);
        }
        // Each stored round's snapshot is the state right after it was
        // submitted; only the last effective round changes.
        std::optional<VerdictSnapshot> snap;
        track_pairs(record, effective, [&](std::size_t i, const std::vector<PairTrack>& tracks) {
            if (i + 1 == effective.size()) snap = snapshot_of(i + 1, tracks);
        });
        out.push_back(*snap);
    }
    return out;
}

VerdictSnapshot submit_round(AuditSessionRecord& record, const RoundSubmission& s) {
    if (record.status == Status::EscalatedFullCount || record.status == Status::Abandoned) {
        throw ConflictError("session " + record.session_id + " is closed");
    }
    if (record.status == Status::StoppedCorrect && !s.correction) {
        throw ConflictError("session " + record.session_id + " has already stopped; only corrections are accepted");
    }
    const auto effective = record.effective_rounds();
    if (s.correction && effective.empty()) throw ConflictError("no round to correct");
    const SessionRound* base = nullptr;
    if (s.correction) {
        if (effective.size() >= 2) base = effective[effective.size() - 2];
    } else if (!effective.empty()) {
        base = effective.back();
    }

    const auto& candidates = record.contest.tallies;
    SessionRound round;
    round.cumulative_n = s.cumulative_n;
    round.correction = s.correction;
    round.note = s.note;
    const int given = int(s.cumulative_k.has_value()) + int(s.tallies.has_value()) + int(s.selection_order.has_value());
    if (given != 1) {
        throw DomainError("give exactly one of cumulative_k, tallies or selection_order");
    }
    for (const auto& c : candidates) round.tallies.emplace_back(c.first, 0);
    if (s.cumulative_k) {
        if (candidates.size() != 2) throw DomainError("cumulative_k is only accepted for two-candidate contests");
        const std::size_t w = record.contest.winner_index();
        if (*s.cumulative_k < 0 || *s.cumulative_k > s.cumulative_n) {
            throw DomainError("cumulative_k must lie in [0, cumulative_n]");
        }
        round.tallies[w].second = *s.cumulative_k;
        round.tallies[1 - w].second = s.cumulative_n - *s.cumulative_k;
        // Ballots outside the pair would make k alone ambiguous.
        if (base) {
            std::int64_t base_sum = 0;
            for (const auto& t : base->tallies) base_sum += t.second;
            if (base_sum != base->cumulative_n) {
                throw DomainError("cumulative_k cannot be used after rounds with irrelevant ballots");
            }
        }
    } else if (s.tallies) {
        for (const auto& [name, count] : *s.tallies) {
            const std::size_t i = record.contest.index_of(name);
            round.tallies[i].second = count;
        }
    } else {
        for (const std::string& name : *s.selection_order) {
            if (!name.empty()) (void)record.contest.index_of(name);
        }
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const std::int64_t before = base ? base->tallies[i].second : 0;
            round.tallies[i].second =
                before + std::count(s.selection_order->begin(), s.selection_order->end(), candidates[i].first);
        }
        round.selection_order = s.selection_order;
    }
    check_round(record, base, round);
    if (record.kind == AuditKind::SoBravo && !round.selection_order) {
        throw DomainError("so_bravo sessions need the selection order of every round");
    }

    const std::size_t index = s.correction ? effective.size() : effective.size() + 1;
    std::vector<std::int64_t> schedule = record.minerva_schedule;
    if (record.kind == AuditKind::Minerva) {
        if (index == 1) {
            schedule = minerva_totals(round.cumulative_n, record.minerva_multiplier);
        } else if (index > schedule.size() || schedule[index - 1] != round.cumulative_n) {
            throw ScheduleViolation("minerva round " + std::to_string(index) + " must have cumulative size " +
                                    (index <= schedule.size() ? std::to_string(schedule[index - 1])
                                                              : std::string("beyond the planned schedule")));
        }
    }

    if (s.correction) {
        round.plan = effective.back()->plan;
    } else {
        round.plan = record.pending_plan;
    }
    AuditSessionRecord next = record;
    next.rounds.push_back(round);
    next.minerva_schedule = schedule;
    const std::vector<VerdictSnapshot> all = recompute_verdicts(next);
    next.rounds.back().verdict = all.back();
    next.pending_plan.reset();
    next.status = all.back().combined.stopped() ? Status::StoppedCorrect : Status::Open;
    record = std::move(next);
    return record.rounds.back().verdict;
}

SessionPlan plan_next_round(AuditSessionRecord& record, const PlanRequest& request) {
    if (record.status != Status::Open) {
        throw ConflictError("session " + record.session_id + " is " + std::string(to_string(record.status)));
    }
    if (!request.target_p && !request.misleading_limit) {
        throw DomainError("plan needs target_p or misleading_limit");
    }
    if (request.target_p && !(*request.target_p > 0.0 && *request.target_p < 1.0)) {
        throw DomainError("target_p must lie in (0, 1)");
    }
    if (request.misleading_limit && !(*request.misleading_limit > 0.0 && *request.misleading_limit < 1.0)) {
        throw DomainError("misleading_limit must lie in (0, 1)");
    }
    const audit::RiskLimit alpha(record.alpha);
    const auto effective = record.effective_rounds();
    const bool first = effective.empty();
    const std::int64_t drawn = first ? 0 : effective.back()->cumulative_n;
    if (!first && !request.target_p && record.kind != AuditKind::Minerva) {
        throw DomainError("target_p is required after the first round");
    }
    const auto tracks = track_pairs(record, effective, [](std::size_t, const auto&) {});

    SessionPlan out;
    bool have = false;
    for (const PairTrack& t : tracks) {
        if (t.confirmed) continue;
        const RoundHistory h = t.history();
        const audit::PairwiseContest& c = t.pair.contest;
        planner::RoundPlan plan;
        std::int64_t total = 0;
        if (record.kind == AuditKind::Minerva && !first) {
            // The schedule fixes the total; the pair's share is its expected
            // relevant count.
            const std::size_t index = effective.size();
            if (index >= record.minerva_schedule.size()) throw DomainError("minerva schedule exhausted");
            total = record.minerva_schedule[index];
            const auto marginal = static_cast<std::int64_t>(
                std::llround(static_cast<double>(total - drawn) * c.relevant_fraction));
            std::vector<std::int64_t> sched = t.n;
            sched.push_back(h.last_n() + std::max<std::int64_t>(1, marginal));
            const audit::MinervaAudit m(c, alpha, sched);
            plan.cumulative_n = sched.back();
            plan.kmin = m.kmins().back();
            plan.stop_prob = planner::stop_probability(h.last_k(), h.last_n(), plan.cumulative_n, plan.kmin, c.p_a);
        } else {
            if (request.target_p) {
                if (record.kind == AuditKind::Providence || record.kind == AuditKind::Minerva) {
                    planner::PlannerConfig cfg;
                    cfg.target_p = *request.target_p;
                    cfg.max_n = request.max_n;
                    cfg.misleading_limit = first ? request.misleading_limit : std::nullopt;
                    plan = planner::next_round_size(h, c, alpha, cfg);
                } else {
                    plan = planner::next_round_size_for(record.kind, h, c, alpha, *request.target_p, request.max_n);
                }
            }
            if (first && request.misleading_limit) {
                const std::int64_t n_m =
                    planner::misleading_min_round_size(c.margin, *request.misleading_limit, request.max_n);
                if (n_m > plan.cumulative_n) plan = pair_plan_at(record.kind, h, c, alpha, n_m);
            }
            if (first) {
                plan.misleading_prob = planner::misleading_probability(
                    plan.cumulative_n, c.p_a, planner::TieRule::CountsAsMisleading);
            }
            const double marginal = static_cast<double>(plan.cumulative_n - h.last_n());
            total = drawn + static_cast<std::int64_t>(std::ceil(marginal / c.relevant_fraction * (1.0 - 1e-12)));
        }
        out.pairs.push_back({t.pair.loser, plan, total});
        if (!have || total > out.plan.cumulative_n) {
            out.plan = plan;
            out.plan.cumulative_n = total;
            have = true;
        }
    }
    if (!have) throw ConflictError("every pair is already confirmed");
    record.pending_plan = PlanSnapshot{request.target_p, request.misleading_limit, out.plan};
    return out;
}

void close_session(AuditSessionRecord& record, Status status) {
    if (status != Status::EscalatedFullCount && status != Status::Abandoned) {
        throw DomainError("sessions can only be closed as escalated_full_count or abandoned");
    }
    if (record.status == Status::EscalatedFullCount || record.status == Status::Abandoned) {
        throw ConflictError("session " + record.session_id + " is already closed");
    }
    record.status = status;
}

json encode(const VerdictSnapshot& s) {
    json pairs = json::array();
    for (const PairVerdict& p : s.pairs) pairs.push_back(encode_pair_verdict(p));
    return {{"combined", json_io::encode(s.combined)}, {"pairs", pairs}};
}

json encode(const SessionPlan& plan) {
    json pairs = json::array();
    for (const PairPlan& p : plan.pairs) {
        pairs.push_back({{"loser", p.loser}, {"plan", json_io::encode(p.plan)}, {"total_n", p.total_n}});
    }
    json j = json_io::encode(plan.plan);
    j["pairs"] = pairs;
    return j;
}

json encode(const AuditSessionRecord& r) {
    json rounds = json::array();
    for (const SessionRound& round : r.rounds) {
        json tallies = json::array();
        for (const auto& [name, count] : round.tallies) tallies.push_back(json::array({name, count}));
        json jr = {{"cumulative_n", round.cumulative_n},
                   {"tallies", tallies},
                   {"correction", round.correction},
                   {"note", round.note},
                   {"verdict", encode(round.verdict)}};
        jr["selection_order"] = round.selection_order ? json(*round.selection_order) : json(nullptr);
        jr["plan"] = round.plan ? encode_plan_snapshot(*round.plan) : json(nullptr);
        rounds.push_back(std::move(jr));
    }
    json j = {{"schema_version", r.schema_version},
              {"session_id", r.session_id},
              {"contest_id", r.contest_id},
              {"contest", json_io::encode(r.contest)},
              {"alpha", r.alpha},
              {"audit_kind", std::string(audit::to_string(r.kind))},
              {"created_at", r.created_at},
              {"seed", r.seed},
              {"status", std::string(to_string(r.status))},
              {"version", r.version},
              {"minerva_multiplier", r.minerva_multiplier},
              {"minerva_schedule", r.minerva_schedule},
              {"rounds", rounds}};
    j["pending_plan"] = r.pending_plan ? encode_plan_snapshot(*r.pending_plan) : json(nullptr);
    return j;
}

AuditSessionRecord decode_session(const json& j) {
    using namespace json_io;
    AuditSessionRecord r;
    r.schema_version = static_cast<int>(require_integer(j, "schema_version"));
    r.session_id = require_string(j, "session_id");
    r.contest_id = require_string(j, "contest_id");
    r.contest = decode_results(require(j, "contest"));
    r.alpha = require_number(j, "alpha");
    r.kind = audit::parse_audit_kind(require_string(j, "audit_kind"));
    r.created_at = require_string(j, "created_at");
    const json& seed = require(j, "seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) throw DomainError("seed must be an integer");
    r.seed = seed.get<std::uint64_t>();
    r.status = parse_status(require_string(j, "status"));
    r.version = require_integer(j, "version");
    r.minerva_multiplier = require_number(j, "minerva_multiplier");
    r.minerva_schedule = require(j, "minerva_schedule").get<std::vector<std::int64_t>>();
    if (auto it = j.find("pending_plan"); it != j.end() && !it->is_null()) {
        r.pending_plan = decode_plan_snapshot(*it);
    }
    for (const json& jr : require(j, "rounds")) {
        SessionRound round;
        round.cumulative_n = require_integer(jr, "cumulative_n");
        for (const json& t : require(jr, "tallies")) {
            if (!t.is_array() || t.size() != 2 || !t[0].is_string() || !t[1].is_number_integer()) {
                throw DomainError("round tallies must be [name, count] pairs");
            }
            round.tallies.emplace_back(t[0].get<std::string>(), t[1].get<std::int64_t>());
        }
        if (auto it = jr.find("selection_order"); it != jr.end() && !it->is_null()) {
            round.selection_order = it->get<std::vector<std::string>>();
        }
        round.correction = require(jr, "correction").get<bool>();
        if (auto it = jr.find("note"); it != jr.end() && it->is_string()) round.note = it->get<std::string>();
        if (auto it = jr.find("plan"); it != jr.end() && !it->is_null()) round.plan = decode_plan_snapshot(*it);
        round.verdict = decode_snapshot(require(jr, "verdict"));
        r.rounds.push_back(std::move(round));
    }
    return r;
}

void revalidate(const AuditSessionRecord& r) {
    auto fail = [&](const std::string& what) -> void {
        throw IntegrityError("session " + r.session_id + ": " + what);
    };
    if (r.schema_version != kSchemaVersion) fail("unsupported schema_version " + std::to_string(r.schema_version));
    try {
        check_identifier(r.session_id, "session id");
        r.contest.validate();
        (void)audit::RiskLimit(r.alpha);
    } catch (const Error& e) {
        fail(e.what());
    }
    if (r.contest_id != r.contest.contest_id) fail("contest_id does not match the embedded contest");
    if (!(r.minerva_multiplier > 1.0)) fail("minerva multiplier must exceed 1");
    if (r.version < 1) fail("version must be positive");
    if (!r.rounds.empty() && r.rounds.front().correction) fail("round 1 is a correction with nothing to replace");

    std::vector<const SessionRound*> effective;
    for (std::size_t i = 0; i < r.rounds.size(); ++i) {
        const SessionRound& round = r.rounds[i];
        const SessionRound* base = nullptr;
        if (round.correction) {
            if (effective.size() >= 2) base = effective[effective.size() - 2];
        } else if (!effective.empty()) {
            base = effective.back();
        }
        try {
            check_round(r, base, round);
        } catch (const Error& e) {
            fail("round " + std::to_string(i + 1) + ": " + e.what());
        }
        if (round.correction) {
            effective.back() = &round;
        } else {
            effective.push_back(&round);
        }
        if (r.kind == AuditKind::Minerva) {
            const std::size_t idx = effective.size();
            if (idx > r.minerva_schedule.size() || r.minerva_schedule[idx - 1] != round.cumulative_n) {
                fail("round " + std::to_string(i + 1) + " departs from the minerva schedule");
            }
        }
    }
    if (r.kind == AuditKind::Minerva && !effective.empty() &&
        r.minerva_schedule != minerva_totals(effective.front()->cumulative_n, r.minerva_multiplier)) {
        fail("minerva schedule does not follow from the first round");
    }

    std::vector<VerdictSnapshot> recomputed;
    try {
        recomputed = recompute_verdicts(r);
    } catch (const Error& e) {
        fail(std::string("verdicts cannot be recomputed: ") + e.what());
    }
    for (std::size_t i = 0; i < r.rounds.size(); ++i) {
        const VerdictSnapshot& stored = r.rounds[i].verdict;
        const VerdictSnapshot& fresh = recomputed[i];
        if (!same_verdict(stored.combined, fresh.combined)) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "round " << i + 1 << ": stored verdict (risk " << stored.combined.measured_risk
                << ") differs from the recomputed one (risk " << fresh.combined.measured_risk << ")";
            fail(msg.str());
        }
        if (stored.pairs.size() != fresh.pairs.size()) fail("round " + std::to_string(i + 1) + ": pair count differs");
        for (std::size_t p = 0; p < fresh.pairs.size(); ++p) {
            const PairVerdict& a = stored.pairs[p];
            const PairVerdict& b = fresh.pairs[p];
            if (a.loser != b.loser || !same_verdict(a.verdict, b.verdict) || a.confirmed_round != b.confirmed_round) {
                fail("round " + std::to_string(i + 1) + ": stored verdict for pair vs " + b.loser +
                     " differs from the recomputed one");
            }
        }
    }
    const bool stopped = !recomputed.empty() && recomputed.back().combined.stopped();
    if (r.status == Status::StoppedCorrect && !stopped) fail("status stopped_correct without a stopping verdict");
    if (r.status == Status::Open && stopped) fail("status open although the latest verdict stops");
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void atomic_write(const fs::path& path, const std::string& text) {
    static std::atomic<std::uint64_t> counter{0};
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error("cannot rename " + tmp.string() + ": " + ec.message());
    }
}

void check_identifier(const std::string& id, const char* what) {
    if (id.empty() || id.size() > 128) throw DomainError(std::string(what) + " must have 1 to 128 characters");
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) throw DomainError(std::string(what) + " may only contain letters, digits, '_', '-' and '.'");
    }
    if (id == "." || id == "..") throw DomainError(std::string(what) + " is reserved");
}

// ---------------------------------------------------------------------------

SessionStore::SessionStore(fs::path data_dir) : dir_(std::move(data_dir) / "sessions") {
    fs::create_directories(dir_);
}

fs::path SessionStore::path_of(const std::string& id) const {
    check_identifier(id, "session id");
    return dir_ / (id + ".json");
}

std::mutex& SessionStore::mutex_for(const std::string& id) {
    std::lock_guard lock(map_mutex_);
    auto& slot = locks_[id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

void SessionStore::create(AuditSessionRecord& record) {
    std::lock_guard lock(mutex_for(record.session_id));
    const fs::path path = path_of(record.session_id);
    if (fs::exists(path)) throw ConflictError("session " + record.session_id + " already exists");
    record.version = 1;
    atomic_write(path, encode(record).dump(2));
}

AuditSessionRecord SessionStore::load(const std::string& id) const {
    const fs::path path = path_of(id);
    if (!fs::exists(path)) throw NotFoundError("no session " + id);
    const std::string text = read_file(path);
    AuditSessionRecord r;
    try {
        r = decode_session(json::parse(text));
    } catch (const json::exception& e) {
        throw IntegrityError("session " + id + ": malformed document: " + e.what());
    } catch (const Error& e) {
        throw IntegrityError("session " + id + ": " + e.what());
    }
    if (r.session_id != id) throw IntegrityError("session " + id + ": stored under the wrong id");
    revalidate(r);
    return r;
}

void SessionStore::save(AuditSessionRecord& record) {
    std::lock_guard lock(mutex_for(record.session_id));
    save_locked(record);
}

void SessionStore::save_locked(AuditSessionRecord& record) {
    const fs::path path = path_of(record.session_id);
    if (!fs::exists(path)) throw NotFoundError("no session " + record.session_id);
    std::int64_t stored = -1;
    try {
        stored = json::parse(read_file(path)).at("version").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw IntegrityError("session " + record.session_id + ": unreadable version: " + e.what());
    }
    if (stored != record.version) {
        throw ConflictError("session " + record.session_id + " changed (version " + std::to_string(stored) +
                            ", expected " + std::to_string(record.version) + ")");
    }
    AuditSessionRecord next = record;
    next.version = record.version + 1;
    atomic_write(path, encode(next).dump(2));
    record.version = next.version;
}

std::vector<std::string> SessionStore::list() const {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

ContestStore::ContestStore(fs::path data_dir) : dir_(std::move(data_dir) / "contests") {
    fs::create_directories(dir_);
}

fs::path ContestStore::path_of(const std::string& id) const {
    check_identifier(id, "contest id");
    return dir_ / (id + ".json");
}

void ContestStore::create(const StoredContest& contest) {
    contest.results.validate();
    std::lock_guard lock(mutex_);
    const fs::path path = path_of(contest.results.contest_id);
    if (fs::exists(path)) throw ConflictError("contest " + contest.results.contest_id + " already exists");
    json j = {{"results", json_io::encode(contest.results)}};
    j["manifest"] = contest.manifest ? json_io::encode(*contest.manifest) : json(nullptr);
    atomic_write(path, j.dump(2));
}

StoredContest ContestStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const fs::path path = path_of(id);
    if (!fs::exists(path)) throw NotFoundError("no contest " + id);
    try {
        const json j = json::parse(read_file(path));
        StoredContest out{json_io::decode_results(j.at("results")), std::nullopt};
        if (!j.at("manifest").is_null()) out.manifest = json_io::decode_manifest(j.at("manifest"));
        return out;
    } catch (const json::exception& e) {
        throw IntegrityError("contest " + id + ": malformed document: " + e.what());
    } catch (const DomainError& e) {
        throw IntegrityError("contest " + id + ": " + e.what());
    }
}

std::vector<std::string> ContestStore::list() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace providence::session

#include <fstream>
#include <thread>

#include "doctest.h"
#include "providence/errors.hpp"
#include "providence/session.hpp"
#include "temp_dir.hpp"

using namespace providence;
using namespace providence::session;
using audit::AuditKind;
using nlohmann::json;

namespace {

election::ContestResults pilot() {
    return election::parse_results("candidate,votes\nW,62835\nL,37165\n_total_ballots_cast,100000\n", "pilot");
}

election::ContestResults three_way() {
    return election::parse_results("candidate,votes\nA,60\nB,30\nC,10\n_total_ballots_cast,100\n", "three");
}

RoundSubmission by_k(std::int64_t n, std::int64_t k, bool correction = false) {
    RoundSubmission s;
    s.cumulative_n = n;
    s.cumulative_k = k;
    s.correction = correction;
    return s;
}

json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

void write_json(const std::filesystem::path& p, const json& j) {
    std::ofstream(p) << j.dump(2);
}

}  // namespace

TEST_CASE("pilot session stops at the first round") {
    auto r = new_session("pilot-1", pilot(), 0.1, AuditKind::Providence, 7, "2026-01-01T00:00:00Z");
    PlanRequest req;
    req.target_p = 0.95;
    const auto plan = plan_next_round(r, req);
    CHECK(plan.plan.cumulative_n == 130);
    REQUIRE(plan.plan.misleading_prob.has_value());
    const auto v = submit_round(r, by_k(140, 81));
    CHECK(v.combined.stopped());
    CHECK(v.combined.measured_risk == doctest::Approx(0.0418).epsilon(0.01));
    CHECK(r.status == Status::StoppedCorrect);
    CHECK(r.rounds.front().plan.has_value());
    // Stopped sessions accept corrections only.
    CHECK_THROWS_AS(submit_round(r, by_k(200, 120)), ConflictError);
    CHECK_THROWS_AS(plan_next_round(r, req), ConflictError);
}

TEST_CASE("round submissions are validated against the history") {
    auto r = new_session("s", pilot(), 0.1, AuditKind::Providence, 1, "t");
    submit_round(r, by_k(50, 27));
    CHECK_THROWS_AS(submit_round(r, by_k(50, 30)), ConflictError);
    CHECK_THROWS_AS(submit_round(r, by_k(80, 20)), DomainError);
    CHECK_THROWS_AS(submit_round(r, by_k(80, 81)), DomainError);
    RoundSubmission both = by_k(80, 40);
    both.tallies = std::vector<std::pair<std::string, std::int64_t>>{{"W", 40}, {"L", 40}};
    CHECK_THROWS_AS(submit_round(r, both), DomainError);
    CHECK(r.rounds.size() == 1);
}

TEST_CASE("a correction replaces the latest effective round") {
    auto r = new_session("s", pilot(), 0.1, AuditKind::Providence, 1, "t");
    submit_round(r, by_k(60, 30));
    submit_round(r, by_k(120, 62));
    const auto v = submit_round(r, by_k(120, 75, true));
    CHECK(r.rounds.size() == 3);
    const auto eff = r.effective_rounds();
    REQUIRE(eff.size() == 2);
    CHECK(eff.back()->tallies[0].second == 75);
    CHECK(r.drawn() == 120);
    CHECK(v.combined.round == 2);
    CHECK_NOTHROW(revalidate([&] {
        auto copy = r;
        copy.version = 1;
        return copy;
    }()));
}

TEST_CASE("three-candidate sessions track each pair") {
    auto r = new_session("t3", three_way(), 0.1, AuditKind::Providence, 3, "t");
    RoundSubmission s;
    s.cumulative_n = 20;
    s.tallies = std::vector<std::pair<std::string, std::int64_t>>{{"A", 12}, {"B", 6}, {"C", 2}};
    const auto v = submit_round(r, s);
    REQUIRE(v.pairs.size() == 2);
    CHECK(v.pairs[0].loser == "B");
    CHECK(v.pairs[1].loser == "C");
    CHECK_FALSE(v.pairs[0].confirmed_round.has_value());
    CHECK(v.pairs[1].confirmed_round == std::optional<std::size_t>(1));
    CHECK_FALSE(v.combined.stopped());
    CHECK(v.combined.measured_risk == v.pairs[0].verdict.measured_risk);
    CHECK(r.status == Status::Open);
    CHECK_THROWS_AS(submit_round(r, by_k(60, 40)), DomainError);
}

TEST_CASE("minerva sessions follow the schedule fixed by round one") {
    auto r = new_session("m", pilot(), 0.1, AuditKind::Minerva, 1, "t");
    submit_round(r, by_k(40, 21));
    REQUIRE(r.minerva_schedule.size() > 2);
    CHECK(r.minerva_schedule[0] == 40);
    CHECK(r.minerva_schedule[1] == 100);
    CHECK_THROWS_AS(submit_round(r, by_k(90, 50)), ScheduleViolation);
    PlanRequest req;
    req.target_p = 0.9;
    CHECK(plan_next_round(r, req).plan.cumulative_n == 100);
    CHECK_NOTHROW(submit_round(r, by_k(100, 60)));
}

TEST_CASE("selection-ordered bravo sessions need the order") {
    auto r = new_session("so", pilot(), 0.1, AuditKind::SoBravo, 1, "t");
    CHECK_THROWS_AS(submit_round(r, by_k(10, 6)), DomainError);
    RoundSubmission s;
    s.cumulative_n = 5;
    s.selection_order = std::vector<std::string>{"W", "L", "W", "W"};
    CHECK_THROWS_AS(submit_round(r, s), DomainError);
    s.cumulative_n = 4;
    s.selection_order = std::vector<std::string>{"W", "L", "W", "Nobody"};
    CHECK_THROWS_AS(submit_round(r, s), DomainError);
    s.selection_order = std::vector<std::string>{"W", "L", "W", "W"};
    const auto v = submit_round(r, s);
    CHECK(r.rounds.back().tallies[0].second == 3);
    CHECK_FALSE(v.combined.stopped());
}

TEST_CASE("closing a session") {
    auto r = new_session("c", pilot(), 0.1, AuditKind::Providence, 1, "t");
    CHECK_THROWS_AS(close_session(r, Status::StoppedCorrect), DomainError);
    close_session(r, Status::EscalatedFullCount);
    CHECK(r.status == Status::EscalatedFullCount);
    CHECK_THROWS_AS(close_session(r, Status::Abandoned), ConflictError);
    CHECK_THROWS_AS(submit_round(r, by_k(10, 5)), ConflictError);
}

TEST_CASE("store round-trips a three-round session") {
    TempDir dir;
    SessionStore store(dir.path);
    auto r = new_session("rt", pilot(), 0.05, AuditKind::Providence, 99, utc_timestamp());
    store.create(r);
    CHECK(r.version == 1);
    for (auto [n, k] : {std::pair{30, 16}, {70, 37}, {130, 68}}) {
        store.update("rt", [&](AuditSessionRecord& rec) { submit_round(rec, by_k(n, k)); });
    }
    const auto back = store.load("rt");
    CHECK(back.version == 4);
    CHECK(back.rounds.size() == 3);
    CHECK(encode(back) == encode(decode_session(encode(back))));
    CHECK(store.list() == std::vector<std::string>{"rt"});
    auto dup = new_session("rt", pilot(), 0.05, AuditKind::Providence, 1, "t");
    CHECK_THROWS_AS(store.create(dup), ConflictError);
    CHECK_THROWS_AS(store.load("nope"), NotFoundError);
}

TEST_CASE("stale writers get a version conflict") {
    TempDir dir;
    SessionStore store(dir.path);
    auto r = new_session("v", pilot(), 0.1, AuditKind::Providence, 1, "t");
    store.create(r);
    auto a = store.load("v");
    auto b = store.load("v");
    submit_round(a, by_k(20, 11));
    store.save(a);
    submit_round(b, by_k(20, 12));
    CHECK_THROWS_AS(store.save(b), ConflictError);
    CHECK(store.load("v").rounds.front().tallies[0].second == 11);
}

TEST_CASE("concurrent updates are serialized per session") {
    TempDir dir;
    SessionStore store(dir.path);
    auto r = new_session("par", pilot(), 0.1, AuditKind::Providence, 1, "t");
    store.create(r);
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&store] {
            for (int j = 0; j < 5; ++j) {
                store.update("par", [](AuditSessionRecord& rec) {
                    const std::int64_t n = rec.drawn() + 2;
                    const std::int64_t k = rec.effective_rounds().empty() ? 1 : rec.effective_rounds().back()->tallies[0].second + 1;
                    submit_round(rec, by_k(n, k));
                });
            }
        });
    }
    for (auto& t : threads) t.join();
    const auto back = store.load("par");
    CHECK(back.rounds.size() == 20);
    CHECK(back.version == 21);
}

TEST_CASE("tampered documents fail revalidation") {
    TempDir dir;
    SessionStore store(dir.path);
    auto r = new_session("tamper", pilot(), 0.1, AuditKind::Providence, 1, "t");
    store.create(r);
    store.update("tamper", [](AuditSessionRecord& rec) { submit_round(rec, by_k(100, 52)); });
    const auto path = dir.path / "sessions" / "tamper.json";
    const json good = read_json(path);

    SUBCASE("winner tally above the round size") {
        json j = good;
        j["rounds"][0]["tallies"][0][1] = 101;
        write_json(path, j);
        CHECK_THROWS_AS(store.load("tamper"), IntegrityError);
    }
    SUBCASE("cached risk differs from the recomputed one") {
        json j = good;
        j["rounds"][0]["verdict"]["combined"]["measured_risk"] = 0.01;
        write_json(path, j);
        try {
            (void)store.load("tamper");
            FAIL("expected an integrity error");
        } catch (const IntegrityError& e) {
            CHECK(std::string(e.what()).find("recomputed") != std::string::npos);
        }
    }
    SUBCASE("status contradicts the verdict") {
        json j = good;
        j["status"] = "stopped_correct";
        write_json(path, j);
        CHECK_THROWS_AS(store.load("tamper"), IntegrityError);
    }
    SUBCASE("unknown schema version") {
        json j = good;
        j["schema_version"] = 2;
        write_json(path, j);
        CHECK_THROWS_AS(store.load("tamper"), IntegrityError);
    }
    SUBCASE("truncated file") {
        std::ofstream(path) << good.dump().substr(0, 40);
        CHECK_THROWS_AS(store.load("tamper"), IntegrityError);
    }
}

TEST_CASE("contest store") {
    TempDir dir;
    ContestStore store(dir.path);
    StoredContest c{pilot(), election::BallotManifest({{"X", "X-1", 100000}})};
    store.create(c);
    CHECK_THROWS_AS(store.create(c), ConflictError);
    const auto back = store.get("pilot");
    CHECK(back.results == c.results);
    REQUIRE(back.manifest.has_value());
    CHECK(*back.manifest == *c.manifest);
    CHECK_THROWS_AS(store.get("zzz"), NotFoundError);
    CHECK_THROWS_AS(check_identifier("../etc", "id"), DomainError);
    CHECK_THROWS_AS(check_identifier("", "id"), DomainError);
    CHECK_NOTHROW(check_identifier("va-2026.general_1", "id"));
}

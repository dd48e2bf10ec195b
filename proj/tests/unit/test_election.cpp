#include <map>
#include <set>

#include "doctest.h"
#include "providence/election_data.hpp"
#include "providence/errors.hpp"

using namespace providence;
using namespace providence::election;

TEST_CASE("results CSV parses and round-trips") {
    const auto r = parse_results("candidate,votes\nA,6283\nB,3717\n_total_ballots_cast,10000\n", "c1");
    CHECK(r.contest_id == "c1");
    CHECK(r.reported_winner == "A");
    CHECK(r.total_ballots_cast == 10000);
    CHECK(r.irrelevant_ballots() == 0);
    CHECK(parse_results(serialize_results(r), "c1") == r);
    const auto pairs = derive_pairwise(r);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].p_a == doctest::Approx(0.6283));
    CHECK(pairs[0].margin == doctest::Approx(0.2566));
    CHECK(pairs[0].relevant_fraction == 1.0);
}

TEST_CASE("comments and blank lines are skipped") {
    const auto r = parse_results("# header comment\n\ncandidate,votes\nA,5\n# mid\nB,3\n_total_ballots_cast,9\n");
    CHECK(r.tallies.size() == 2);
    CHECK(r.irrelevant_ballots() == 1);
}

TEST_CASE("malformed results report the line") {
    try {
        (void)parse_results("candidate,votes\nA,5\nB,x\n_total_ballots_cast,9\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse_results("name,votes\nA,1\n"), ParseError);
    // A tie for first place leaves no reported winner.
    CHECK_THROWS_AS(parse_results("candidate,votes\nA,5\nB,5\n_total_ballots_cast,10\n"), ParseError);
    // Votes exceed ballots cast.
    CHECK_THROWS_AS(parse_results("candidate,votes\nA,8\nB,5\n_total_ballots_cast,10\n"), ParseError);
    ContestResults tied{"t", {{"A", 5}, {"B", 5}}, 10, "A"};
    CHECK_THROWS_AS(tied.validate(), DomainError);
}

TEST_CASE("three-way contest yields one pair per loser") {
    const auto r = parse_results("candidate,votes\nA,50\nB,30\nC,20\n_total_ballots_cast,100\n");
    const auto pairs = derive_named_pairwise(r);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].loser == "B");
    CHECK(pairs[0].contest.relevant_fraction == doctest::Approx(0.8));
    CHECK(pairs[0].contest.p_a == doctest::Approx(50.0 / 80.0));
    CHECK(pairs[1].loser == "C");
    CHECK(pairs[1].contest.relevant_fraction == doctest::Approx(0.7));
}

TEST_CASE("pilot margin maps to its winner share") {
    const auto r = parse_results("candidate,votes\nW,62835\nL,37165\n_total_ballots_cast,100000\n");
    CHECK(derive_pairwise(r)[0].p_a == doctest::Approx(0.62835).epsilon(1e-12));
    CHECK(derive_pairwise(r)[0].margin == doctest::Approx(0.2567).epsilon(1e-12));
}

TEST_CASE("manifest parsing and lookup") {
    const auto m = BallotManifest::parse_csv("county,container,ballots\nN,N-1,100\nN,N-2,100\nS,S-1,200\n");
    CHECK(m.total() == 400);
    CHECK(m.locate(1) == 0);
    CHECK(m.locate(100) == 0);
    CHECK(m.locate(101) == 1);
    CHECK(m.locate(400) == 2);
    CHECK(m.offset_of(2) == 200);
    CHECK(m.largest_county() == "N");
    CHECK(m.county_mask("S") == std::vector<bool>{false, false, true});
    CHECK_THROWS_AS(BallotManifest::parse_csv("county,container,ballots\nN,N-1,-4\n"), ParseError);
    CHECK_THROWS_AS(BallotManifest({{"N", "N-1", -4}}), DomainError);
    CHECK_THROWS_AS(BallotManifest::parse_csv("county,container\nN,N-1\n"), ParseError);
}

TEST_CASE("draws are deterministic and partition-independent") {
    const BallotManifest m({{"N", "N-1", 100}, {"N", "N-2", 100}, {"S", "S-1", 200}});
    const auto a = draw_sample(m, 50, 7);
    const auto b = draw_sample(m, 50, 7);
    REQUIRE(a.size() == 50);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].global_position == b[i].global_position);
        CHECK(a[i].draw_index == static_cast<std::int64_t>(i) + 1);
    }
    // Drawing 20 then 30 gives the same sequence as 50 at once.
    auto first = draw_sample(m, 20, 7);
    const auto rest = draw_sample(m, 30, 7, 20);
    first.insert(first.end(), rest.begin(), rest.end());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(first[i].global_position == a[i].global_position);
    const auto other = draw_sample(m, 50, 8);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || other[i].global_position != a[i].global_position;
    CHECK(differs);
    for (const auto& d : a) {
        const auto& e = m.entries()[m.locate(d.global_position)];
        CHECK(e.container == d.container);
        CHECK(d.position_within >= 1);
        CHECK(d.position_within <= e.ballot_count);
    }
}

TEST_CASE("draw frequencies follow container sizes") {
    const BallotManifest m({{"N", "N-1", 100}, {"N", "N-2", 100}, {"S", "S-1", 200}});
    const std::int64_t draws = 10'000;
    std::map<std::string, int> counts;
    for (const auto& d : draw_sample(m, draws, 2024)) counts[d.container]++;
    // Pearson chi-square with 2 degrees of freedom; 13.8 is the 0.999 quantile.
    double chi2 = 0.0;
    for (const auto& e : m.entries()) {
        const double expected = draws * static_cast<double>(e.ballot_count) / m.total();
        chi2 += (counts[e.container] - expected) * (counts[e.container] - expected) / expected;
    }
    CHECK(chi2 < 13.8);
}

TEST_CASE("sampling needs a manifest and a positive count") {
    CHECK_THROWS_AS(draw_sample(BallotManifest{}, 3, 1), DomainError);
    const BallotManifest one({{"C", "only", 9}});
    CHECK_THROWS_AS(draw_sample(one, 0, 1), DomainError);
    for (const auto& d : draw_sample(one, 3, 1)) CHECK(d.container == "only");
}

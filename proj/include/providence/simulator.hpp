#pragma once

// Monte Carlo trials of the four audits under the reported outcome (H_a) or
// a tie (H_0). Every trial draws its ballots one at a time from a keyed
// counter stream indexed by (seed, trial, round), so a trial's ballots do not
// depend on the order trials are run in or on the worker count.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "providence/audit.hpp"
#include "providence/election_data.hpp"
#include "providence/planner.hpp"
#include "json.hpp"

namespace providence::sim {

using audit::AuditKind;
using audit::PairwiseContest;
using audit::RiskLimit;
using audit::RoundHistory;

enum class Hypothesis { Alternative, Null };
std::string_view to_string(Hypothesis h);

// Ballot categories: index 0 is the reported winner, then each loser; any
// share left below 1 is irrelevant ballots.
struct SimContest {
    std::vector<double> shares;
    // One pair per loser, aligned with shares[1..].
    std::vector<PairwiseContest> pairs;

    static SimContest pairwise(const PairwiseContest& contest);
    static SimContest from_results(const election::ContestResults& results);

    bool single_pair() const { return pairs.size() == 1; }
    void validate() const;
};

// Maps the pairwise history so far to the next cumulative pairwise size.
using AdversaryRule = std::function<std::int64_t(const RoundHistory&)>;

struct SchedulePolicy {
    enum class Kind { TargetP, Predetermined, Adversarial };
    Kind kind = Kind::TargetP;
    double target_p = 0.9;
    // Cumulative sizes over all ballots for Predetermined.
    std::vector<std::int64_t> sizes;
    AdversaryRule rule;
    std::string rule_name;

    static SchedulePolicy target(double p);
    static SchedulePolicy predetermined(std::vector<std::int64_t> sizes);
    static SchedulePolicy adversarial(std::string name, AdversaryRule rule);
};

struct TrialPolicy {
    AuditKind kind = AuditKind::Providence;
    SchedulePolicy schedule;
    std::size_t max_rounds = 5;
    Hypothesis hypothesis = Hypothesis::Alternative;
    double minerva_multiplier = 1.5;
    // Planned rounds larger than this many ballots end the trial unstopped
    // (escalation to a full count).
    std::int64_t max_n = 2'000'000;
};

struct CountyAggregate {
    std::string county;
    double ballots_mean = 0.0;
    double rounds_mean = 0.0;
    double precinct_touches_mean = 0.0;
};

struct SimulationReport {
    AuditKind kind = AuditKind::Providence;
    Hypothesis hypothesis = Hypothesis::Alternative;
    std::optional<double> target_p;
    std::int64_t trials = 0;
    std::uint64_t seed = 0;
    // Index r is round r + 1.
    std::vector<std::int64_t> per_round_stops;
    std::vector<std::int64_t> per_round_reached;
    std::vector<double> per_round_ballots_mean;
    double total_ballots_mean = 0.0;
    double rounds_mean = 0.0;
    double stop_fraction = 0.0;
    double misleading_sample_fraction = 0.0;
    double misleading_sequence_fraction = 0.0;
    std::vector<double> precinct_touches_mean_per_round;
    double precinct_touches_mean = 0.0;
    std::optional<CountyAggregate> largest_county;

    // stops in round r / trials that reached round r.
    double conditional_stop_fraction(std::size_t round) const;
};

struct RunOptions {
    // Enables precinct-touch and largest-county statistics.
    const election::BallotManifest* manifest = nullptr;
    unsigned workers = 1;
};

SimulationReport run_trials(const SimContest& contest, const TrialPolicy& policy,
                            const RiskLimit& alpha, std::int64_t trials, std::uint64_t seed,
                            const RunOptions& options = {});

// Named adversaries for strategy-proofness checks:
//   "shrink_grow"  next marginal is base/2 when k is within sqrt(n) of the
//                  round's kmin, 2*base otherwise
//   "b2"           one ballot per round
//   "constant"     base per round
AdversaryRule make_adversary(std::string_view name, std::int64_t base,
                             const PairwiseContest& contest, const RiskLimit& alpha);

// H_0 Providence trials whose round sizes come from `rule`.
SimulationReport adversarial_policy_trials(const PairwiseContest& contest, const RiskLimit& alpha,
                                           const SchedulePolicy& rule, std::int64_t trials,
                                           std::uint64_t seed, std::size_t max_rounds = 5);

// Distinct containers touched per round (first draw from a container within
// a round), for each trial. round_sizes are marginal draw counts.
std::vector<std::vector<std::int64_t>> precinct_touch_trials(
    const election::BallotManifest& manifest,
    const std::vector<std::vector<std::int64_t>>& round_sizes, std::uint64_t seed);

struct SweepCell {
    AuditKind kind;
    double p;
    SimulationReport report;
};

// Seed used for one sweep cell.
std::uint64_t cell_seed(std::uint64_t seed, AuditKind kind, double p);

std::vector<SweepCell> sweep_p(const SimContest& contest, const std::vector<AuditKind>& kinds,
                               const std::vector<double>& p_grid, const RiskLimit& alpha,
                               std::int64_t trials, std::uint64_t seed,
                               const RunOptions& options = {}, std::size_t max_rounds = 5,
                               Hypothesis hypothesis = Hypothesis::Alternative);

// The p grid {0.05, 0.10, ..., 0.95}.
std::vector<double> default_p_grid();

nlohmann::json to_json(const SimulationReport& report);
SimulationReport report_from_json(const nlohmann::json& j);

// Columns: kind,p,round,reached,stops,conditional_stop,mean_ballots,
// stop_fraction,total_ballots_mean,rounds_mean,misleading_fraction,
// misleading_sequence_fraction,precinct_touches_mean,county_ballots_mean,
// county_rounds_mean,county_touches_mean. One row per (cell, round).
std::string sweep_to_csv(const std::vector<SweepCell>& cells);

// Inverse of sweep_to_csv for the fields the CSV carries. Seeds and the
// per-round precinct means are not in the CSV and come back empty; the
// largest county's name is not either. Throws ParseError.
std::vector<SweepCell> sweep_from_csv(std::string_view text);

}  // namespace providence::sim

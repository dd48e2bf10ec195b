#pragma once

// Round-size selection: the smallest next round that reaches a target
// conditional stopping probability, misleading-limit round sizes, Minerva
// multiplier schedules and the relevant-fraction scaling used for contests
// with several losers.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "providence/audit.hpp"
#include "providence/errors.hpp"

namespace providence::planner {

using audit::AuditKind;
using audit::PairwiseContest;
using audit::RiskLimit;
using audit::RoundHistory;

struct RoundPlan {
    std::int64_t cumulative_n = 0;
    std::int64_t kmin = 0;
    // Conditional on the history, under H_a.
    double stop_prob = 0.0;
    // First round only.
    std::optional<double> misleading_prob;
};

// How the round-size search walks the candidate sizes.
enum class SearchStrategy {
    // Exponential bracketing, then every size in the final bracket is checked
    // and the smallest qualifying one returned.
    Minimal,
    // Bisection on (n_prev, max_n]. Cheaper, but the stopping probability is
    // not monotone in n so the result can exceed the minimum.
    Bisection,
    // Same result as Minimal, but every size in the bracket is evaluated
    // with the exact kernels. Slow; kept as a reference for testing.
    ExactScan,
};

// Whether a tied sample (k = n/2) counts as misleading when sizing a round
// against a misleading limit.
enum class TieRule { CountsAsMisleading, NotMisleading };

struct PlannerConfig {
    double target_p = 0.9;
    std::optional<double> misleading_limit;
    std::int64_t max_n = 10'000'000;
    double minerva_multiplier = 1.5;
    SearchStrategy strategy = SearchStrategy::Minimal;
    TieRule tie_rule = TieRule::CountsAsMisleading;

    void validate() const;
};

// The target cannot be met within max_n; best() is the highest stopping
// probability seen during the search.
class CapacityError : public Error {
public:
    CapacityError(const std::string& message, RoundPlan best)
        : Error(message), best_(std::move(best)) {}
    const RoundPlan& best() const noexcept { return best_; }
    const char* code() const noexcept override { return "capacity"; }

private:
    RoundPlan best_;
};

// Pr[k_prev + K' >= kmin] with K' ~ Bin(n_cur - n_prev, p); 0 when kmin > n_cur.
double stop_probability(std::int64_t k_prev, std::int64_t n_prev, std::int64_t n_cur,
                        std::int64_t kmin, double p);

// Providence plan evaluated at a given cumulative size.
RoundPlan providence_plan_at(const RoundHistory& history, const PairwiseContest& contest,
                             const RiskLimit& alpha, std::int64_t cumulative_n);

// Providence next round size for a target conditional stopping probability.
RoundPlan next_round_size(const RoundHistory& history, const PairwiseContest& contest,
                          const RiskLimit& alpha, double target_p, std::int64_t max_n,
                          SearchStrategy strategy = SearchStrategy::Minimal);

// As above, with the misleading limit applied to the first round: the
// returned size is the larger of the two constraints.
RoundPlan next_round_size(const RoundHistory& history, const PairwiseContest& contest,
                          const RiskLimit& alpha, const PlannerConfig& config);

// Next round size for any audit kind. Minerva uses the Providence rule for
// its first round; later Minerva rounds come from minerva_schedule.
// SO Bravo requires the history to carry no stop already.
RoundPlan next_round_size_for(AuditKind kind, const RoundHistory& history,
                              const PairwiseContest& contest, const RiskLimit& alpha,
                              double target_p, std::int64_t max_n);

// Cumulative sizes whose marginals grow by `multiplier`, each marginal
// rounded half-up from the previous rounded marginal.
std::vector<std::int64_t> minerva_schedule(std::int64_t first_round, double multiplier,
                                           std::size_t rounds);

// Pr[K < n/2] (or Pr[K <= n/2] when ties count) for K ~ Bin(n, p_a).
double misleading_probability(std::int64_t n, double p_a, TieRule ties);

std::int64_t misleading_min_round_size(double margin, double limit, std::int64_t max_n,
                                       TieRule ties = TieRule::CountsAsMisleading);

struct FirstRoundStopProbs {
    double providence = 0.0;
    double so_bravo = 0.0;
    double eor_bravo = 0.0;
};

FirstRoundStopProbs first_round_stop_probs_at(std::int64_t n, double margin,
                                              const RiskLimit& alpha);

// Probability that SO Bravo has stopped by each cumulative prefix length,
// starting from an unstopped state (k_prev, n_prev) and drawing ballots with
// winner probability p. Entry i is for cumulative length n_prev + i; the
// returned vector has max_extra + 1 entries. Masses below 1e-30 are pruned.
std::vector<double> so_bravo_crossing_probs(std::int64_t k_prev, std::int64_t n_prev,
                                            std::int64_t max_extra, double p,
                                            const PairwiseContest& contest,
                                            const RiskLimit& alpha);

struct PairState {
    PairwiseContest contest;
    // History restricted to this pair's relevant ballots.
    RoundHistory history;
};

// Largest over pairs of: total_prev + ceil(marginal pairwise size / relevant_fraction).
std::int64_t multi_candidate_round_size(std::span<const PairState> pairs,
                                        std::int64_t total_prev, const RiskLimit& alpha,
                                        double target_p, std::int64_t max_n);

}  // namespace providence::planner

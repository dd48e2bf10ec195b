#pragma once

// Stopping rules for round-by-round ballot-polling audits: Providence,
// Minerva, end-of-round Bravo and selection-ordered Bravo.
//
// All tallies are cumulative over rounds and restricted to the ballots that
// are relevant to one winner/loser pair.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "providence/binom_kernel.hpp"

namespace providence::audit {

struct PairwiseContest {
    double p_a = 0.75;
    double p_0 = 0.5;
    double margin = 0.5;
    double relevant_fraction = 1.0;

    // p_a = (1 + margin) / 2.
    static PairwiseContest from_margin(double margin, double relevant_fraction = 1.0);
    // Winner share among relevant ballots; margin = 2 p_a - 1.
    static PairwiseContest from_winner_share(double p_a, double relevant_fraction = 1.0);

    void validate() const;
};

class RiskLimit {
public:
    explicit RiskLimit(double alpha);
    double alpha() const { return alpha_; }
    // ln(1/alpha), the threshold every log-ratio is compared against.
    double log_threshold() const { return log_threshold_; }

private:
    double alpha_;
    double log_threshold_;
};

// Cumulative round sizes and winner tallies, optionally with the per-round
// selection order (1 = ballot for the reported winner).
class RoundHistory {
public:
    RoundHistory() = default;
    RoundHistory(std::vector<std::int64_t> cumulative_n, std::vector<std::int64_t> cumulative_k);
    RoundHistory(std::vector<std::int64_t> cumulative_n, std::vector<std::int64_t> cumulative_k,
                 std::vector<std::vector<std::uint8_t>> selection_order);

    // Build a history from the per-round selection order alone.
    static RoundHistory from_selection_order(std::vector<std::vector<std::uint8_t>> order);

    std::size_t rounds() const { return cumulative_n_.size(); }
    bool empty() const { return cumulative_n_.empty(); }
    const std::vector<std::int64_t>& cumulative_n() const { return cumulative_n_; }
    const std::vector<std::int64_t>& cumulative_k() const { return cumulative_k_; }
    bool has_selection_order() const { return selection_order_.has_value(); }
    const std::vector<std::vector<std::uint8_t>>& selection_order() const;

    // 1-based round accessors; round 0 is the empty sample.
    std::int64_t n(std::size_t round) const { return round == 0 ? 0 : cumulative_n_[round - 1]; }
    std::int64_t k(std::size_t round) const { return round == 0 ? 0 : cumulative_k_[round - 1]; }
    std::int64_t last_n() const { return n(rounds()); }
    std::int64_t last_k() const { return k(rounds()); }

    // History truncated to its first `rounds` rounds.
    RoundHistory prefix(std::size_t rounds) const;
    // History with one more round appended (selection order dropped).
    RoundHistory extended(std::int64_t cumulative_n, std::int64_t cumulative_k) const;

    friend bool operator==(const RoundHistory&, const RoundHistory&) = default;

private:
    void validate() const;

    std::vector<std::int64_t> cumulative_n_;
    std::vector<std::int64_t> cumulative_k_;
    std::optional<std::vector<std::vector<std::uint8_t>>> selection_order_;
};

enum class Decision { Correct, Undetermined };
std::string_view to_string(Decision d);

struct AuditVerdict {
    Decision decision = Decision::Undetermined;
    double measured_risk = 1.0;
    // Minimum cumulative winner tally that stops the latest round;
    // last_n + 1 when the round cannot stop.
    std::int64_t kmin = 0;
    bool misleading_now = false;
    std::size_t round = 0;

    bool stopped() const { return decision == Decision::Correct; }
};

enum class AuditKind { Providence, Minerva, EorBravo, SoBravo };
std::string_view to_string(AuditKind kind);
AuditKind parse_audit_kind(std::string_view text);

// ln omega_j for the 1-based round index.
double providence_log_omega(const RoundHistory& history, const PairwiseContest& contest,
                            std::size_t round_index);

// ln omega for an arbitrary cumulative k in a round following (k_prev, n_prev).
double providence_log_omega_at(std::int64_t k_cur, std::int64_t k_prev, std::int64_t n_prev,
                               std::int64_t n_cur, const PairwiseContest& contest);

std::int64_t providence_kmin(std::int64_t k_prev, std::int64_t n_prev, std::int64_t n_cur,
                             const PairwiseContest& contest, const RiskLimit& alpha);

AuditVerdict providence_verdict(const RoundHistory& history, const PairwiseContest& contest,
                                const RiskLimit& alpha);

// Smallest k with sigma(k, n) >= 1/alpha, or n + 1.
std::int64_t bravo_kmin(std::int64_t n, const PairwiseContest& contest, const RiskLimit& alpha);

AuditVerdict eor_bravo_verdict(const RoundHistory& history, const PairwiseContest& contest,
                               const RiskLimit& alpha);

AuditVerdict so_bravo_verdict(const RoundHistory& history, const PairwiseContest& contest,
                              const RiskLimit& alpha);

// True when SO Bravo stopped on a sample whose end-of-round tally does not
// meet the Bravo condition.
bool misleading_sequence_check(const AuditVerdict& so, const AuditVerdict& eor);

// Minerva for a schedule fixed before the audit starts. Construction runs the
// truncate-and-convolve chain under both hypotheses once; verdicts and kmins
// are then table lookups.
class MinervaAudit {
public:
    MinervaAudit(const PairwiseContest& contest, const RiskLimit& alpha,
                 std::vector<std::int64_t> schedule);

    const std::vector<std::int64_t>& schedule() const { return schedule_; }
    const std::vector<std::int64_t>& kmins() const { return kmins_; }

    // ln tau_j at cumulative k for the 1-based round.
    double log_tau(std::size_t round, std::int64_t k) const;

    // Throws ScheduleViolation unless history.cumulative_n is a prefix of the
    // schedule, and DomainError if an earlier round already stopped.
    AuditVerdict verdict(const RoundHistory& history) const;

private:
    struct RoundTails {
        std::int64_t support_min_a, support_min_0;
        std::vector<double> tails_a, tails_0;
    };
    static double tail_at(const std::vector<double>& tails, std::int64_t support_min,
                          std::int64_t k);

    PairwiseContest contest_;
    RiskLimit alpha_;
    std::vector<std::int64_t> schedule_;
    std::vector<std::int64_t> kmins_;
    std::vector<RoundTails> tails_;
};

AuditVerdict minerva_verdict(const RoundHistory& history, const PairwiseContest& contest,
                             const RiskLimit& alpha, std::span<const std::int64_t> schedule);

// One verdict per winner/loser pair combined: Correct only if every pair is
// Correct, risk is the largest pairwise risk.
AuditVerdict combine_pairwise(std::span<const AuditVerdict> verdicts);

// Dispatch on kind; Minerva requires a schedule.
AuditVerdict verdict_for(AuditKind kind, const RoundHistory& history,
                         const PairwiseContest& contest, const RiskLimit& alpha,
                         std::span<const std::int64_t> minerva_schedule = {});

}  // namespace providence::audit

#include "providence/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "providence/errors.hpp"

namespace providence::audit {

using kernel::kNegInf;

PairwiseContest PairwiseContest::from_margin(double margin, double relevant_fraction) {
    PairwiseContest c;
    c.margin = margin;
    c.p_a = (1.0 + margin) / 2.0;
    c.relevant_fraction = relevant_fraction;
    c.validate();
    return c;
}

PairwiseContest PairwiseContest::from_winner_share(double p_a, double relevant_fraction) {
    PairwiseContest c;
    c.p_a = p_a;
    c.margin = 2.0 * p_a - 1.0;
    c.relevant_fraction = relevant_fraction;
    c.validate();
    return c;
}

void PairwiseContest::validate() const {
    if (!(margin > 0.0 && margin < 1.0)) throw DomainError("contest: margin must lie in (0, 1)");
    if (!(p_a > 0.5 && p_a < 1.0)) throw DomainError("contest: p_a must lie in (1/2, 1)");
    if (p_0 != 0.5) throw DomainError("contest: p_0 is fixed at 1/2");
    if (!(relevant_fraction > 0.0 && relevant_fraction <= 1.0)) {
        throw DomainError("contest: relevant_fraction must lie in (0, 1]");
    }
}

RiskLimit::RiskLimit(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("risk limit must lie in (0, 1)");
    log_threshold_ = -std::log(alpha);
}

// ---------------------------------------------------------------------------
// RoundHistory

RoundHistory::RoundHistory(std::vector<std::int64_t> cumulative_n,
                           std::vector<std::int64_t> cumulative_k)
    : cumulative_n_(std::move(cumulative_n)), cumulative_k_(std::move(cumulative_k)) {
    validate();
}

RoundHistory::RoundHistory(std::vector<std::int64_t> cumulative_n,
                           std::vector<std::int64_t> cumulative_k,
                           std::vector<std::vector<std::uint8_t>> selection_order)
    : cumulative_n_(std::move(cumulative_n)),
      cumulative_k_(std::move(cumulative_k)),
      selection_order_(std::move(selection_order)) {
    validate();
}

RoundHistory RoundHistory::from_selection_order(std::vector<std::vector<std::uint8_t>> order) {
    std::vector<std::int64_t> ns, ks;
    std::int64_t n = 0, k = 0;
    for (const auto& round : order) {
        n += static_cast<std::int64_t>(round.size());
        k += std::count_if(round.begin(), round.end(), [](std::uint8_t b) { return b != 0; });
        ns.push_back(n);
        ks.push_back(k);
    }
    return RoundHistory(std::move(ns), std::move(ks), std::move(order));
}

const std::vector<std::vector<std::uint8_t>>& RoundHistory::selection_order() const {
    if (!selection_order_) throw DomainError("history has no selection order");
    return *selection_order_;
}

void RoundHistory::validate() const {
    if (cumulative_n_.size() != cumulative_k_.size()) {
        throw DomainError("history: round size and tally counts differ");
    }
    std::int64_t n_prev = 0, k_prev = 0;
    for (std::size_t i = 0; i < cumulative_n_.size(); ++i) {
        const std::int64_t n = cumulative_n_[i], k = cumulative_k_[i];
        if (n <= n_prev) throw DomainError("history: cumulative round sizes must strictly increase");
        if (k < k_prev || k - k_prev > n - n_prev) {
            throw DomainError("history: round " + std::to_string(i + 1) +
                              " winner tally outside [0, marginal round size]");
        }
        n_prev = n;
        k_prev = k;
    }
    if (!selection_order_) return;
    if (selection_order_->size() != cumulative_n_.size()) {
        throw DomainError("history: selection order must cover every round");
    }
    n_prev = k_prev = 0;
    for (std::size_t i = 0; i < cumulative_n_.size(); ++i) {
        const auto& bits = (*selection_order_)[i];
        const auto ones = std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; });
        if (static_cast<std::int64_t>(bits.size()) != cumulative_n_[i] - n_prev ||
            ones != cumulative_k_[i] - k_prev) {
            throw DomainError("history: selection order of round " + std::to_string(i + 1) +
                              " does not match its tallies");
        }
        n_prev = cumulative_n_[i];
        k_prev = cumulative_k_[i];
    }
}

RoundHistory RoundHistory::prefix(std::size_t rounds) const {
    rounds = std::min(rounds, this->rounds());
    std::vector<std::int64_t> ns(cumulative_n_.begin(), cumulative_n_.begin() + rounds);
    std::vector<std::int64_t> ks(cumulative_k_.begin(), cumulative_k_.begin() + rounds);
    if (!selection_order_) return RoundHistory(std::move(ns), std::move(ks));
    std::vector<std::vector<std::uint8_t>> order(selection_order_->begin(),
                                                 selection_order_->begin() + rounds);
    return RoundHistory(std::move(ns), std::move(ks), std::move(order));
}

RoundHistory RoundHistory::extended(std::int64_t cumulative_n, std::int64_t cumulative_k) const {
    auto ns = cumulative_n_;
    auto ks = cumulative_k_;
    ns.push_back(cumulative_n);
    ks.push_back(cumulative_k);
    return RoundHistory(std::move(ns), std::move(ks));
}

std::string_view to_string(Decision d) {
    return d == Decision::Correct ? "Correct" : "Undetermined";
}

std::string_view to_string(AuditKind kind) {
    switch (kind) {
        case AuditKind::Providence: return "providence";
        case AuditKind::Minerva: return "minerva";
        case AuditKind::EorBravo: return "eor_bravo";
        case AuditKind::SoBravo: return "so_bravo";
    }
    return "unknown";
}

AuditKind parse_audit_kind(std::string_view text) {
    if (text == "providence") return AuditKind::Providence;
    if (text == "minerva") return AuditKind::Minerva;
    if (text == "eor_bravo" || text == "eor" || text == "eor-bravo") return AuditKind::EorBravo;
    if (text == "so_bravo" || text == "so" || text == "so-bravo") return AuditKind::SoBravo;
    throw DomainError("unknown audit kind '" + std::string(text) + "'");
}

namespace {

double risk_from_log_ratio(double log_ratio) {
    return log_ratio <= 0.0 ? 1.0 : std::exp(-log_ratio);
}

bool misleading(std::int64_t k, std::int64_t n) { return k < n - k; }

void require_rounds(const RoundHistory& history) {
    if (history.empty()) throw DomainError("verdict requires at least one round");
}

}  // namespace

// ---------------------------------------------------------------------------
// Providence

double providence_log_omega_at(std::int64_t k_cur, std::int64_t k_prev, std::int64_t n_prev,
                               std::int64_t n_cur, const PairwiseContest& contest) {
    if (n_prev == 0) return kernel::log_tau1(k_cur, contest.p_a, contest.p_0, n_cur);
    return kernel::log_sigma(k_prev, contest.p_a, contest.p_0, n_prev) +
           kernel::log_tau1(k_cur - k_prev, contest.p_a, contest.p_0, n_cur - n_prev);
}

double providence_log_omega(const RoundHistory& history, const PairwiseContest& contest,
                            std::size_t round_index) {
    if (round_index < 1 || round_index > history.rounds()) {
        throw DomainError("providence_log_omega: round index out of range");
    }
    const std::size_t j = round_index;
    return providence_log_omega_at(history.k(j), history.k(j - 1), history.n(j - 1),
                                   history.n(j), contest);
}

std::int64_t providence_kmin(std::int64_t k_prev, std::int64_t n_prev, std::int64_t n_cur,
                             const PairwiseContest& contest, const RiskLimit& alpha) {
    if (n_prev < 0 || n_cur <= n_prev) throw DomainError("providence_kmin: need n_cur > n_prev >= 0");
    if (k_prev < 0 || k_prev > n_prev) throw DomainError("providence_kmin: need 0 <= k_prev <= n_prev");
    const double threshold = alpha.log_threshold();
    const double base =
        n_prev == 0 ? 0.0 : kernel::log_sigma(k_prev, contest.p_a, contest.p_0, n_prev);
    const std::int64_t marginal = n_cur - n_prev;
    // omega is strictly increasing in k, so the first qualifying k is unique.
    std::int64_t lo = 0, hi = marginal + 1;
    while (lo < hi) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        if (base + kernel::log_tau1(mid, contest.p_a, contest.p_0, marginal) >= threshold) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo > marginal ? n_cur + 1 : k_prev + lo;
}

AuditVerdict providence_verdict(const RoundHistory& history, const PairwiseContest& contest,
                                const RiskLimit& alpha) {
    require_rounds(history);
    const std::size_t j = history.rounds();
    for (std::size_t i = 1; i < j; ++i) {
        if (providence_log_omega(history, contest, i) >= alpha.log_threshold()) {
            throw DomainError("providence: audit already stopped in round " + std::to_string(i));
        }
    }
    const double log_omega = providence_log_omega(history, contest, j);
    AuditVerdict v;
    v.round = j;
    v.decision = log_omega >= alpha.log_threshold() ? Decision::Correct : Decision::Undetermined;
    v.measured_risk = risk_from_log_ratio(log_omega);
    v.kmin = providence_kmin(history.k(j - 1), history.n(j - 1), history.n(j), contest, alpha);
    v.misleading_now = misleading(history.last_k(), history.last_n());
    return v;
}

// ---------------------------------------------------------------------------
// Bravo

std::int64_t bravo_kmin(std::int64_t n, const PairwiseContest& contest, const RiskLimit& alpha) {
    if (n < 0) throw DomainError("bravo_kmin: n must be nonnegative");
    const double a = std::log(contest.p_a / contest.p_0);
    const double b = std::log((1.0 - contest.p_a) / (1.0 - contest.p_0));
    const double t = alpha.log_threshold();
    const double exact = (t - static_cast<double>(n) * b) / (a - b);
    auto k = static_cast<std::int64_t>(std::clamp(std::ceil(exact), 0.0, static_cast<double>(n + 1)));
    // Settle rounding at the boundary against the closed form itself.
    while (k > 0 && kernel::log_sigma(k - 1, contest.p_a, contest.p_0, n) >= t) --k;
    while (k <= n && kernel::log_sigma(k, contest.p_a, contest.p_0, n) < t) ++k;
    return k;
}

AuditVerdict eor_bravo_verdict(const RoundHistory& history, const PairwiseContest& contest,
                               const RiskLimit& alpha) {
    require_rounds(history);
    const std::size_t j = history.rounds();
    double min_risk = 1.0;
    double log_sigma_last = 0.0;
    for (std::size_t i = 1; i <= j; ++i) {
        const double ls = kernel::log_sigma(history.k(i), contest.p_a, contest.p_0, history.n(i));
        if (i < j && ls >= alpha.log_threshold()) {
            throw DomainError("eor_bravo: audit already stopped in round " + std::to_string(i));
        }
        min_risk = std::min(min_risk, risk_from_log_ratio(ls));
        log_sigma_last = ls;
    }
    AuditVerdict v;
    v.round = j;
    v.decision = log_sigma_last >= alpha.log_threshold() ? Decision::Correct : Decision::Undetermined;
    v.measured_risk = min_risk;
    v.kmin = bravo_kmin(history.last_n(), contest, alpha);
    v.misleading_now = misleading(history.last_k(), history.last_n());
    return v;
}

AuditVerdict so_bravo_verdict(const RoundHistory& history, const PairwiseContest& contest,
                              const RiskLimit& alpha) {
    require_rounds(history);
    if (!history.has_selection_order()) throw DomainError("so_bravo: selection order required");
    const double a = std::log(contest.p_a / contest.p_0);
    const double b = std::log((1.0 - contest.p_a) / (1.0 - contest.p_0));
    const double t = alpha.log_threshold();
    double best = kNegInf;
    std::int64_t m = 0, k = 0;
    for (const auto& round : history.selection_order()) {
        for (std::uint8_t bit : round) {
            ++m;
            if (bit) ++k;
            best = std::max(best, static_cast<double>(k) * a + static_cast<double>(m - k) * b);
        }
    }
    AuditVerdict v;
    v.round = history.rounds();
    v.decision = best >= t ? Decision::Correct : Decision::Undetermined;
    v.measured_risk = risk_from_log_ratio(best);
    v.kmin = bravo_kmin(history.last_n(), contest, alpha);
    v.misleading_now = misleading(history.last_k(), history.last_n());
    return v;
}

bool misleading_sequence_check(const AuditVerdict& so, const AuditVerdict& eor) {
    return so.decision == Decision::Correct && eor.decision == Decision::Undetermined;
}

// ---------------------------------------------------------------------------
// Minerva

MinervaAudit::MinervaAudit(const PairwiseContest& contest, const RiskLimit& alpha,
                           std::vector<std::int64_t> schedule)
    : contest_(contest), alpha_(alpha), schedule_(std::move(schedule)) {
    contest_.validate();
    if (schedule_.empty()) throw DomainError("minerva: schedule must have at least one round");
    for (std::size_t i = 0; i < schedule_.size(); ++i) {
        const std::int64_t prev = i == 0 ? 0 : schedule_[i - 1];
        if (schedule_[i] <= prev) throw DomainError("minerva: schedule must strictly increase");
    }

    // Round 1 is tau1 exactly, shared with Providence.
    kmins_.push_back(providence_kmin(0, 0, schedule_[0], contest_, alpha_));
    tails_.push_back({});

    using kernel::BinomialSpec;
    using kernel::TailDistribution;
    TailDistribution dist_a = TailDistribution::binomial({schedule_[0], contest_.p_a});
    TailDistribution dist_0 = TailDistribution::binomial({schedule_[0], contest_.p_0});
    for (std::size_t j = 1; j < schedule_.size(); ++j) {
        const BinomialSpec step_a{schedule_[j] - schedule_[j - 1], contest_.p_a};
        const BinomialSpec step_0{schedule_[j] - schedule_[j - 1], contest_.p_0};
        dist_a = kernel::truncate_and_convolve(dist_a, kmins_[j - 1], step_a);
        dist_0 = kernel::truncate_and_convolve(dist_0, kmins_[j - 1], step_0);
        RoundTails rt{dist_a.support_min(), dist_0.support_min(), dist_a.log_tails(),
                      dist_0.log_tails()};
        tails_.push_back(std::move(rt));

        std::int64_t kmin = schedule_[j] + 1;
        for (std::int64_t k = 0; k <= schedule_[j]; ++k) {
            if (log_tau(j + 1, k) >= alpha_.log_threshold()) {
                kmin = k;
                break;
            }
        }
        kmins_.push_back(kmin);
    }
}

double MinervaAudit::tail_at(const std::vector<double>& tails, std::int64_t support_min,
                             std::int64_t k) {
    if (tails.empty()) return kNegInf;
    if (k <= support_min) return tails.front();
    const auto idx = k - support_min;
    if (idx >= static_cast<std::int64_t>(tails.size())) return kNegInf;
    return tails[static_cast<std::size_t>(idx)];
}

double MinervaAudit::log_tau(std::size_t round, std::int64_t k) const {
    if (round < 1 || round > schedule_.size()) throw DomainError("minerva: round out of range");
    if (k < 0 || k > schedule_[round - 1]) throw DomainError("minerva: k outside [0, n_j]");
    if (round == 1) return kernel::log_tau1(k, contest_.p_a, contest_.p_0, schedule_[0]);
    const RoundTails& rt = tails_[round - 1];
    const double num = tail_at(rt.tails_a, rt.support_min_a, k);
    const double den = tail_at(rt.tails_0, rt.support_min_0, k);
    // Null tail below the representable range: the ratio is unbounded.
    if (den == kNegInf) return std::numeric_limits<double>::infinity();
    return num - den;
}

AuditVerdict MinervaAudit::verdict(const RoundHistory& history) const {
    require_rounds(history);
    const std::size_t j = history.rounds();
    if (j > schedule_.size() ||
        !std::equal(history.cumulative_n().begin(), history.cumulative_n().end(), schedule_.begin())) {
        throw ScheduleViolation("minerva: history departs from the predetermined schedule");
    }
    for (std::size_t i = 1; i < j; ++i) {
        if (history.k(i) >= kmins_[i - 1]) {
            throw DomainError("minerva: audit already stopped in round " + std::to_string(i));
        }
    }
    const double lt = log_tau(j, history.last_k());
    AuditVerdict v;
    v.round = j;
    v.decision = lt >= alpha_.log_threshold() ? Decision::Correct : Decision::Undetermined;
    v.measured_risk = risk_from_log_ratio(lt);
    v.kmin = kmins_[j - 1];
    v.misleading_now = misleading(history.last_k(), history.last_n());
    return v;
}

AuditVerdict minerva_verdict(const RoundHistory& history, const PairwiseContest& contest,
                             const RiskLimit& alpha, std::span<const std::int64_t> schedule) {
    require_rounds(history);
    if (history.rounds() > schedule.size()) {
        throw ScheduleViolation("minerva: more rounds than the predetermined schedule");
    }
    // Only the rounds observed so far influence the verdict.
    std::vector<std::int64_t> used(schedule.begin(), schedule.begin() + history.rounds());
    return MinervaAudit(contest, alpha, std::move(used)).verdict(history);
}

AuditVerdict combine_pairwise(std::span<const AuditVerdict> verdicts) {
    if (verdicts.empty()) throw DomainError("combine_pairwise: no pairwise verdicts");
    AuditVerdict out = verdicts.front();
    for (const AuditVerdict& v : verdicts.subspan(1)) {
        if (v.decision == Decision::Undetermined) out.decision = Decision::Undetermined;
        if (v.measured_risk > out.measured_risk) {
            out.measured_risk = v.measured_risk;
            out.kmin = v.kmin;
        }
        out.misleading_now = out.misleading_now || v.misleading_now;
    }
    return out;
}

AuditVerdict verdict_for(AuditKind kind, const RoundHistory& history,
                         const PairwiseContest& contest, const RiskLimit& alpha,
                         std::span<const std::int64_t> minerva_schedule) {
    switch (kind) {
        case AuditKind::Providence: return providence_verdict(history, contest, alpha);
        case AuditKind::Minerva: return minerva_verdict(history, contest, alpha, minerva_schedule);
        case AuditKind::EorBravo: return eor_bravo_verdict(history, contest, alpha);
        case AuditKind::SoBravo: return so_bravo_verdict(history, contest, alpha);
    }
    throw DomainError("unknown audit kind");
}

}  // namespace providence::audit

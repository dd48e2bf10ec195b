#include "providence/planner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "providence/binom_kernel.hpp"

namespace providence::planner {

namespace {

using kernel::BinomialSpec;

// Walks a kmin hint at most this far before falling back to bisection.
constexpr std::int64_t kHintWalk = 8;

// Candidates within this distance of a threshold are re-evaluated exactly.
constexpr double kScanSlack = 1e-6;
// Exact resynchronisation interval for the incremental cursors.
constexpr int kResyncEvery = 512;

// ln Pr[K >= j] and ln Pr[K = j] for K ~ Bin(m, p), moved one step at a time
// in j or m with the pmf ratio recurrences. Only used to screen candidate
// sizes; anything close to a decision is recomputed by the exact kernels.
class TailCursor {
public:
    explicit TailCursor(double p)
        : p_(p), log_p_(std::log(p)), log_q_(std::log1p(-p)) {}

    void reset(std::int64_t j, std::int64_t m) {
        j_ = j;
        m_ = m;
        ops_ = 0;
        if (j < 0 || j > m) {
            log_sf_ = j < 0 ? 0.0 : kernel::kNegInf;
            log_pmf_ = kernel::kNegInf;
            return;
        }
        const BinomialSpec spec{m, p_};
        log_sf_ = kernel::log_binom_sf(j, spec).log();
        log_pmf_ = kernel::log_binom_pmf(j, spec).log();
    }

    std::int64_t j() const { return j_; }
    double log_sf() const { return log_sf_; }

    void inc_m() {
        if (needs_reset()) return reset(j_, m_ + 1);
        const double m = static_cast<double>(m_), j = static_cast<double>(j_);
        if (j_ > 0) {
            log_sf_ = kernel::log_add_exp(log_sf_, log_pmf_ + std::log(j / (m - j + 1.0)) + log_q_);
        }
        log_pmf_ += std::log((m + 1.0) / (m + 1.0 - j)) + log_q_;
        ++m_;
        tick();
    }

    void inc_j() {
        if (needs_reset() || j_ + 1 > m_) return reset(j_ + 1, m_);
        const double m = static_cast<double>(m_), j = static_cast<double>(j_);
        log_sf_ += kernel::log1m_exp(std::min(0.0, log_pmf_ - log_sf_));
        log_pmf_ += std::log((m - j) / (j + 1.0)) + log_p_ - log_q_;
        ++j_;
        tick();
    }

    void dec_j() {
        if (needs_reset() || j_ - 1 < 0 || j_ > m_) return reset(j_ - 1, m_);
        const double m = static_cast<double>(m_), j = static_cast<double>(j_);
        log_pmf_ += std::log(j / (m - j + 1.0)) + log_q_ - log_p_;
        log_sf_ = kernel::log_add_exp(log_sf_, log_pmf_);
        --j_;
        tick();
    }

private:
    bool needs_reset() const {
        return ops_ >= kResyncEvery || !std::isfinite(log_sf_) || !std::isfinite(log_pmf_) || j_ > m_;
    }
    void tick() {
        ++ops_;
        if (j_ > m_) reset(j_, m_);
    }

    double p_, log_p_, log_q_;
    std::int64_t j_ = 0, m_ = 0;
    double log_sf_ = 0.0, log_pmf_ = 0.0;
    int ops_ = 0;
};

// Providence kmin with a starting guess. The threshold is unique because
// omega is strictly increasing in k, so this agrees with providence_kmin.
class ProvidenceEvaluator {
public:
    ProvidenceEvaluator(const RoundHistory& history, const PairwiseContest& contest,
                        const RiskLimit& alpha)
        : contest_(contest), alpha_(alpha), k_prev_(history.last_k()), n_prev_(history.last_n()) {
        base_ = n_prev_ == 0 ? 0.0
                             : kernel::log_sigma(k_prev_, contest.p_a, contest.p_0, n_prev_);
    }

    RoundPlan operator()(std::int64_t n) {
        const std::int64_t kmin = kmin_at(n);
        hint_ = kmin;
        RoundPlan plan;
        plan.cumulative_n = n;
        plan.kmin = kmin;
        plan.stop_prob = stop_probability(k_prev_, n_prev_, n, kmin, contest_.p_a);
        return plan;
    }

    // Smallest n in (lo, found.cumulative_n) whose plan reaches the target, or
    // `found` if none does. Cursors track both tails as n rises; a size is
    // only evaluated exactly when the cursor puts it near a threshold.
    RoundPlan scan_bracket(std::int64_t lo, const RoundPlan& found, double target_p) {
        const double threshold = alpha_.log_threshold();
        TailCursor alt(contest_.p_a), null(contest_.p_0);
        bool synced = false;
        auto omega = [&] { return base_ + alt.log_sf() - null.log_sf(); };
        auto step = [&](bool up) {
            if (up) {
                alt.inc_j();
                null.inc_j();
            } else {
                alt.dec_j();
                null.dec_j();
            }
        };
        for (std::int64_t n = lo + 1; n < found.cumulative_n; ++n) {
            const std::int64_t m = n - n_prev_;
            bool exact = !synced;
            if (synced) {
                alt.inc_m();
                null.inc_m();
            }
            for (int guard = 0; !exact; ++guard) {
                if (guard > 64 || alt.j() < 2 || alt.j() > m) {
                    exact = true;
                    break;
                }
                const double f = omega();
                if (std::abs(f - threshold) < kScanSlack) {
                    exact = true;
                    break;
                }
                if (f < threshold) {
                    step(true);
                    continue;
                }
                step(false);
                const double g = omega();
                if (std::abs(g - threshold) < kScanSlack) {
                    exact = true;
                    break;
                }
                if (g < threshold) {
                    step(true);
                    break;
                }
            }
            if (!exact && std::exp(alt.log_sf()) < target_p - kScanSlack) continue;
            if (synced) hint_ = k_prev_ + alt.j();
            const RoundPlan plan = (*this)(n);
            if (plan.stop_prob >= target_p) return plan;
            const std::int64_t j = std::clamp<std::int64_t>(plan.kmin - k_prev_, 1, m);
            alt.reset(j, m);
            null.reset(j, m);
            synced = true;
        }
        return found;
    }

private:
    bool qualifies(std::int64_t k, std::int64_t n) const {
        return base_ + kernel::log_tau1(k - k_prev_, contest_.p_a, contest_.p_0, n - n_prev_) >=
               alpha_.log_threshold();
    }

    std::int64_t kmin_at(std::int64_t n) const {
        if (hint_) {
            const std::int64_t k_top = k_prev_ + (n - n_prev_);
            std::int64_t k = std::clamp(*hint_, k_prev_, k_top);
            if (qualifies(k, n)) {
                for (std::int64_t step = 0; step < kHintWalk; ++step) {
                    if (k == k_prev_ || !qualifies(k - 1, n)) return k;
                    --k;
                }
            } else {
                for (std::int64_t step = 0; step < kHintWalk; ++step) {
                    ++k;
                    if (k > k_top) return n + 1;
                    if (qualifies(k, n)) return k;
                }
            }
        }
        return audit::providence_kmin(k_prev_, n_prev_, n, contest_, alpha_);
    }

    PairwiseContest contest_;
    RiskLimit alpha_;
    std::int64_t k_prev_, n_prev_;
    double base_;
    std::optional<std::int64_t> hint_;
};

class EorEvaluator {
public:
    EorEvaluator(const RoundHistory& history, const PairwiseContest& contest,
                 const RiskLimit& alpha)
        : contest_(contest), alpha_(alpha), k_prev_(history.last_k()), n_prev_(history.last_n()) {}

    RoundPlan operator()(std::int64_t n) const {
        RoundPlan plan;
        plan.cumulative_n = n;
        plan.kmin = audit::bravo_kmin(n, contest_, alpha_);
        plan.stop_prob = stop_probability(k_prev_, n_prev_, n, plan.kmin, contest_.p_a);
        return plan;
    }

    RoundPlan scan_bracket(std::int64_t lo, const RoundPlan& found, double target_p) const {
        TailCursor alt(contest_.p_a);
        bool synced = false;
        for (std::int64_t n = lo + 1; n < found.cumulative_n; ++n) {
            const std::int64_t m = n - n_prev_;
            const std::int64_t j = audit::bravo_kmin(n, contest_, alpha_) - k_prev_;
            if (j > m) {
                synced = false;
                continue;
            }
            if (j < 1) return (*this)(n);
            if (synced) {
                alt.inc_m();
                while (alt.j() < j) alt.inc_j();
                while (alt.j() > j) alt.dec_j();
            } else {
                alt.reset(j, m);
                synced = true;
            }
            if (std::exp(alt.log_sf()) < target_p - kScanSlack) continue;
            const RoundPlan plan = (*this)(n);
            if (plan.stop_prob >= target_p) return plan;
        }
        return found;
    }

private:
    PairwiseContest contest_;
    RiskLimit alpha_;
    std::int64_t k_prev_, n_prev_;
};

[[noreturn]] void throw_capacity(double target_p, std::int64_t max_n, const RoundPlan& best) {
    throw CapacityError("target stopping probability " + std::to_string(target_p) +
                            " is not attainable within " + std::to_string(max_n) +
                            " ballots (best " + std::to_string(best.stop_prob) + " at " +
                            std::to_string(best.cumulative_n) + ")",
                        best);
}

template <class Eval>
RoundPlan search_round_size(std::int64_t n_prev, Eval& eval, double target_p,
                            std::int64_t max_n, SearchStrategy strategy) {
    if (max_n <= n_prev) {
        throw CapacityError("max_n " + std::to_string(max_n) + " leaves no room after " +
                                std::to_string(n_prev) + " ballots",
                            RoundPlan{n_prev, n_prev + 1, 0.0, std::nullopt});
    }
    RoundPlan best;
    best.stop_prob = -1.0;
    auto consider = [&](const RoundPlan& plan) {
        if (plan.stop_prob > best.stop_prob) best = plan;
    };

    if (strategy == SearchStrategy::Bisection) {
        RoundPlan top = eval(max_n);
        consider(top);
        if (top.stop_prob < target_p) throw_capacity(target_p, max_n, best);
        std::int64_t lo = n_prev, hi = max_n;
        while (hi - lo > 1) {
            const std::int64_t mid = lo + (hi - lo) / 2;
            RoundPlan plan = eval(mid);
            if (plan.stop_prob >= target_p) {
                hi = mid;
                top = plan;
            } else {
                lo = mid;
            }
        }
        return top;
    }

    std::int64_t step = 1;
    RoundPlan found;
    for (;;) {
        const std::int64_t hi = std::min(n_prev + step, max_n);
        RoundPlan plan = eval(hi);
        consider(plan);
        if (plan.stop_prob >= target_p) {
            found = plan;
            break;
        }
        if (hi == max_n) throw_capacity(target_p, max_n, best);
        step *= 2;
    }
    // The stopping probability saw-tooths with n, so a size below the last
    // doubling step can also qualify. Every size up to the bracket top is
    // checked, smallest first.
    if (strategy == SearchStrategy::Minimal) return eval.scan_bracket(n_prev, found, target_p);
    for (std::int64_t n = found.cumulative_n - 1; n > n_prev; --n) {
        RoundPlan plan = eval(n);
        if (plan.stop_prob >= target_p) found = plan;
    }
    return found;
}

// Absorbing dynamic program over the unstopped winner tally, one ballot at a
// time. Mass reaching the Bravo threshold at any prefix is absorbed.
class SoCrossingDp {
public:
    SoCrossingDp(std::int64_t k_prev, std::int64_t n_prev, double p,
                 const PairwiseContest& contest, const RiskLimit& alpha)
        : contest_(contest), alpha_(alpha), p_(p), m_(n_prev), lo_k_(k_prev), mass_{1.0} {}

    void step() {
        ++m_;
        const double q = 1.0 - p_;
        next_.assign(mass_.size() + 1, 0.0);
        for (std::size_t i = 0; i < mass_.size(); ++i) {
            next_[i] += mass_[i] * q;
            next_[i + 1] += mass_[i] * p_;
        }
        mass_.swap(next_);

        const std::int64_t t = audit::bravo_kmin(m_, contest_, alpha_);
        if (t <= m_) {
            const std::int64_t cut = std::max<std::int64_t>(0, t - lo_k_);
            if (cut < static_cast<std::int64_t>(mass_.size())) {
                for (std::size_t i = static_cast<std::size_t>(cut); i < mass_.size(); ++i) {
                    crossed_ += mass_[i];
                }
                mass_.resize(static_cast<std::size_t>(cut));
            }
        }
        prune();
    }

    std::int64_t m() const { return m_; }
    double crossed() const { return std::min(1.0, crossed_); }

private:
    void prune() {
        constexpr double kFloor = 1e-30;
        while (!mass_.empty() && mass_.back() < kFloor) mass_.pop_back();
        std::size_t lead = 0;
        while (lead < mass_.size() && mass_[lead] < kFloor) ++lead;
        if (lead > 0) {
            mass_.erase(mass_.begin(), mass_.begin() + static_cast<std::ptrdiff_t>(lead));
            lo_k_ += static_cast<std::int64_t>(lead);
        }
    }

    PairwiseContest contest_;
    RiskLimit alpha_;
    double p_;
    std::int64_t m_;
    std::int64_t lo_k_;
    std::vector<double> mass_, next_;
    double crossed_ = 0.0;
};

void check_target(double target_p) {
    if (!(target_p > 0.0 && target_p < 1.0)) throw DomainError("target_p must lie in (0, 1)");
}

}  // namespace

void PlannerConfig::validate() const {
    check_target(target_p);
    if (misleading_limit && !(*misleading_limit > 0.0 && *misleading_limit < 1.0)) {
        throw DomainError("misleading limit must lie in (0, 1)");
    }
    if (max_n < 1) throw DomainError("max_n must be at least 1");
    if (!(minerva_multiplier > 1.0)) throw DomainError("minerva multiplier must exceed 1");
}

double stop_probability(std::int64_t k_prev, std::int64_t n_prev, std::int64_t n_cur,
                        std::int64_t kmin, double p) {
    if (kmin > n_cur) return 0.0;
    const std::int64_t need = std::max<std::int64_t>(0, kmin - k_prev);
    const std::int64_t marginal = n_cur - n_prev;
    if (need > marginal) return 0.0;
    return kernel::log_binom_sf(need, BinomialSpec{marginal, p}).linear();
}

RoundPlan providence_plan_at(const RoundHistory& history, const PairwiseContest& contest,
                             const RiskLimit& alpha, std::int64_t cumulative_n) {
    if (cumulative_n <= history.last_n()) {
        throw DomainError("planned size must exceed the current sample size");
    }
    RoundPlan plan;
    plan.cumulative_n = cumulative_n;
    plan.kmin = audit::providence_kmin(history.last_k(), history.last_n(), cumulative_n, contest, alpha);
    plan.stop_prob =
        stop_probability(history.last_k(), history.last_n(), cumulative_n, plan.kmin, contest.p_a);
    if (history.empty()) {
        plan.misleading_prob =
            misleading_probability(cumulative_n, contest.p_a, TieRule::CountsAsMisleading);
    }
    return plan;
}

RoundPlan next_round_size(const RoundHistory& history, const PairwiseContest& contest,
                          const RiskLimit& alpha, double target_p, std::int64_t max_n,
                          SearchStrategy strategy) {
    check_target(target_p);
    ProvidenceEvaluator eval(history, contest, alpha);
    RoundPlan plan = search_round_size(history.last_n(), eval, target_p, max_n, strategy);
    if (history.empty()) {
        plan.misleading_prob =
            misleading_probability(plan.cumulative_n, contest.p_a, TieRule::CountsAsMisleading);
    }
    return plan;
}

RoundPlan next_round_size(const RoundHistory& history, const PairwiseContest& contest,
                          const RiskLimit& alpha, const PlannerConfig& config) {
    config.validate();
    ProvidenceEvaluator eval(history, contest, alpha);
    RoundPlan plan =
        search_round_size(history.last_n(), eval, config.target_p, config.max_n, config.strategy);
    if (history.empty()) {
        if (config.misleading_limit) {
            const std::int64_t n_m = misleading_min_round_size(
                contest.margin, *config.misleading_limit, config.max_n, config.tie_rule);
            if (n_m > plan.cumulative_n) plan = providence_plan_at(history, contest, alpha, n_m);
        }
        plan.misleading_prob = misleading_probability(plan.cumulative_n, contest.p_a, config.tie_rule);
    }
    return plan;
}

RoundPlan next_round_size_for(AuditKind kind, const RoundHistory& history,
                              const PairwiseContest& contest, const RiskLimit& alpha,
                              double target_p, std::int64_t max_n) {
    check_target(target_p);
    switch (kind) {
        case AuditKind::Providence:
            return next_round_size(history, contest, alpha, target_p, max_n);
        case AuditKind::Minerva:
            if (!history.empty()) {
                throw DomainError("minerva rounds after the first follow the predetermined schedule");
            }
            return next_round_size(history, contest, alpha, target_p, max_n);
        case AuditKind::EorBravo: {
            EorEvaluator eval(history, contest, alpha);
            return search_round_size(history.last_n(), eval, target_p, max_n,
                                     SearchStrategy::Minimal);
        }
        case AuditKind::SoBravo: {
            if (max_n <= history.last_n()) {
                throw CapacityError("max_n leaves no room for another round",
                                    RoundPlan{history.last_n(), history.last_n() + 1, 0.0, {}});
            }
            // Crossing probability is monotone in n, so the first size that
            // reaches the target is the minimum.
            SoCrossingDp dp(history.last_k(), history.last_n(), contest.p_a, contest, alpha);
            do {
                dp.step();
            } while (dp.crossed() < target_p && dp.m() < max_n);
            RoundPlan plan{dp.m(), audit::bravo_kmin(dp.m(), contest, alpha), dp.crossed(), {}};
            if (plan.stop_prob < target_p) throw_capacity(target_p, max_n, plan);
            return plan;
        }
    }
    throw DomainError("unknown audit kind");
}

std::vector<std::int64_t> minerva_schedule(std::int64_t first_round, double multiplier,
                                           std::size_t rounds) {
    if (first_round < 1) throw DomainError("minerva schedule: first round must be at least 1");
    if (!(multiplier > 1.0)) throw DomainError("minerva schedule: multiplier must exceed 1");
    std::vector<std::int64_t> out;
    out.reserve(rounds);
    std::int64_t marginal = first_round;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < rounds; ++i) {
        if (i > 0) {
            marginal = static_cast<std::int64_t>(
                std::floor(static_cast<double>(marginal) * multiplier + 0.5));
        }
        total += marginal;
        out.push_back(total);
    }
    return out;
}

double misleading_probability(std::int64_t n, double p_a, TieRule ties) {
    if (n < 1) throw DomainError("misleading probability needs n >= 1");
    const std::int64_t top = ties == TieRule::CountsAsMisleading ? n / 2 : (n - 1) / 2;
    return kernel::log_binom_cdf(top, BinomialSpec{n, p_a}).linear();
}

std::int64_t misleading_min_round_size(double margin, double limit, std::int64_t max_n,
                                       TieRule ties) {
    const auto contest = PairwiseContest::from_margin(margin);
    if (!(limit > 0.0 && limit < 1.0)) throw DomainError("misleading limit must lie in (0, 1)");
    // Odd and even sizes interleave, so the scan visits every n.
    for (std::int64_t n = 1; n <= max_n; ++n) {
        if (misleading_probability(n, contest.p_a, ties) <= limit) return n;
    }
    RoundPlan best{max_n, 0, 0.0, misleading_probability(max_n, contest.p_a, ties)};
    throw CapacityError("misleading limit " + std::to_string(limit) + " not reachable within " +
                            std::to_string(max_n) + " ballots",
                        best);
}

FirstRoundStopProbs first_round_stop_probs_at(std::int64_t n, double margin,
                                              const RiskLimit& alpha) {
    if (n < 1) throw DomainError("first_round_stop_probs_at needs n >= 1");
    const auto contest = PairwiseContest::from_margin(margin);
    FirstRoundStopProbs out;
    const std::int64_t prov_kmin = audit::providence_kmin(0, 0, n, contest, alpha);
    out.providence = stop_probability(0, 0, n, prov_kmin, contest.p_a);
    const std::int64_t bravo = audit::bravo_kmin(n, contest, alpha);
    out.eor_bravo = stop_probability(0, 0, n, bravo, contest.p_a);
    out.so_bravo = so_bravo_crossing_probs(0, 0, n, contest.p_a, contest, alpha).back();
    return out;
}

std::vector<double> so_bravo_crossing_probs(std::int64_t k_prev, std::int64_t n_prev,
                                            std::int64_t max_extra, double p,
                                            const PairwiseContest& contest,
                                            const RiskLimit& alpha) {
    if (max_extra < 0) throw DomainError("so crossing: max_extra must be nonnegative");
    if (k_prev < 0 || k_prev > n_prev) throw DomainError("so crossing: need 0 <= k_prev <= n_prev");
    SoCrossingDp dp(k_prev, n_prev, p, contest, alpha);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(max_extra) + 1);
    out.push_back(0.0);
    for (std::int64_t i = 0; i < max_extra; ++i) {
        dp.step();
        out.push_back(dp.crossed());
    }
    return out;
}

std::int64_t multi_candidate_round_size(std::span<const PairState> pairs,
                                        std::int64_t total_prev, const RiskLimit& alpha,
                                        double target_p, std::int64_t max_n) {
    if (pairs.empty()) throw DomainError("multi-candidate planning needs at least one pair");
    std::int64_t out = 0;
    for (const PairState& pair : pairs) {
        const RoundPlan plan = next_round_size(pair.history, pair.contest, alpha, target_p, max_n);
        const double marginal = static_cast<double>(plan.cumulative_n - pair.history.last_n());
        // The tolerance absorbs representation error in fractions like 0.7.
        const double scaled = marginal / pair.contest.relevant_fraction;
        const auto size = total_prev + static_cast<std::int64_t>(std::ceil(scaled * (1.0 - 1e-12)));
        out = std::max(out, size);
    }
    return out;
}

}  // namespace providence::planner

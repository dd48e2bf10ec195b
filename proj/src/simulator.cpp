#include "providence/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>

#include "providence/errors.hpp"
#include "providence/rng.hpp"

namespace providence::sim {

std::string_view to_string(Hypothesis h) { return h == Hypothesis::Alternative ? "H_a" : "H_0"; }

SimContest SimContest::pairwise(const PairwiseContest& contest) {
    contest.validate();
    SimContest c;
    c.shares = {contest.p_a * contest.relevant_fraction,
                (1.0 - contest.p_a) * contest.relevant_fraction};
    c.pairs = {contest};
    return c;
}

SimContest SimContest::from_results(const election::ContestResults& results) {
    SimContest c;
    const double total = static_cast<double>(results.total_ballots_cast);
    const std::size_t w = results.winner_index();
    c.shares.push_back(static_cast<double>(results.tallies[w].second) / total);
    for (const auto& pair : election::derive_named_pairwise(results)) {
        c.shares.push_back(static_cast<double>(results.tally_of(pair.loser)) / total);
        c.pairs.push_back(pair.contest);
    }
    return c;
}

void SimContest::validate() const {
    if (pairs.empty() || shares.size() != pairs.size() + 1) {
        throw DomainError("simulation contest needs one share per candidate and one pair per loser");
    }
    double sum = 0.0;
    for (double s : shares) {
        if (!(s >= 0.0)) throw DomainError("simulation shares must be nonnegative");
        sum += s;
    }
    if (sum > 1.0 + 1e-9) throw DomainError("simulation shares exceed 1");
    for (const auto& p : pairs) p.validate();
}

SchedulePolicy SchedulePolicy::target(double p) {
    SchedulePolicy s;
    s.kind = Kind::TargetP;
    s.target_p = p;
    return s;
}

SchedulePolicy SchedulePolicy::predetermined(std::vector<std::int64_t> sizes) {
    SchedulePolicy s;
    s.kind = Kind::Predetermined;
    s.sizes = std::move(sizes);
    return s;
}

SchedulePolicy SchedulePolicy::adversarial(std::string name, AdversaryRule rule) {
    SchedulePolicy s;
    s.kind = Kind::Adversarial;
    s.rule_name = std::move(name);
    s.rule = std::move(rule);
    return s;
}

double SimulationReport::conditional_stop_fraction(std::size_t round) const {
    if (round < 1 || round > per_round_reached.size() || per_round_reached[round - 1] == 0) return 0.0;
    return static_cast<double>(per_round_stops[round - 1]) /
           static_cast<double>(per_round_reached[round - 1]);
}

namespace {

constexpr std::uint64_t kBallotChannel = 0;
constexpr std::uint64_t kPositionChannel = 1;

// Integer sums only, so merging partial results is exact in any order.
struct Totals {
    std::vector<std::int64_t> stops, reached, round_ballots, round_touches;
    std::int64_t ballots = 0, rounds = 0, misleading = 0, misleading_sequence = 0;
    std::int64_t touches = 0;
    std::int64_t county_ballots = 0, county_rounds = 0, county_touches = 0;

    explicit Totals(std::size_t max_rounds)
        : stops(max_rounds), reached(max_rounds), round_ballots(max_rounds), round_touches(max_rounds) {}

    void merge(const Totals& o) {
        for (std::size_t i = 0; i < stops.size(); ++i) {
            stops[i] += o.stops[i];
            reached[i] += o.reached[i];
            round_ballots[i] += o.round_ballots[i];
            round_touches[i] += o.round_touches[i];
        }
        ballots += o.ballots;
        rounds += o.rounds;
        misleading += o.misleading;
        misleading_sequence += o.misleading_sequence;
        touches += o.touches;
        county_ballots += o.county_ballots;
        county_rounds += o.county_rounds;
        county_touches += o.county_touches;
    }
};

struct PairTrial {
    std::vector<std::int64_t> ns, ks;
    std::int64_t n = 0, k = 0;
    bool confirmed = false;
    bool so_crossed = false;

    RoundHistory history() const { return RoundHistory(ns, ks); }
};

// Shares used to draw ballots under the chosen hypothesis. Under H_0 the
// winner is tied with the strongest loser.
std::vector<double> sampling_shares(const SimContest& contest, Hypothesis h) {
    std::vector<double> s = contest.shares;
    if (h == Hypothesis::Null) {
        std::size_t strongest = 1;
        for (std::size_t i = 2; i < s.size(); ++i) {
            if (s[i] > s[strongest]) strongest = i;
        }
        const double mean = (s[0] + s[strongest]) / 2.0;
        s[0] = s[strongest] = mean;
    }
    return s;
}

class TrialRunner {
public:
    TrialRunner(const SimContest& contest, const TrialPolicy& policy, const RiskLimit& alpha,
                std::uint64_t seed, const RunOptions& options,
                const std::optional<audit::MinervaAudit>& minerva)
        : contest_(contest),
          policy_(policy),
          alpha_(alpha),
          seed_(seed),
          manifest_(options.manifest),
          minerva_(minerva),
          totals_(policy.max_rounds) {
        const auto shares = sampling_shares(contest, policy.hypothesis);
        double acc = 0.0;
        for (double s : shares) {
            acc += s;
            cumulative_.push_back(acc);
        }
        for (const auto& p : contest.pairs) {
            so_a_.push_back(std::log(p.p_a / p.p_0));
            so_b_.push_back(std::log((1.0 - p.p_a) / (1.0 - p.p_0)));
        }
        if (manifest_) {
            stamp_.assign(manifest_->size(), 0);
            county_mask_ = manifest_->county_mask(manifest_->largest_county());
        }
    }

    void run(std::int64_t trial) {
        std::vector<PairTrial> pairs(contest_.pairs.size());
        std::int64_t total = 0;
        bool misleading = false;
        bool misleading_sequence = false;
        std::int64_t rounds_done = 0;
        std::int64_t county_rounds = 0;

        for (std::size_t r = 0; r < policy_.max_rounds; ++r) {
            const std::optional<std::int64_t> next = next_total(pairs, total, r);
            if (!next || *next <= total) break;
            const std::int64_t marginal = *next - total;
            totals_.reached[r] += 1;
            totals_.round_ballots[r] += marginal;
            ++rounds_done;

            draw_round(pairs, trial, r, marginal);
            total = *next;
            if (manifest_) {
                const auto [touches, county_ballots, county_touches] = touch_round(trial, r, marginal);
                totals_.round_touches[r] += touches;
                totals_.touches += touches;
                totals_.county_ballots += county_ballots;
                totals_.county_touches += county_touches;
                if (county_ballots > 0) ++county_rounds;
            }

            bool all_confirmed = true;
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                PairTrial& p = pairs[i];
                if (p.k < p.n - p.k) misleading = true;
                // A round of irrelevant ballots leaves the pair's history as it was.
                if (p.n == (p.ns.empty() ? 0 : p.ns.back())) {
                    all_confirmed = all_confirmed && p.confirmed;
                    continue;
                }
                p.ns.push_back(p.n);
                p.ks.push_back(p.k);
                if (!p.confirmed && decide(i, p, r)) {
                    p.confirmed = true;
                    if (policy_.kind == AuditKind::SoBravo &&
                        p.k < audit::bravo_kmin(p.n, contest_.pairs[i], alpha_)) {
                        misleading_sequence = true;
                    }
                }
                all_confirmed = all_confirmed && p.confirmed;
            }
            if (all_confirmed) {
                totals_.stops[r] += 1;
                break;
            }
        }
        totals_.ballots += total;
        totals_.rounds += rounds_done;
        totals_.county_rounds += county_rounds;
        if (misleading) ++totals_.misleading;
        if (misleading_sequence) ++totals_.misleading_sequence;
    }

    const Totals& totals() const { return totals_; }

private:
    // Next cumulative draw count over all ballots, or nullopt to end the trial.
    std::optional<std::int64_t> next_total(const std::vector<PairTrial>& pairs, std::int64_t total,
                                           std::size_t r) {
        const SchedulePolicy& s = policy_.schedule;
        switch (s.kind) {
            case SchedulePolicy::Kind::Predetermined:
                if (r >= s.sizes.size()) return std::nullopt;
                return s.sizes[r];
            case SchedulePolicy::Kind::Adversarial: {
                const PairTrial& p = pairs.front();
                const std::int64_t target = s.rule(p.history());
                if (target <= p.n) throw DomainError("adversary must grow the sample");
                return total + scaled(target - p.n, contest_.pairs.front());
            }
            case SchedulePolicy::Kind::TargetP:
                break;
        }
        if (policy_.kind == AuditKind::Minerva && r > 0) {
            if (r >= minerva_->schedule().size()) return std::nullopt;
            return minerva_->schedule()[r];
        }
        std::int64_t out = total;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const PairTrial& p = pairs[i];
            if (p.confirmed) continue;
            const std::optional<std::int64_t> target = planned(i, p);
            if (!target) return std::nullopt;
            out = std::max(out, total + scaled(*target - p.n, contest_.pairs[i]));
        }
        return out;
    }

    static std::int64_t scaled(std::int64_t marginal, const PairwiseContest& c) {
        if (c.relevant_fraction >= 1.0) return marginal;
        return static_cast<std::int64_t>(
            std::ceil(static_cast<double>(marginal) / c.relevant_fraction * (1.0 - 1e-12)));
    }

    std::optional<std::int64_t> planned(std::size_t pair, const PairTrial& p) {
        const auto key = std::make_tuple(pair, p.n, p.k);
        if (auto it = plan_cache_.find(key); it != plan_cache_.end()) return it->second;
        std::optional<std::int64_t> out;
        try {
            const AuditKind kind = policy_.kind == AuditKind::Minerva ? AuditKind::Providence : policy_.kind;
            out = planner::next_round_size_for(kind, p.history(), contest_.pairs[pair], alpha_,
                                               policy_.schedule.target_p, policy_.max_n)
                      .cumulative_n;
        } catch (const planner::CapacityError&) {
            out = std::nullopt;
        }
        plan_cache_.emplace(key, out);
        return out;
    }

    void draw_round(std::vector<PairTrial>& pairs, std::int64_t trial, std::size_t r,
                    std::int64_t marginal) {
        const rng::KeyedStream stream(seed_, {static_cast<std::uint64_t>(trial), r, kBallotChannel});
        const bool so = policy_.kind == AuditKind::SoBravo;
        const double t = alpha_.log_threshold();
        for (std::int64_t i = 0; i < marginal; ++i) {
            const double u = stream.uniform_at(static_cast<std::uint64_t>(i));
            const auto cat = static_cast<std::size_t>(
                std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin());
            if (cat == 0) {
                for (std::size_t j = 0; j < pairs.size(); ++j) {
                    ++pairs[j].n;
                    ++pairs[j].k;
                    if (so && !pairs[j].so_crossed) check_so(j, pairs[j], t);
                }
            } else if (cat <= pairs.size()) {
                PairTrial& p = pairs[cat - 1];
                ++p.n;
                if (so && !p.so_crossed) check_so(cat - 1, p, t);
            }
        }
    }

    void check_so(std::size_t j, PairTrial& p, double t) const {
        const double v = static_cast<double>(p.k) * so_a_[j] + static_cast<double>(p.n - p.k) * so_b_[j];
        if (v >= t) p.so_crossed = true;
    }

    bool decide(std::size_t i, const PairTrial& p, std::size_t r) {
        const std::int64_t n_prev = p.ns.size() >= 2 ? p.ns[p.ns.size() - 2] : 0;
        const std::int64_t k_prev = p.ks.size() >= 2 ? p.ks[p.ks.size() - 2] : 0;
        switch (policy_.kind) {
            case AuditKind::Providence: {
                const auto key = std::make_tuple(i, k_prev, n_prev, p.n);
                auto it = kmin_cache_.find(key);
                if (it == kmin_cache_.end()) {
                    it = kmin_cache_
                             .emplace(key, audit::providence_kmin(k_prev, n_prev, p.n,
                                                                  contest_.pairs[i], alpha_))
                             .first;
                }
                return p.k >= it->second;
            }
            case AuditKind::Minerva:
                if (p.n != minerva_->schedule()[r]) {
                    throw ScheduleViolation("minerva trial departed from its schedule");
                }
                return p.k >= minerva_->kmins()[r];
            case AuditKind::EorBravo:
                return p.k >= audit::bravo_kmin(p.n, contest_.pairs[i], alpha_);
            case AuditKind::SoBravo:
                return p.so_crossed;
        }
        return false;
    }

    std::tuple<std::int64_t, std::int64_t, std::int64_t> touch_round(std::int64_t trial,
                                                                     std::size_t r,
                                                                     std::int64_t marginal) {
        const rng::KeyedStream stream(seed_, {static_cast<std::uint64_t>(trial), r, kPositionChannel});
        ++stamp_id_;
        const auto total = static_cast<std::uint64_t>(manifest_->total());
        std::int64_t touches = 0, county_ballots = 0, county_touches = 0;
        for (std::int64_t i = 0; i < marginal; ++i) {
            const auto pos = 1 + static_cast<std::int64_t>(
                                     rng::bounded(stream.at(static_cast<std::uint64_t>(i)), total));
            const std::size_t idx = manifest_->locate(pos);
            const bool in_county = county_mask_[idx];
            if (in_county) ++county_ballots;
            if (stamp_[idx] != stamp_id_) {
                stamp_[idx] = stamp_id_;
                ++touches;
                if (in_county) ++county_touches;
            }
        }
        return {touches, county_ballots, county_touches};
    }

    const SimContest& contest_;
    const TrialPolicy& policy_;
    RiskLimit alpha_;
    std::uint64_t seed_;
    const election::BallotManifest* manifest_;
    const std::optional<audit::MinervaAudit>& minerva_;
    Totals totals_;
    std::vector<double> cumulative_;
    std::vector<double> so_a_, so_b_;
    std::map<std::tuple<std::size_t, std::int64_t, std::int64_t>, std::optional<std::int64_t>> plan_cache_;
    std::map<std::tuple<std::size_t, std::int64_t, std::int64_t, std::int64_t>, std::int64_t> kmin_cache_;
    std::vector<std::uint64_t> stamp_;
    std::uint64_t stamp_id_ = 0;
    std::vector<bool> county_mask_;
};

double mean(std::int64_t sum, std::int64_t count) {
    return count == 0 ? 0.0 : static_cast<double>(sum) / static_cast<double>(count);
}

}  // namespace

SimulationReport run_trials(const SimContest& contest, const TrialPolicy& policy,
                            const RiskLimit& alpha, std::int64_t trials, std::uint64_t seed,
                            const RunOptions& options) {
    if (trials < 1) throw DomainError("trials must be at least 1");
    if (policy.max_rounds < 1) throw DomainError("max_rounds must be at least 1");
    contest.validate();
    const auto& sched = policy.schedule;
    if (sched.kind == SchedulePolicy::Kind::TargetP &&
        !(sched.target_p > 0.0 && sched.target_p < 1.0)) {
        throw DomainError("target_p must lie in (0, 1)");
    }
    if (sched.kind == SchedulePolicy::Kind::Adversarial) {
        if (!sched.rule) throw DomainError("adversarial schedule needs a rule");
        if (!contest.single_pair()) throw DomainError("adversarial schedules need a single pair");
    }
    if (sched.kind == SchedulePolicy::Kind::Predetermined) {
        for (std::size_t i = 0; i < sched.sizes.size(); ++i) {
            if (sched.sizes[i] <= (i == 0 ? 0 : sched.sizes[i - 1])) {
                throw DomainError("predetermined sizes must strictly increase");
            }
        }
    }
    if (options.manifest && options.manifest->empty()) throw DomainError("manifest is empty");

    std::optional<audit::MinervaAudit> minerva;
    if (policy.kind == AuditKind::Minerva) {
        if (!contest.single_pair() || contest.pairs.front().relevant_fraction < 1.0) {
            throw DomainError("minerva trials need a single pair without irrelevant ballots");
        }
        std::vector<std::int64_t> schedule;
        if (sched.kind == SchedulePolicy::Kind::Predetermined) {
            schedule = sched.sizes;
            if (schedule.size() > policy.max_rounds) schedule.resize(policy.max_rounds);
        } else if (sched.kind == SchedulePolicy::Kind::TargetP) {
            const auto first = planner::next_round_size({}, contest.pairs.front(), alpha,
                                                        sched.target_p, policy.max_n);
            schedule = planner::minerva_schedule(first.cumulative_n, policy.minerva_multiplier,
                                                 policy.max_rounds);
        } else {
            throw ScheduleViolation("minerva requires a predetermined schedule");
        }
        minerva.emplace(contest.pairs.front(), alpha, std::move(schedule));
    }

    const unsigned workers =
        std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(trials)));
    std::vector<Totals> partial(workers, Totals(policy.max_rounds));
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](unsigned w) {
        try {
            TrialRunner runner(contest, policy, alpha, seed, options, minerva);
            const std::int64_t begin = trials * w / workers;
            const std::int64_t end = trials * (w + 1) / workers;
            for (std::int64_t t = begin; t < end; ++t) runner.run(t);
            partial[w] = runner.totals();
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    Totals totals(policy.max_rounds);
    for (const auto& p : partial) totals.merge(p);

    SimulationReport rep;
    rep.kind = policy.kind;
    rep.hypothesis = policy.hypothesis;
    if (sched.kind == SchedulePolicy::Kind::TargetP) rep.target_p = sched.target_p;
    rep.trials = trials;
    rep.seed = seed;
    rep.per_round_stops = totals.stops;
    rep.per_round_reached = totals.reached;
    std::int64_t stopped = 0;
    for (std::size_t r = 0; r < policy.max_rounds; ++r) {
        rep.per_round_ballots_mean.push_back(mean(totals.round_ballots[r], totals.reached[r]));
        stopped += totals.stops[r];
    }
    rep.total_ballots_mean = mean(totals.ballots, trials);
    rep.rounds_mean = mean(totals.rounds, trials);
    rep.stop_fraction = mean(stopped, trials);
    rep.misleading_sample_fraction = mean(totals.misleading, trials);
    rep.misleading_sequence_fraction = mean(totals.misleading_sequence, trials);
    if (options.manifest) {
        for (std::size_t r = 0; r < policy.max_rounds; ++r) {
            rep.precinct_touches_mean_per_round.push_back(mean(totals.round_touches[r], trials));
        }
        rep.precinct_touches_mean = mean(totals.touches, trials);
        rep.largest_county = CountyAggregate{options.manifest->largest_county(),
                                             mean(totals.county_ballots, trials),
                                             mean(totals.county_rounds, trials),
                                             mean(totals.county_touches, trials)};
    }
    return rep;
}

AdversaryRule make_adversary(std::string_view name, std::int64_t base,
                             const PairwiseContest& contest, const RiskLimit& alpha) {
    if (base < 1) throw DomainError("adversary base size must be at least 1");
    if (name == "b2") {
        return [](const RoundHistory& h) { return h.last_n() + 1; };
    }
    if (name == "constant") {
        return [base](const RoundHistory& h) { return h.last_n() + base; };
    }
    if (name == "shrink_grow") {
        return [base, contest, alpha](const RoundHistory& h) {
            if (h.empty()) return base;
            const std::size_t j = h.rounds();
            const std::int64_t kmin = audit::providence_kmin(h.k(j - 1), h.n(j - 1), h.n(j), contest, alpha);
            const double gap = static_cast<double>(kmin - h.last_k());
            const bool close = gap <= std::sqrt(static_cast<double>(h.last_n()));
            return h.last_n() + (close ? std::max<std::int64_t>(1, base / 2) : 2 * base);
        };
    }
    throw DomainError("unknown adversary '" + std::string(name) + "'");
}

SimulationReport adversarial_policy_trials(const PairwiseContest& contest, const RiskLimit& alpha,
                                           const SchedulePolicy& rule, std::int64_t trials,
                                           std::uint64_t seed, std::size_t max_rounds) {
    TrialPolicy policy;
    policy.kind = AuditKind::Providence;
    policy.schedule = rule;
    policy.hypothesis = Hypothesis::Null;
    policy.max_rounds = max_rounds;
    return run_trials(SimContest::pairwise(contest), policy, alpha, trials, seed);
}

std::vector<std::vector<std::int64_t>> precinct_touch_trials(
    const election::BallotManifest& manifest,
    const std::vector<std::vector<std::int64_t>>& round_sizes, std::uint64_t seed) {
    if (manifest.empty()) throw DomainError("manifest is empty");
    const auto total = static_cast<std::uint64_t>(manifest.total());
    std::vector<std::uint64_t> stamp(manifest.size(), 0);
    std::uint64_t stamp_id = 0;
    std::vector<std::vector<std::int64_t>> out;
    for (std::size_t t = 0; t < round_sizes.size(); ++t) {
        std::vector<std::int64_t> per_round;
        for (std::size_t r = 0; r < round_sizes[t].size(); ++r) {
            if (round_sizes[t][r] < 0) throw DomainError("round sizes must be nonnegative");
            const rng::KeyedStream stream(seed, {t, r, kPositionChannel});
            ++stamp_id;
            std::int64_t touches = 0;
            for (std::int64_t i = 0; i < round_sizes[t][r]; ++i) {
                const auto pos = 1 + static_cast<std::int64_t>(
                                         rng::bounded(stream.at(static_cast<std::uint64_t>(i)), total));
                const std::size_t idx = manifest.locate(pos);
                if (stamp[idx] != stamp_id) {
                    stamp[idx] = stamp_id;
                    ++touches;
                }
            }
            per_round.push_back(touches);
        }
        out.push_back(std::move(per_round));
    }
    return out;
}

std::uint64_t cell_seed(std::uint64_t seed, AuditKind kind, double p) {
    const auto micro = static_cast<std::uint64_t>(std::llround(p * 1e6));
    return rng::KeyedStream(seed, {static_cast<std::uint64_t>(kind), micro}).key();
}

std::vector<SweepCell> sweep_p(const SimContest& contest, const std::vector<AuditKind>& kinds,
                               const std::vector<double>& p_grid, const RiskLimit& alpha,
                               std::int64_t trials, std::uint64_t seed, const RunOptions& options,
                               std::size_t max_rounds, Hypothesis hypothesis) {
    for (double p : p_grid) {
        if (!(p > 0.0 && p < 1.0)) throw DomainError("p grid values must lie in (0, 1)");
    }
    std::vector<SweepCell> out;
    for (AuditKind kind : kinds) {
        for (double p : p_grid) {
            TrialPolicy policy;
            policy.kind = kind;
            policy.schedule = SchedulePolicy::target(p);
            policy.max_rounds = max_rounds;
            policy.hypothesis = hypothesis;
            out.push_back({kind, p, run_trials(contest, policy, alpha, trials, cell_seed(seed, kind, p), options)});
        }
    }
    return out;
}

std::vector<double> default_p_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) grid.push_back(i * 0.05);
    return grid;
}

nlohmann::json to_json(const SimulationReport& r) {
    nlohmann::json j;
    j["kind"] = std::string(audit::to_string(r.kind));
    j["hypothesis"] = std::string(to_string(r.hypothesis));
    j["target_p"] = r.target_p ? nlohmann::json(*r.target_p) : nlohmann::json(nullptr);
    j["trials"] = r.trials;
    j["seed"] = r.seed;
    j["per_round_stops"] = r.per_round_stops;
    j["per_round_reached"] = r.per_round_reached;
    j["per_round_ballots_mean"] = r.per_round_ballots_mean;
    j["total_ballots_mean"] = r.total_ballots_mean;
    j["rounds_mean"] = r.rounds_mean;
    j["stop_fraction"] = r.stop_fraction;
    j["misleading_sample_fraction"] = r.misleading_sample_fraction;
    j["misleading_sequence_fraction"] = r.misleading_sequence_fraction;
    j["precinct_touches_mean_per_round"] = r.precinct_touches_mean_per_round;
    j["precinct_touches_mean"] = r.precinct_touches_mean;
    if (r.largest_county) {
        j["largest_county"] = {{"county", r.largest_county->county},
                               {"ballots_mean", r.largest_county->ballots_mean},
                               {"rounds_mean", r.largest_county->rounds_mean},
                               {"precinct_touches_mean", r.largest_county->precinct_touches_mean}};
    } else {
        j["largest_county"] = nullptr;
    }
    return j;
}

SimulationReport report_from_json(const nlohmann::json& j) {
    SimulationReport r;
    r.kind = audit::parse_audit_kind(j.at("kind").get<std::string>());
    r.hypothesis = j.at("hypothesis").get<std::string>() == "H_0" ? Hypothesis::Null : Hypothesis::Alternative;
    if (!j.at("target_p").is_null()) r.target_p = j.at("target_p").get<double>();
    r.trials = j.at("trials").get<std::int64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.per_round_stops = j.at("per_round_stops").get<std::vector<std::int64_t>>();
    r.per_round_reached = j.at("per_round_reached").get<std::vector<std::int64_t>>();
    r.per_round_ballots_mean = j.at("per_round_ballots_mean").get<std::vector<double>>();
    r.total_ballots_mean = j.at("total_ballots_mean").get<double>();
    r.rounds_mean = j.at("rounds_mean").get<double>();
    r.stop_fraction = j.at("stop_fraction").get<double>();
    r.misleading_sample_fraction = j.at("misleading_sample_fraction").get<double>();
    r.misleading_sequence_fraction = j.at("misleading_sequence_fraction").get<double>();
    r.precinct_touches_mean_per_round = j.at("precinct_touches_mean_per_round").get<std::vector<double>>();
    r.precinct_touches_mean = j.at("precinct_touches_mean").get<double>();
    if (!j.at("largest_county").is_null()) {
        const auto& c = j.at("largest_county");
        r.largest_county = CountyAggregate{c.at("county").get<std::string>(), c.at("ballots_mean").get<double>(),
                                           c.at("rounds_mean").get<double>(),
                                           c.at("precinct_touches_mean").get<double>()};
    }
    return r;
}

std::string sweep_to_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out.precision(17);
    out << "kind,p,round,reached,stops,conditional_stop,mean_ballots,stop_fraction,"
           "total_ballots_mean,rounds_mean,misleading_fraction,misleading_sequence_fraction,"
           "precinct_touches_mean,county_ballots_mean,county_rounds_mean,county_touches_mean\n";
    for (const auto& cell : cells) {
        const auto& r = cell.report;
        for (std::size_t i = 0; i < r.per_round_stops.size(); ++i) {
            out << audit::to_string(cell.kind) << ',' << cell.p << ',' << (i + 1) << ','
                << r.per_round_reached[i] << ',' << r.per_round_stops[i] << ','
                << r.conditional_stop_fraction(i + 1) << ',' << r.per_round_ballots_mean[i] << ','
                << r.stop_fraction << ',' << r.total_ballots_mean << ',' << r.rounds_mean << ','
                << r.misleading_sample_fraction << ',' << r.misleading_sequence_fraction << ','
                << r.precinct_touches_mean << ',';
            if (r.largest_county) {
                out << r.largest_county->ballots_mean << ',' << r.largest_county->rounds_mean << ','
                    << r.largest_county->precinct_touches_mean;
            } else {
                out << ",,";
            }
            out << '\n';
        }
    }
    return out.str();
}

namespace {

constexpr std::string_view kSweepHeader =
    "kind,p,round,reached,stops,conditional_stop,mean_ballots,stop_fraction,"
    "total_ballots_mean,rounds_mean,misleading_fraction,misleading_sequence_fraction,"
    "precinct_touches_mean,county_ballots_mean,county_rounds_mean,county_touches_mean";

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T>
T parse_number(const std::string& field, int line) {
    T value{};
    const char* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ParseError("bad number '" + field + "'", line);
    return value;
}

}  // namespace

std::vector<SweepCell> sweep_from_csv(std::string_view text) {
    std::vector<SweepCell> cells;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != kSweepHeader) throw ParseError("unexpected sweep CSV header", line_no);
            header = true;
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 16) throw ParseError("expected 16 fields", line_no);
        AuditKind kind;
        try {
            kind = audit::parse_audit_kind(f[0]);
        } catch (const DomainError& e) {
            throw ParseError(e.what(), line_no);
        }
        const double p = parse_number<double>(f[1], line_no);
        const auto round = parse_number<std::size_t>(f[2], line_no);
        const bool same_cell = !cells.empty() && cells.back().kind == kind && cells.back().p == p;
        if (!same_cell) {
            if (round != 1) throw ParseError("a sweep cell must start at round 1", line_no);
            SweepCell cell{kind, p, {}};
            cell.report.kind = kind;
            cell.report.target_p = p;
            cells.push_back(std::move(cell));
        }
        SimulationReport& r = cells.back().report;
        if (round != r.per_round_stops.size() + 1) throw ParseError("rounds must be consecutive", line_no);
        r.per_round_reached.push_back(parse_number<std::int64_t>(f[3], line_no));
        r.per_round_stops.push_back(parse_number<std::int64_t>(f[4], line_no));
        r.per_round_ballots_mean.push_back(parse_number<double>(f[6], line_no));
        r.trials = r.per_round_reached.front();
        r.stop_fraction = parse_number<double>(f[7], line_no);
        r.total_ballots_mean = parse_number<double>(f[8], line_no);
        r.rounds_mean = parse_number<double>(f[9], line_no);
        r.misleading_sample_fraction = parse_number<double>(f[10], line_no);
        r.misleading_sequence_fraction = parse_number<double>(f[11], line_no);
        r.precinct_touches_mean = parse_number<double>(f[12], line_no);
        if (!f[13].empty()) {
            CountyAggregate county;
            county.ballots_mean = parse_number<double>(f[13], line_no);
            county.rounds_mean = parse_number<double>(f[14], line_no);
            county.precinct_touches_mean = parse_number<double>(f[15], line_no);
            r.largest_county = county;
        }
    }
    if (!header) throw ParseError("empty sweep CSV", 0);
    return cells;
}

}  // namespace providence::sim

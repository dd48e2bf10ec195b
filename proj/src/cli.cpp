// Command-line entry points. Every subcommand validates its flags, makes one
// library call and prints the result; JSON output uses the same encoders as
// the HTTP service.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "providence/errors.hpp"
#include "providence/json_io.hpp"
#include "providence/queries.hpp"
#include "providence/service.hpp"
#include "providence/simulator.hpp"
#include "providence/workload.hpp"

using namespace providence;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitCapacity = 3;

enum class Format { Table, Json, Csv };

std::string full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Output {
    std::string path;
    void write(const std::string& text) const {
        if (path.empty()) {
            std::cout << text;
            if (!text.empty() && text.back() != '\n') std::cout << '\n';
            return;
        }
        session::atomic_write(path, text);
    }
};

struct ContestFlags {
    std::optional<double> margin, p_a;
    double relevant_fraction = 1.0;

    void add(CLI::App* app) {
        app->add_option("--margin", margin, "Relevant margin (w - l) / (w + l)");
        app->add_option("--p-a", p_a, "Winner share among relevant ballots");
        app->add_option("--relevant-fraction", relevant_fraction, "Share of ballots relevant to the pair")
            ->check(CLI::Range(0.0, 1.0));
    }
    audit::PairwiseContest contest() const { return queries::contest_from(margin, p_a, relevant_fraction); }
};

std::vector<double> parse_grid(const std::string& text) {
    if (text.empty() || text == "default") return sim::default_p_grid();
    std::vector<double> out;
    if (std::count(text.begin(), text.end(), ':') == 2) {
        double lo = 0, hi = 0, step = 0;
        if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || !(step > 0) || hi < lo) {
            throw DomainError("--grid range must be lo:hi:step");
        }
        const auto count = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
        for (int i = 0; i < count; ++i) out.push_back(std::round((lo + i * step) * 1e9) / 1e9);
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw DomainError("--grid entry '" + item + "' is not a number");
        }
    }
    return out;
}

std::string plan_table(const planner::RoundPlan& plan) {
    std::ostringstream os;
    os << "cumulative_n    " << plan.cumulative_n << "\n"
       << "kmin            " << plan.kmin << "\n"
       << "stop_prob       " << full(plan.stop_prob) << "\n";
    if (plan.misleading_prob) os << "misleading_prob " << full(*plan.misleading_prob) << "\n";
    return os.str();
}

std::string plan_csv(const planner::RoundPlan& plan) {
    std::string out = "cumulative_n,kmin,stop_prob,misleading_prob\n";
    out += std::to_string(plan.cumulative_n) + "," + std::to_string(plan.kmin) + "," + full(plan.stop_prob) + "," +
           (plan.misleading_prob ? full(*plan.misleading_prob) : "") + "\n";
    return out;
}

json sweep_json(const std::vector<sim::SweepCell>& cells) {
    json out = json::array();
    for (const auto& c : cells) {
        out.push_back({{"kind", audit::to_string(c.kind)}, {"p", c.p}, {"report", sim::to_json(c.report)}});
    }
    return json{{"cells", out}};
}

std::vector<sim::SweepCell> cells_from_json(const json& j) {
    std::vector<sim::SweepCell> cells;
    for (const json& c : json_io::require(j, "cells")) {
        cells.push_back({audit::parse_audit_kind(json_io::require_string(c, "kind")), json_io::require_number(c, "p"),
                         sim::report_from_json(json_io::require(c, "report"))});
    }
    return cells;
}

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : std::move(fallback);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Round-by-round ballot-polling audit tools"};
    app.require_subcommand(1);

    Format format = Format::Table;
    const std::map<std::string, Format> formats{{"table", Format::Table}, {"json", Format::Json}, {"csv", Format::Csv}};
    Output out;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--format", format, "Output format")->transform(CLI::CheckedTransformer(formats));
        sub->add_option("--out", out.path, "Write output to this file instead of stdout");
    };

    // risk -----------------------------------------------------------------
    auto* risk = app.add_subcommand("risk", "Verdict and measured risk for a round history");
    ContestFlags risk_contest;
    risk_contest.add(risk);
    double alpha = 0.1;
    std::string audit_name = "providence";
    std::string rounds_text, order_file;
    std::vector<std::int64_t> schedule;
    risk->add_option("--alpha", alpha, "Risk limit")->required();
    risk->add_option("--audit", audit_name, "providence | minerva | eor_bravo | so_bravo");
    risk->add_option("--rounds", rounds_text, "Cumulative history n1:k1,n2:k2,...");
    risk->add_option("--order-file", order_file, "Selection order, one 0/1 per line, '--' between rounds");
    risk->add_option("--schedule", schedule, "Minerva schedule of cumulative sizes")->delimiter(',');
    add_common(risk);

    // kmin -----------------------------------------------------------------
    auto* kmin = app.add_subcommand("kmin", "Minimum cumulative winner tally that stops a round");
    ContestFlags kmin_contest;
    kmin_contest.add(kmin);
    std::int64_t kmin_n = 0;
    kmin->add_option("--alpha", alpha, "Risk limit")->required();
    kmin->add_option("--audit", audit_name, "providence | minerva | eor_bravo | so_bravo");
    kmin->add_option("--rounds", rounds_text, "Earlier rounds n1:k1,...");
    kmin->add_option("--n", kmin_n, "Cumulative size of the round")->required();
    add_common(kmin);

    // round-size -------------------------------------------------------------
    auto* round_size = app.add_subcommand("round-size", "Smallest next round meeting a stopping probability");
    ContestFlags rs_contest;
    rs_contest.add(round_size);
    double target_p = 0.9;
    std::optional<double> limit;
    std::int64_t max_n = 10'000'000;
    round_size->add_option("--alpha", alpha, "Risk limit")->required();
    round_size->add_option("--p", target_p, "Target conditional stopping probability")->check(CLI::Range(0.0, 1.0));
    round_size->add_option("--limit", limit, "First-round misleading limit");
    round_size->add_option("--audit", audit_name, "providence | minerva | eor_bravo | so_bravo");
    round_size->add_option("--rounds", rounds_text, "Earlier rounds n1:k1,...");
    round_size->add_option("--max-n", max_n, "Largest cumulative size to consider");
    add_common(round_size);

    // misleading ---------------------------------------------------------------
    auto* misleading = app.add_subcommand("misleading", "Smallest first round with misleading probability <= limit");
    double mis_margin = 0.0, mis_limit = 0.0;
    misleading->add_option("--margin", mis_margin, "Relevant margin")->required();
    misleading->add_option("--limit", mis_limit, "Misleading limit")->required();
    misleading->add_option("--max-n", max_n, "Largest size to consider");
    add_common(misleading);

    // simulate / sweep -----------------------------------------------------------
    ContestFlags sim_contest;
    std::string contest_file, manifest_file, hypothesis = "H_a";
    std::vector<std::string> kinds_text{"providence"};
    std::int64_t trials = 1000;
    std::uint64_t seed = 0;
    std::size_t max_rounds = 5;
    unsigned workers = 1;
    std::string grid_text = "default";
    std::vector<std::int64_t> sizes;
    auto add_sim = [&](CLI::App* sub) {
        sim_contest.add(sub);
        sub->add_option("--contest", contest_file, "Results CSV (candidate,votes) instead of --margin");
        sub->add_option("--manifest", manifest_file, "Ballot manifest CSV for precinct statistics");
        sub->add_option("--alpha", alpha, "Risk limit")->required();
        sub->add_option("--audit", kinds_text, "Audit kinds, repeatable")->delimiter(',');
        sub->add_option("--trials", trials, "Trials per cell")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "Base seed");
        sub->add_option("--hypothesis", hypothesis, "H_a or H_0")->check(CLI::IsMember({"H_a", "H_0"}));
        sub->add_option("--max-rounds", max_rounds, "Rounds before escalation");
        sub->add_option("--workers", workers, "Worker threads");
        add_common(sub);
    };
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo audit trials at one target p");
    add_sim(simulate);
    simulate->add_option("--p", target_p, "Target stopping probability")->check(CLI::Range(0.0, 1.0));
    simulate->add_option("--sizes", sizes, "Predetermined cumulative round sizes instead of --p")->delimiter(',');
    auto* sweep = app.add_subcommand("sweep", "Trials over a grid of target p");
    add_sim(sweep);
    sweep->add_option("--grid", grid_text, "lo:hi:step, a comma list, or 'default'");

    // workload ---------------------------------------------------------------------
    auto* wl = app.add_subcommand("workload", "Cost and optimal p over a sweep result");
    std::string sweep_file, model_name = "workload";
    workload::WorkloadParams wparams;
    workload::RealTimeParams tparams;
    wl->add_option("--in", sweep_file, "Sweep output from the sweep command, CSV or JSON")->required();
    wl->add_option("--model", model_name, "workload | precinct | real_time");
    wl->add_option("--wb", wparams.w_b, "Cost per ballot");
    wl->add_option("--wr", wparams.w_r, "Cost per round");
    wl->add_option("--wp", wparams.w_p, "Cost per precinct touch");
    wl->add_option("--tb", tparams.t_b, "Seconds per ballot");
    wl->add_option("--tr", tparams.t_r, "Seconds per round");
    wl->add_option("--tp", tparams.t_p, "Seconds per precinct touch");
    add_common(wl);

    // serve ---------------------------------------------------------------------
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::string data_dir = env_or("PROVIDENCE_DATA_DIR", "data/service");
    std::string listen = env_or("PROVIDENCE_LISTEN", "127.0.0.1:8080");
    std::string token = env_or("PROVIDENCE_TOKEN", "");
    unsigned job_workers = 1;
    serve->add_option("--data-dir", data_dir, "Data directory (env PROVIDENCE_DATA_DIR)");
    serve->add_option("--listen", listen, "host:port (env PROVIDENCE_LISTEN)");
    serve->add_option("--token", token, "Shared bearer token (env PROVIDENCE_TOKEN)");
    serve->add_option("--job-workers", job_workers, "Simulation worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (risk->parsed()) {
            queries::RiskQuery q;
            q.kind = audit::parse_audit_kind(audit_name);
            q.contest = risk_contest.contest();
            q.alpha = alpha;
            q.schedule = schedule;
            if (!order_file.empty()) {
                auto order = queries::parse_order_file(read_file(order_file));
                q.history = rounds_text.empty()
                                ? audit::RoundHistory::from_selection_order(std::move(order))
                                : [&] {
                                      const auto h = queries::parse_rounds(rounds_text);
                                      return audit::RoundHistory(h.cumulative_n(), h.cumulative_k(), std::move(order));
                                  }();
            } else if (!rounds_text.empty()) {
                q.history = queries::parse_rounds(rounds_text);
            } else {
                throw DomainError("give --rounds or --order-file");
            }
            const auto v = queries::evaluate(q);
            if (format == Format::Json) {
                out.write(json_io::encode(v).dump());
            } else if (format == Format::Csv) {
                out.write("decision,measured_risk,kmin,misleading_now,round\n" + std::string(audit::to_string(v.decision)) +
                          "," + full(v.measured_risk) + "," + std::to_string(v.kmin) + "," +
                          (v.misleading_now ? "true" : "false") + "," + std::to_string(v.round) + "\n");
            } else {
                out.write(full(v.measured_risk) + "\n" + std::string(audit::to_string(v.decision)) + " (round " +
                          std::to_string(v.round) + ", kmin " + std::to_string(v.kmin) +
                          (v.misleading_now ? ", misleading sample" : "") + ")\n");
            }
        } else if (kmin->parsed()) {
            const auto contest = kmin_contest.contest();
            const audit::RiskLimit a(alpha);
            const auto h = rounds_text.empty() ? audit::RoundHistory{} : queries::parse_rounds(rounds_text);
            if (kmin_n <= h.last_n()) throw DomainError("--n must exceed the last round size");
            const auto kind = audit::parse_audit_kind(audit_name);
            std::int64_t k = 0;
            if (kind == audit::AuditKind::Providence) {
                k = audit::providence_kmin(h.last_k(), h.last_n(), kmin_n, contest, a);
            } else if (kind == audit::AuditKind::Minerva) {
                auto sched = h.cumulative_n();
                sched.push_back(kmin_n);
                k = audit::MinervaAudit(contest, a, sched).kmins().back();
            } else {
                k = audit::bravo_kmin(kmin_n, contest, a);
            }
            if (format == Format::Json) {
                out.write(json{{"n", kmin_n}, {"kmin", k}}.dump());
            } else if (format == Format::Csv) {
                out.write("n,kmin\n" + std::to_string(kmin_n) + "," + std::to_string(k) + "\n");
            } else {
                out.write(std::to_string(k) + "\n");
            }
        } else if (round_size->parsed()) {
            const auto contest = rs_contest.contest();
            const audit::RiskLimit a(alpha);
            const auto h = rounds_text.empty() ? audit::RoundHistory{} : queries::parse_rounds(rounds_text);
            const auto kind = audit::parse_audit_kind(audit_name);
            planner::RoundPlan plan;
            if (kind == audit::AuditKind::Providence || kind == audit::AuditKind::Minerva) {
                planner::PlannerConfig cfg;
                cfg.target_p = target_p;
                cfg.max_n = max_n;
                cfg.misleading_limit = limit;
                plan = planner::next_round_size(h, contest, a, cfg);
            } else {
                if (limit) throw DomainError("--limit applies to providence and minerva plans");
                plan = planner::next_round_size_for(kind, h, contest, a, target_p, max_n);
            }
            if (format == Format::Json) {
                out.write(json_io::encode(plan).dump());
            } else if (format == Format::Csv) {
                out.write(plan_csv(plan));
            } else {
                out.write(plan_table(plan));
            }
        } else if (misleading->parsed()) {
            const std::int64_t n = planner::misleading_min_round_size(mis_margin, mis_limit, max_n);
            const double p_a = audit::PairwiseContest::from_margin(mis_margin).p_a;
            const double prob = planner::misleading_probability(n, p_a, planner::TieRule::CountsAsMisleading);
            if (format == Format::Json) {
                out.write(json{{"n", n}, {"misleading_prob", prob}}.dump());
            } else if (format == Format::Csv) {
                out.write("n,misleading_prob\n" + std::to_string(n) + "," + full(prob) + "\n");
            } else {
                out.write(std::to_string(n) + "\n");
            }
        } else if (simulate->parsed() || sweep->parsed()) {
            sim::SimContest contest;
            std::optional<election::BallotManifest> manifest;
            if (!contest_file.empty()) {
                if (sim_contest.margin || sim_contest.p_a) throw DomainError("give --contest or --margin/--p-a, not both");
                contest = sim::SimContest::from_results(election::parse_results(read_file(contest_file)));
            } else {
                contest = sim::SimContest::pairwise(sim_contest.contest());
            }
            if (!manifest_file.empty()) manifest = election::BallotManifest::parse_csv(read_file(manifest_file));
            std::vector<audit::AuditKind> kinds;
            for (const auto& k : kinds_text) kinds.push_back(audit::parse_audit_kind(k));
            const audit::RiskLimit a(alpha);
            const auto hyp = hypothesis == "H_0" ? sim::Hypothesis::Null : sim::Hypothesis::Alternative;
            sim::RunOptions opts;
            opts.manifest = manifest ? &*manifest : nullptr;
            opts.workers = workers;
            std::vector<sim::SweepCell> cells;
            if (simulate->parsed() && !sizes.empty()) {
                for (auto kind : kinds) {
                    sim::TrialPolicy pol;
                    pol.kind = kind;
                    pol.schedule = sim::SchedulePolicy::predetermined(sizes);
                    pol.max_rounds = std::max(max_rounds, sizes.size());
                    pol.hypothesis = hyp;
                    cells.push_back({kind, std::nan(""), sim::run_trials(contest, pol, a, trials, seed, opts)});
                }
            } else {
                const auto grid = simulate->parsed() ? std::vector<double>{target_p} : parse_grid(grid_text);
                cells = sim::sweep_p(contest, kinds, grid, a, trials, seed, opts, max_rounds, hyp);
            }
            if (format == Format::Json) {
                out.write(sweep_json(cells).dump(2));
            } else if (format == Format::Csv || sweep->parsed()) {
                out.write(sim::sweep_to_csv(cells));
            } else {
                std::ostringstream os;
                for (const auto& c : cells) {
                    os << audit::to_string(c.kind) << "  p=" << c.p << "  trials=" << c.report.trials
                       << "  stop_fraction=" << full(c.report.stop_fraction)
                       << "  mean_ballots=" << c.report.total_ballots_mean << "\n";
                    for (std::size_t r = 0; r < c.report.per_round_reached.size(); ++r) {
                        os << "  round " << r + 1 << ": reached " << c.report.per_round_reached[r] << ", stopped "
                           << c.report.per_round_stops[r] << ", conditional "
                           << c.report.conditional_stop_fraction(r + 1) << "\n";
                    }
                }
                out.write(os.str());
            }
        } else if (wl->parsed()) {
            const std::string text = read_file(sweep_file);
            const auto cells = text.rfind("kind,", 0) == 0 ? sim::sweep_from_csv(text) : cells_from_json(json::parse(text));
            workload::Objective obj;
            obj.model = workload::parse_model(model_name);
            obj.workload = wparams;
            obj.real_time = tparams;
            const auto optima = workload::optimal_p(cells, obj);
            if (format == Format::Json) {
                json values = json::array(), best = json::array();
                for (const auto& c : cells) {
                    values.push_back(
                        {{"kind", audit::to_string(c.kind)}, {"p", c.p}, {"value", workload::evaluate(c.report, obj)}});
                }
                for (const auto& o : optima) best.push_back({{"kind", audit::to_string(o.kind)}, {"p", o.p}, {"value", o.value}});
                out.write(json{{"model", workload::to_string(obj.model)}, {"values", values}, {"optima", best}}.dump(2));
            } else {
                std::string text = "kind,p,value\n";
                for (const auto& c : cells) {
                    text += std::string(audit::to_string(c.kind)) + "," + full(c.p) + "," +
                            full(workload::evaluate(c.report, obj)) + "\n";
                }
                if (format == Format::Table) {
                    text += "\noptimal p\n";
                    for (const auto& o : optima) {
                        text += std::string(audit::to_string(o.kind)) + "  p*=" + full(o.p) + "  value=" + full(o.value) + "\n";
                    }
                }
                out.write(text);
            }
        } else if (serve->parsed()) {
            service::ServiceConfig cfg;
            cfg.data_dir = data_dir;
            cfg.bearer_token = token;
            cfg.job_workers = job_workers;
            service::AuditService svc(cfg);
            std::cerr << "listening on " << listen << "\n";
            svc.listen(listen);
        }
    } catch (const planner::CapacityError& e) {
        std::cerr << "error: " << e.what() << "\n"
                  << "best plan: n=" << e.best().cumulative_n << " stop_prob=" << full(e.best().stop_prob) << "\n";
        return kExitCapacity;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ScheduleViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

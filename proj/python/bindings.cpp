#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "providence/audit.hpp"
#include "providence/errors.hpp"
#include "providence/planner.hpp"
#include "providence/queries.hpp"
#include "providence/simulator.hpp"

namespace py = pybind11;
using namespace providence;

namespace {

audit::RoundHistory history_of(const std::vector<std::pair<std::int64_t, std::int64_t>>& rounds) {
    std::vector<std::int64_t> ns, ks;
    for (const auto& [n, k] : rounds) {
        ns.push_back(n);
        ks.push_back(k);
    }
    return audit::RoundHistory(std::move(ns), std::move(ks));
}

}  // namespace

PYBIND11_MODULE(_providence, m) {
    m.doc() = "Round-by-round ballot-polling audit stopping rules, planner and simulator";

    auto base = py::register_exception<Error>(m, "ProvidenceError", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", base);
    py::register_exception<ScheduleViolation>(m, "ScheduleViolation", base);
    py::register_exception<planner::CapacityError>(m, "CapacityError", base);

    py::enum_<audit::AuditKind>(m, "AuditKind")
        .value("PROVIDENCE", audit::AuditKind::Providence)
        .value("MINERVA", audit::AuditKind::Minerva)
        .value("EOR_BRAVO", audit::AuditKind::EorBravo)
        .value("SO_BRAVO", audit::AuditKind::SoBravo);

    py::class_<audit::PairwiseContest>(m, "PairwiseContest")
        .def_static("from_margin", &audit::PairwiseContest::from_margin, py::arg("margin"),
                    py::arg("relevant_fraction") = 1.0)
        .def_static("from_winner_share", &audit::PairwiseContest::from_winner_share, py::arg("p_a"),
                    py::arg("relevant_fraction") = 1.0)
        .def_readonly("p_a", &audit::PairwiseContest::p_a)
        .def_readonly("margin", &audit::PairwiseContest::margin)
        .def_readonly("relevant_fraction", &audit::PairwiseContest::relevant_fraction);

    py::class_<audit::AuditVerdict>(m, "AuditVerdict")
        .def_property_readonly("stopped", &audit::AuditVerdict::stopped)
        .def_readonly("measured_risk", &audit::AuditVerdict::measured_risk)
        .def_readonly("kmin", &audit::AuditVerdict::kmin)
        .def_readonly("misleading_now", &audit::AuditVerdict::misleading_now)
        .def_readonly("round", &audit::AuditVerdict::round)
        .def("__repr__", [](const audit::AuditVerdict& v) {
            return "<AuditVerdict " + std::string(audit::to_string(v.decision)) +
                   " risk=" + std::to_string(v.measured_risk) + ">";
        });

    py::class_<planner::RoundPlan>(m, "RoundPlan")
        .def_readonly("cumulative_n", &planner::RoundPlan::cumulative_n)
        .def_readonly("kmin", &planner::RoundPlan::kmin)
        .def_readonly("stop_prob", &planner::RoundPlan::stop_prob)
        .def_readonly("misleading_prob", &planner::RoundPlan::misleading_prob);

    m.def(
        "risk",
        [](audit::AuditKind kind, const audit::PairwiseContest& contest, double alpha,
           const std::vector<std::pair<std::int64_t, std::int64_t>>& rounds,
           std::optional<std::vector<std::vector<std::uint8_t>>> selection_order,
           std::vector<std::int64_t> schedule) {
            queries::RiskQuery q;
            q.kind = kind;
            q.contest = contest;
            q.alpha = alpha;
            q.history = selection_order ? audit::RoundHistory::from_selection_order(std::move(*selection_order))
                                        : history_of(rounds);
            q.schedule = std::move(schedule);
            return queries::evaluate(q);
        },
        py::arg("kind"), py::arg("contest"), py::arg("alpha"), py::arg("rounds") = std::vector<std::pair<std::int64_t, std::int64_t>>{},
        py::kw_only(), py::arg("selection_order") = py::none(), py::arg("schedule") = std::vector<std::int64_t>{},
        "Verdict for cumulative (n, k) rounds, or for a per-round 0/1 selection order.");

    m.def(
        "kmin",
        [](const audit::PairwiseContest& contest, double alpha, std::int64_t n, std::int64_t k_prev,
           std::int64_t n_prev) { return audit::providence_kmin(k_prev, n_prev, n, contest, audit::RiskLimit(alpha)); },
        py::arg("contest"), py::arg("alpha"), py::arg("n"), py::arg("k_prev") = 0, py::arg("n_prev") = 0);
    m.def(
        "bravo_kmin",
        [](const audit::PairwiseContest& contest, double alpha, std::int64_t n) {
            return audit::bravo_kmin(n, contest, audit::RiskLimit(alpha));
        },
        py::arg("contest"), py::arg("alpha"), py::arg("n"));

    m.def(
        "next_round_size",
        [](const audit::PairwiseContest& contest, double alpha, double target_p,
           const std::vector<std::pair<std::int64_t, std::int64_t>>& rounds, std::optional<double> misleading_limit,
           std::int64_t max_n) {
            planner::PlannerConfig cfg;
            cfg.target_p = target_p;
            cfg.misleading_limit = misleading_limit;
            cfg.max_n = max_n;
            return planner::next_round_size(history_of(rounds), contest, audit::RiskLimit(alpha), cfg);
        },
        py::arg("contest"), py::arg("alpha"), py::arg("target_p"),
        py::arg("rounds") = std::vector<std::pair<std::int64_t, std::int64_t>>{}, py::kw_only(),
        py::arg("misleading_limit") = py::none(), py::arg("max_n") = 10'000'000);

    m.def("misleading_min_round_size", [](double margin, double limit, std::int64_t max_n) {
        return planner::misleading_min_round_size(margin, limit, max_n);
    }, py::arg("margin"), py::arg("limit"), py::arg("max_n") = 10'000'000);

    m.def(
        "first_round_stop_probs",
        [](std::int64_t n, double margin, double alpha) {
            const auto p = planner::first_round_stop_probs_at(n, margin, audit::RiskLimit(alpha));
            py::dict d;
            d["providence"] = p.providence;
            d["so_bravo"] = p.so_bravo;
            d["eor_bravo"] = p.eor_bravo;
            return d;
        },
        py::arg("n"), py::arg("margin"), py::arg("alpha"));

    m.def("minerva_schedule", &planner::minerva_schedule, py::arg("first_round"), py::arg("multiplier"),
          py::arg("rounds"));

    // JSON text; the package wrapper decodes it.
    m.def(
        "_simulate_json",
        [](const audit::PairwiseContest& contest, audit::AuditKind kind, double alpha, double target_p,
           std::int64_t trials, std::uint64_t seed, bool null_hypothesis, std::size_t max_rounds) {
            sim::TrialPolicy pol;
            pol.kind = kind;
            pol.schedule = sim::SchedulePolicy::target(target_p);
            pol.hypothesis = null_hypothesis ? sim::Hypothesis::Null : sim::Hypothesis::Alternative;
            pol.max_rounds = max_rounds;
            sim::SimulationReport r;
            {
                py::gil_scoped_release release;
                r = sim::run_trials(sim::SimContest::pairwise(contest), pol, audit::RiskLimit(alpha), trials, seed);
            }
            return sim::to_json(r).dump();
        },
        py::arg("contest"), py::arg("kind"), py::arg("alpha"), py::arg("target_p"), py::arg("trials"),
        py::arg("seed"), py::arg("null_hypothesis") = false, py::arg("max_rounds") = 5);
}

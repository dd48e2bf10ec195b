#include "providence/workload.hpp"

#include <algorithm>
#include <cmath>

#include "providence/errors.hpp"

namespace providence::workload {

namespace {

void require_nonnegative(double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw DomainError(std::string(name) + " must be a finite nonnegative number");
    }
}

}  // namespace

void WorkloadParams::validate() const {
    require_nonnegative(w_b, "w_b");
    require_nonnegative(w_r, "w_r");
    require_nonnegative(w_p, "w_p");
    require_nonnegative(constant, "constant overhead");
}

void RealTimeParams::validate() const {
    require_nonnegative(t_b, "t_b");
    require_nonnegative(t_r, "t_r");
    require_nonnegative(t_p, "t_p");
    require_nonnegative(constant, "constant overhead");
}

double expected_workload(double e_b, double e_r, const WorkloadParams& params) {
    return expected_workload_precinct(e_b, e_r, 0.0, WorkloadParams{params.w_b, params.w_r, 0.0, params.constant});
}

double expected_workload_precinct(double e_b, double e_r, double e_p, const WorkloadParams& params) {
    params.validate();
    require_nonnegative(e_b, "E_b");
    require_nonnegative(e_r, "E_r");
    require_nonnegative(e_p, "E_p");
    return e_b * params.w_b + e_r * params.w_r + e_p * params.w_p + params.constant;
}

double expected_real_time(double e_b, double e_r, double e_p, const RealTimeParams& params) {
    params.validate();
    require_nonnegative(e_b, "E_b");
    require_nonnegative(e_r, "E_r");
    require_nonnegative(e_p, "E_p");
    return e_b * params.t_b + e_r * params.t_r + e_p * params.t_p + params.constant;
}

Model parse_model(std::string_view name) {
    if (name == "workload" || name == "w") return Model::Workload;
    if (name == "precinct" || name == "workload_precinct") return Model::WorkloadPrecinct;
    if (name == "real_time" || name == "realtime" || name == "time") return Model::RealTime;
    throw DomainError("unknown workload model '" + std::string(name) + "'");
}

std::string_view to_string(Model model) {
    switch (model) {
        case Model::Workload: return "workload";
        case Model::WorkloadPrecinct: return "precinct";
        case Model::RealTime: return "real_time";
    }
    return "unknown";
}

double evaluate(const sim::SimulationReport& report, const Objective& objective) {
    switch (objective.model) {
        case Model::Workload:
            return expected_workload(report.total_ballots_mean, report.rounds_mean, objective.workload);
        case Model::WorkloadPrecinct:
            return expected_workload_precinct(report.total_ballots_mean, report.rounds_mean,
                                              report.precinct_touches_mean, objective.workload);
        case Model::RealTime: {
            if (!report.largest_county) {
                throw DomainError("real-time model needs largest-county statistics (run with a manifest)");
            }
            const auto& c = *report.largest_county;
            return expected_real_time(c.ballots_mean, c.rounds_mean, c.precinct_touches_mean,
                                      objective.real_time);
        }
    }
    throw DomainError("unknown workload model");
}

std::vector<Optimum> optimal_p(const std::vector<sim::SweepCell>& cells, const Objective& objective) {
    if (cells.empty()) throw DomainError("optimal_p needs a nonempty sweep table");
    std::vector<Optimum> out;
    for (const auto& cell : cells) {
        const double value = evaluate(cell.report, objective);
        auto it = std::find_if(out.begin(), out.end(), [&](const Optimum& o) { return o.kind == cell.kind; });
        if (it == out.end()) {
            out.push_back({cell.kind, cell.p, value});
        } else if (value < it->value || (value == it->value && cell.p < it->p)) {
            it->p = cell.p;
            it->value = value;
        }
    }
    return out;
}

std::optional<Optimum> find(const std::vector<Optimum>& optima, audit::AuditKind kind) {
    for (const auto& o : optima) {
        if (o.kind == kind) return o;
    }
    return std::nullopt;
}

}  // namespace providence::workload

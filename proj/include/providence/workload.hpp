#pragma once

// Affine cost models over simulated expectations and the grid search for the
// round schedule p that minimises them.

#include <optional>
#include <string>
#include <vector>

#include "providence/simulator.hpp"

namespace providence::workload {

struct WorkloadParams {
    double w_b = 1.0;   // per ballot, in ballot-equivalents
    double w_r = 0.0;   // per round
    double w_p = 0.0;   // per precinct touch
    double constant = 0.0;

    void validate() const;
};

// Seconds.
struct RealTimeParams {
    double t_b = 75.0;
    double t_r = 3.0 * 3600.0;
    double t_p = 75.0;
    double constant = 0.0;

    void validate() const;
};

double expected_workload(double e_b, double e_r, const WorkloadParams& params);
double expected_workload_precinct(double e_b, double e_r, double e_p, const WorkloadParams& params);
// Inputs are largest-county expectations.
double expected_real_time(double e_b, double e_r, double e_p, const RealTimeParams& params);

enum class Model { Workload, WorkloadPrecinct, RealTime };
Model parse_model(std::string_view name);
std::string_view to_string(Model model);

struct Objective {
    Model model = Model::Workload;
    WorkloadParams workload;
    RealTimeParams real_time;
};

// Cost of one sweep cell. RealTime needs the largest-county statistics.
double evaluate(const sim::SimulationReport& report, const Objective& objective);

struct Optimum {
    audit::AuditKind kind;
    double p = 0.0;
    double value = 0.0;
};

// Grid argmin per audit kind, in order of first appearance; ties go to the
// smaller p.
std::vector<Optimum> optimal_p(const std::vector<sim::SweepCell>& cells, const Objective& objective);

std::optional<Optimum> find(const std::vector<Optimum>& optima, audit::AuditKind kind);

}  // namespace providence::workload

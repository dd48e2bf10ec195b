#include "providence/json_io.hpp"

#include "providence/errors.hpp"

namespace providence::json_io {

const json& require(const json& j, const char* key) {
    if (!j.is_object()) throw DomainError("expected a JSON object");
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) throw DomainError(std::string("missing field '") + key + "'");
    return *it;
}

double require_number(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_number()) throw DomainError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

std::int64_t require_integer(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_number_integer()) throw DomainError(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
}

std::string require_string(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) throw DomainError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

json encode(const election::ContestResults& results) {
    json tallies = json::array();
    for (const auto& [name, votes] : results.tallies) tallies.push_back(json::array({name, votes}));
    return {{"contest_id", results.contest_id},
            {"tallies", tallies},
            {"total_ballots_cast", results.total_ballots_cast},
            {"reported_winner", results.reported_winner}};
}

election::ContestResults decode_results(const json& j) {
    election::ContestResults out;
    out.contest_id = require_string(j, "contest_id");
    if (out.contest_id.empty()) throw DomainError("contest_id must not be empty");
    const json& tallies = require(j, "tallies");
    auto add = [&](const std::string& name, const json& votes) {
        if (!votes.is_number_integer()) throw DomainError("tally for '" + name + "' must be an integer");
        out.tallies.emplace_back(name, votes.get<std::int64_t>());
    };
    if (tallies.is_object()) {
        for (auto it = tallies.begin(); it != tallies.end(); ++it) add(it.key(), it.value());
    } else if (tallies.is_array()) {
        for (const json& row : tallies) {
            if (!row.is_array() || row.size() != 2 || !row[0].is_string()) {
                throw DomainError("tallies must be [name, votes] pairs");
            }
            add(row[0].get<std::string>(), row[1]);
        }
    } else {
        throw DomainError("tallies must be an object or an array of pairs");
    }
    if (out.tallies.empty()) throw DomainError("contest has no candidates");
    out.total_ballots_cast = require_integer(j, "total_ballots_cast");
    if (auto it = j.find("reported_winner"); it != j.end() && !it->is_null()) {
        out.reported_winner = require_string(j, "reported_winner");
    } else {
        std::size_t best = 0;
        for (std::size_t i = 1; i < out.tallies.size(); ++i) {
            if (out.tallies[i].second > out.tallies[best].second) best = i;
        }
        out.reported_winner = out.tallies[best].first;
    }
    out.validate();
    return out;
}

json encode(const election::BallotManifest& manifest) {
    json out = json::array();
    for (const auto& e : manifest.entries()) {
        out.push_back({{"county", e.county}, {"container", e.container}, {"ballots", e.ballot_count}});
    }
    return out;
}

election::BallotManifest decode_manifest(const json& j) {
    if (!j.is_array()) throw DomainError("manifest must be an array of containers");
    std::vector<election::ManifestEntry> entries;
    for (const json& row : j) {
        entries.push_back({require_string(row, "county"), require_string(row, "container"),
                           require_integer(row, "ballots")});
    }
    return election::BallotManifest(std::move(entries));
}

json encode(const audit::PairwiseContest& c) {
    return {{"p_a", c.p_a}, {"p_0", c.p_0}, {"margin", c.margin}, {"relevant_fraction", c.relevant_fraction}};
}

json encode(const planner::RoundPlan& plan) {
    json j = {{"cumulative_n", plan.cumulative_n}, {"kmin", plan.kmin}, {"stop_prob", plan.stop_prob}};
    j["misleading_prob"] = plan.misleading_prob ? json(*plan.misleading_prob) : json(nullptr);
    return j;
}

planner::RoundPlan decode_plan(const json& j) {
    planner::RoundPlan plan;
    plan.cumulative_n = require_integer(j, "cumulative_n");
    plan.kmin = require_integer(j, "kmin");
    plan.stop_prob = require_number(j, "stop_prob");
    if (auto it = j.find("misleading_prob"); it != j.end() && !it->is_null()) {
        plan.misleading_prob = it->get<double>();
    }
    return plan;
}

json encode(const audit::AuditVerdict& v) {
    return {{"decision", std::string(audit::to_string(v.decision))},
            {"measured_risk", v.measured_risk},
            {"kmin", v.kmin},
            {"misleading_now", v.misleading_now},
            {"round", v.round}};
}

audit::AuditVerdict decode_verdict(const json& j) {
    audit::AuditVerdict v;
    const std::string decision = require_string(j, "decision");
    if (decision == audit::to_string(audit::Decision::Correct)) {
        v.decision = audit::Decision::Correct;
    } else if (decision == audit::to_string(audit::Decision::Undetermined)) {
        v.decision = audit::Decision::Undetermined;
    } else {
        throw DomainError("unknown decision '" + decision + "'");
    }
    v.measured_risk = require_number(j, "measured_risk");
    v.kmin = require_integer(j, "kmin");
    const json& m = require(j, "misleading_now");
    if (!m.is_boolean()) throw DomainError("field 'misleading_now' must be a boolean");
    v.misleading_now = m.get<bool>();
    v.round = static_cast<std::size_t>(require_integer(j, "round"));
    return v;
}

json encode(const election::SampledBallot& b) {
    return {{"draw_index", b.draw_index},
            {"county", b.county},
            {"container", b.container},
            {"position_within", b.position_within},
            {"global_position", b.global_position}};
}

}  // namespace providence::json_io

#pragma once

// JSON encodings shared by session persistence, the HTTP service and the
// CLI. Decoders validate and throw DomainError or ParseError.

#include "json.hpp"
#include "providence/audit.hpp"
#include "providence/election_data.hpp"
#include "providence/planner.hpp"

namespace providence::json_io {

using nlohmann::json;

json encode(const election::ContestResults& results);
// {"contest_id", "tallies": {name: votes} or [[name, votes], ...],
//  "total_ballots_cast", optional "reported_winner"}.
election::ContestResults decode_results(const json& j);

json encode(const election::BallotManifest& manifest);
// [{"county", "container", "ballots"}, ...]
election::BallotManifest decode_manifest(const json& j);

json encode(const audit::PairwiseContest& contest);
json encode(const planner::RoundPlan& plan);
planner::RoundPlan decode_plan(const json& j);
json encode(const audit::AuditVerdict& verdict);
audit::AuditVerdict decode_verdict(const json& j);
json encode(const election::SampledBallot& ballot);

// Typed field access with a message naming the missing or mistyped key.
const json& require(const json& j, const char* key);
double require_number(const json& j, const char* key);
std::int64_t require_integer(const json& j, const char* key);
std::string require_string(const json& j, const char* key);

}  // namespace providence::json_io

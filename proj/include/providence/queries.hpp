#pragma once

// Stateless requests shared by the CLI and the HTTP service, so both reach
// the library through the same code path.

#include <optional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "providence/audit.hpp"
#include "providence/planner.hpp"

namespace providence::queries {

struct RiskQuery {
    audit::AuditKind kind = audit::AuditKind::Providence;
    audit::PairwiseContest contest;
    double alpha = 0.1;
    audit::RoundHistory history;
    // Minerva only; defaults to the history's own round sizes.
    std::vector<std::int64_t> schedule;
};

// "n1:k1,n2:k2,..." with cumulative values.
audit::RoundHistory parse_rounds(std::string_view text);

// One 0/1 per line, blank lines and '#' comments ignored; a line "--" ends
// a round. Without separators the whole file is one round.
std::vector<std::vector<std::uint8_t>> parse_order_file(std::string_view text);

// Contest from either a margin or a winner share (p_a).
audit::PairwiseContest contest_from(std::optional<double> margin, std::optional<double> p_a,
                                    double relevant_fraction = 1.0);

audit::AuditVerdict evaluate(const RiskQuery& query);

// {"audit_kind", "margin" | "p_a", "alpha", "rounds": [[n, k], ...] or "n:k,...",
//  optional "selection_order": [[0,1,...], ...], optional "schedule"}.
RiskQuery decode_risk_query(const nlohmann::json& j);

}  // namespace providence::queries

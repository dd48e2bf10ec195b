#include "providence/queries.hpp"

#include <charconv>

#include "providence/errors.hpp"
#include "providence/json_io.hpp"

namespace providence::queries {

namespace {

std::int64_t parse_int(std::string_view s, std::string_view what) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw DomainError(std::string(what) + " '" + std::string(s) + "' is not an integer");
    }
    return v;
}

std::string_view strip(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

audit::RoundHistory parse_rounds(std::string_view text) {
    std::vector<std::int64_t> ns, ks;
    text = strip(text);
    if (text.empty()) throw DomainError("rounds: expected n1:k1[,n2:k2...]");
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string_view::npos) comma = text.size();
        const std::string_view item = strip(text.substr(start, comma - start));
        const std::size_t colon = item.find(':');
        if (colon == std::string_view::npos) {
            throw DomainError("rounds: '" + std::string(item) + "' is not of the form n:k");
        }
        ns.push_back(parse_int(strip(item.substr(0, colon)), "round size"));
        ks.push_back(parse_int(strip(item.substr(colon + 1)), "winner tally"));
        start = comma + 1;
    }
    return audit::RoundHistory(std::move(ns), std::move(ks));
}

std::vector<std::vector<std::uint8_t>> parse_order_file(std::string_view text) {
    std::vector<std::vector<std::uint8_t>> rounds(1);
    std::size_t start = 0;
    int line_no = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        const std::string_view line = strip(text.substr(start, end - start));
        start = end + 1;
        if (line.empty() || line.front() == '#') continue;
        if (line == "--") {
            rounds.emplace_back();
        } else if (line == "0" || line == "1") {
            rounds.back().push_back(line == "1" ? 1 : 0);
        } else {
            throw ParseError("selection order lines must be 0, 1 or --", line_no);
        }
    }
    if (!rounds.empty() && rounds.back().empty()) rounds.pop_back();
    if (rounds.empty()) throw ParseError("selection order file has no ballots", 0);
    return rounds;
}

audit::PairwiseContest contest_from(std::optional<double> margin, std::optional<double> p_a,
                                    double relevant_fraction) {
    if (margin.has_value() == p_a.has_value()) throw DomainError("give exactly one of margin and p_a");
    return margin ? audit::PairwiseContest::from_margin(*margin, relevant_fraction)
                  : audit::PairwiseContest::from_winner_share(*p_a, relevant_fraction);
}

audit::AuditVerdict evaluate(const RiskQuery& q) {
    const audit::RiskLimit alpha(q.alpha);
    if (q.kind == audit::AuditKind::Minerva) {
        const std::vector<std::int64_t>& schedule = q.schedule.empty() ? q.history.cumulative_n() : q.schedule;
        return audit::verdict_for(q.kind, q.history, q.contest, alpha, schedule);
    }
    return audit::verdict_for(q.kind, q.history, q.contest, alpha);
}

RiskQuery decode_risk_query(const nlohmann::json& j) {
    using json_io::require;
    RiskQuery q;
    if (auto it = j.find("audit_kind"); it != j.end()) q.kind = audit::parse_audit_kind(it->get<std::string>());
    std::optional<double> margin, p_a;
    if (auto it = j.find("margin"); it != j.end() && !it->is_null()) margin = json_io::require_number(j, "margin");
    if (auto it = j.find("p_a"); it != j.end() && !it->is_null()) p_a = json_io::require_number(j, "p_a");
    q.contest = contest_from(margin, p_a);
    q.alpha = json_io::require_number(j, "alpha");
    const auto order_it = j.find("selection_order");
    const bool has_order = order_it != j.end() && !order_it->is_null();
    if (has_order && (!j.contains("rounds") || j["rounds"].is_null())) {
        q.history = audit::RoundHistory::from_selection_order(
            order_it->get<std::vector<std::vector<std::uint8_t>>>());
        if (auto it = j.find("schedule"); it != j.end() && !it->is_null()) {
            q.schedule = it->get<std::vector<std::int64_t>>();
        }
        return q;
    }
    const auto& rounds = require(j, "rounds");
    if (rounds.is_string()) {
        q.history = parse_rounds(rounds.get<std::string>());
    } else if (rounds.is_array()) {
        std::vector<std::int64_t> ns, ks;
        for (const auto& r : rounds) {
            if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer()) {
                throw DomainError("rounds must be [n, k] integer pairs");
            }
            ns.push_back(r[0].get<std::int64_t>());
            ks.push_back(r[1].get<std::int64_t>());
        }
        q.history = audit::RoundHistory(std::move(ns), std::move(ks));
    } else {
        throw DomainError("rounds must be a string or an array");
    }
    if (has_order) {
        auto order = order_it->get<std::vector<std::vector<std::uint8_t>>>();
        q.history = audit::RoundHistory(q.history.cumulative_n(), q.history.cumulative_k(), std::move(order));
    }
    if (auto it = j.find("schedule"); it != j.end() && !it->is_null()) {
        q.schedule = it->get<std::vector<std::int64_t>>();
    }
    return q;
}

}  // namespace providence::queries

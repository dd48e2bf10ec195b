#include "providence/election_data.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

#include "providence/errors.hpp"
#include "providence/rng.hpp"

namespace providence::election {

namespace {

constexpr std::string_view kTotalRow = "_total_ballots_cast";
// Stream id separating sample draws from every other use of a seed.
constexpr std::uint64_t kSampleStream = 0x53414D504C45ULL;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// Non-comment, non-blank lines with their 1-based line numbers.
std::vector<std::pair<int, std::string_view>> content_lines(std::string_view text) {
    std::vector<std::pair<int, std::string_view>> out;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        std::string_view line = trim(text.substr(start, end - start));
        if (!line.empty() && line.front() != '#') out.emplace_back(line_no, line);
        start = end + 1;
    }
    return out;
}

std::int64_t parse_count(std::string_view field, int line, std::string_view what) {
    std::int64_t value = 0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (!field.empty() && field.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty()) {
        throw ParseError(std::string(what) + " '" + std::string(field) + "' is not an integer", line);
    }
    if (value < 0) throw ParseError(std::string(what) + " must be nonnegative", line);
    return value;
}

}  // namespace

void ContestResults::validate() const {
    if (tallies.empty()) throw DomainError("contest " + contest_id + ": no candidates");
    std::set<std::string_view> seen;
    std::int64_t sum = 0;
    for (const auto& [name, votes] : tallies) {
        if (name.empty()) throw DomainError("contest " + contest_id + ": empty candidate name");
        if (!seen.insert(name).second) {
            throw DomainError("contest " + contest_id + ": duplicate candidate " + name);
        }
        if (votes < 0) throw DomainError("contest " + contest_id + ": negative tally for " + name);
        sum += votes;
    }
    if (total_ballots_cast < sum) {
        throw DomainError("contest " + contest_id + ": total ballots cast below the sum of tallies");
    }
    const std::int64_t top = tally_of(reported_winner);
    for (const auto& [name, votes] : tallies) {
        if (name != reported_winner && votes >= top) {
            throw DomainError("contest " + contest_id + ": reported winner " + reported_winner +
                              " does not hold the strict maximum tally");
        }
    }
}

std::size_t ContestResults::index_of(std::string_view candidate) const {
    for (std::size_t i = 0; i < tallies.size(); ++i) {
        if (tallies[i].first == candidate) return i;
    }
    throw DomainError("unknown candidate '" + std::string(candidate) + "'");
}

std::int64_t ContestResults::tally_of(std::string_view candidate) const {
    return tallies[index_of(candidate)].second;
}

std::int64_t ContestResults::irrelevant_ballots() const {
    std::int64_t sum = 0;
    for (const auto& t : tallies) sum += t.second;
    return total_ballots_cast - sum;
}

ContestResults parse_results(std::string_view csv, std::string contest_id) {
    const auto lines = content_lines(csv);
    if (lines.empty()) throw ParseError("empty results file", 0);
    {
        const auto header = split_fields(lines[0].second);
        if (header.size() != 2 || header[0] != "candidate" || header[1] != "votes") {
            throw ParseError("expected header 'candidate,votes'", lines[0].first);
        }
    }
    ContestResults out;
    out.contest_id = std::move(contest_id);
    std::map<std::string, int, std::less<>> first_line;
    bool have_total = false;
    int total_line = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto [line_no, line] = lines[i];
        const auto fields = split_fields(line);
        if (fields.size() != 2) throw ParseError("expected two fields", line_no);
        if (fields[0] == kTotalRow) {
            if (have_total) throw ParseError("duplicate total row", line_no);
            out.total_ballots_cast = parse_count(fields[1], line_no, "total");
            have_total = true;
            total_line = line_no;
            continue;
        }
        if (fields[0].empty()) throw ParseError("empty candidate name", line_no);
        if (auto it = first_line.find(fields[0]); it != first_line.end()) {
            throw ParseError("duplicate candidate '" + std::string(fields[0]) + "' (first on line " +
                                 std::to_string(it->second) + ")",
                             line_no);
        }
        first_line.emplace(std::string(fields[0]), line_no);
        out.tallies.emplace_back(std::string(fields[0]), parse_count(fields[1], line_no, "vote count"));
    }
    if (out.tallies.empty()) throw ParseError("no candidate rows", lines[0].first);
    if (!have_total) throw ParseError("missing _total_ballots_cast row", lines.back().first);

    std::int64_t sum = 0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < out.tallies.size(); ++i) {
        sum += out.tallies[i].second;
        if (out.tallies[i].second > out.tallies[best].second) best = i;
    }
    for (std::size_t i = 0; i < out.tallies.size(); ++i) {
        if (i != best && out.tallies[i].second == out.tallies[best].second) {
            throw ParseError("tie for the most votes between '" + out.tallies[best].first + "' and '" +
                                 out.tallies[i].first + "'",
                             first_line.find(out.tallies[i].first)->second);
        }
    }
    if (out.total_ballots_cast < sum) {
        throw ParseError("total ballots cast is below the sum of the tallies", total_line);
    }
    out.reported_winner = out.tallies[best].first;
    return out;
}

std::string serialize_results(const ContestResults& results) {
    std::string out = "candidate,votes\n";
    for (const auto& [name, votes] : results.tallies) {
        out += name + "," + std::to_string(votes) + "\n";
    }
    out += std::string(kTotalRow) + "," + std::to_string(results.total_ballots_cast) + "\n";
    return out;
}

std::vector<NamedPair> derive_named_pairwise(const ContestResults& results) {
    results.validate();
    if (results.tallies.size() < 2) throw DomainError("pairwise reduction needs two or more candidates");
    if (results.total_ballots_cast <= 0) throw DomainError("no ballots cast");
    const std::int64_t w = results.tally_of(results.reported_winner);
    std::vector<NamedPair> out;
    for (const auto& [name, votes] : results.tallies) {
        if (name == results.reported_winner || votes == 0) continue;
        const double relevant = static_cast<double>(w + votes);
        audit::PairwiseContest c;
        c.p_a = static_cast<double>(w) / relevant;
        c.margin = static_cast<double>(w - votes) / relevant;
        c.relevant_fraction = relevant / static_cast<double>(results.total_ballots_cast);
        c.validate();
        out.push_back({results.reported_winner, name, c});
    }
    return out;
}

std::vector<audit::PairwiseContest> derive_pairwise(const ContestResults& results) {
    std::vector<audit::PairwiseContest> out;
    for (auto& p : derive_named_pairwise(results)) out.push_back(p.contest);
    return out;
}

BallotManifest::BallotManifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
    std::int64_t total = 0;
    cumulative_.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (e.ballot_count <= 0) {
            throw DomainError("manifest: container " + e.county + "/" + e.container +
                              " must hold a positive number of ballots");
        }
        total += e.ballot_count;
        cumulative_.push_back(total);
    }
}

BallotManifest BallotManifest::parse_csv(std::string_view csv) {
    const auto lines = content_lines(csv);
    if (lines.empty()) throw ParseError("empty manifest file", 0);
    const auto header = split_fields(lines[0].second);
    if (header.size() != 3 || header[0] != "county" || header[1] != "container" || header[2] != "ballots") {
        throw ParseError("expected header 'county,container,ballots'", lines[0].first);
    }
    std::vector<ManifestEntry> entries;
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto [line_no, line] = lines[i];
        const auto fields = split_fields(line);
        if (fields.size() != 3) throw ParseError("expected three fields", line_no);
        ManifestEntry e{std::string(fields[0]), std::string(fields[1]),
                        parse_count(fields[2], line_no, "ballot count")};
        if (e.ballot_count == 0) throw ParseError("ballot count must be positive", line_no);
        if (!seen.emplace(e.county, e.container).second) {
            throw ParseError("duplicate container " + e.county + "/" + e.container, line_no);
        }
        entries.push_back(std::move(e));
    }
    return BallotManifest(std::move(entries));
}

std::size_t BallotManifest::locate(std::int64_t position) const {
    if (position < 1 || position > total()) throw DomainError("manifest position out of range");
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), position);
    return static_cast<std::size_t>(it - cumulative_.begin());
}

std::string BallotManifest::largest_county() const {
    if (entries_.empty()) throw DomainError("manifest is empty");
    std::vector<std::pair<std::string, std::int64_t>> totals;
    for (const auto& e : entries_) {
        auto it = std::find_if(totals.begin(), totals.end(), [&](const auto& t) { return t.first == e.county; });
        if (it == totals.end()) {
            totals.emplace_back(e.county, e.ballot_count);
        } else {
            it->second += e.ballot_count;
        }
    }
    auto best = totals.begin();
    for (auto it = totals.begin(); it != totals.end(); ++it) {
        if (it->second > best->second) best = it;
    }
    return best->first;
}

std::vector<bool> BallotManifest::county_mask(std::string_view county) const {
    std::vector<bool> mask(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) mask[i] = entries_[i].county == county;
    return mask;
}

std::int64_t sample_position(const BallotManifest& manifest, std::uint64_t seed,
                             std::int64_t draw_index) {
    if (manifest.empty()) throw DomainError("cannot sample from an empty manifest");
    const rng::KeyedStream stream(seed, {kSampleStream});
    const auto total = static_cast<std::uint64_t>(manifest.total());
    return 1 + static_cast<std::int64_t>(rng::bounded(stream.at(static_cast<std::uint64_t>(draw_index)), total));
}

std::vector<SampledBallot> draw_sample(const BallotManifest& manifest, std::int64_t count,
                                       std::uint64_t seed, std::int64_t already_drawn) {
    if (count < 1) throw DomainError("sample count must be at least 1");
    if (already_drawn < 0) throw DomainError("already_drawn must be nonnegative");
    if (manifest.empty()) throw DomainError("cannot sample from an empty manifest");
    std::vector<SampledBallot> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 1; i <= count; ++i) {
        const std::int64_t draw = already_drawn + i;
        const std::int64_t pos = sample_position(manifest, seed, draw);
        const std::size_t idx = manifest.locate(pos);
        const auto& e = manifest.entries()[idx];
        const std::int64_t before = pos - manifest.offset_of(idx);
        out.push_back({e.county, e.container, before, pos, draw});
    }
    return out;
}

}  // namespace providence::election

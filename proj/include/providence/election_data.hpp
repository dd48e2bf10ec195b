#pragma once

// Contest results and ballot manifests: CSV ingestion, pairwise reduction and
// reproducible with-replacement ballot sampling.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "providence/audit.hpp"

namespace providence::election {

struct ContestResults {
    std::string contest_id;
    // In file order.
    std::vector<std::pair<std::string, std::int64_t>> tallies;
    std::int64_t total_ballots_cast = 0;
    std::string reported_winner;

    // Throws DomainError on a broken invariant.
    void validate() const;
    std::int64_t tally_of(std::string_view candidate) const;
    std::size_t index_of(std::string_view candidate) const;
    std::size_t winner_index() const { return index_of(reported_winner); }
    std::int64_t irrelevant_ballots() const;

    friend bool operator==(const ContestResults&, const ContestResults&) = default;
};

// Header `candidate,votes`, one row per candidate, plus a `_total_ballots_cast`
// row. Blank lines and lines starting with '#' are skipped. Errors carry the
// 1-based line number.
ContestResults parse_results(std::string_view csv, std::string contest_id = "contest");

// Canonical CSV form (candidates in stored order, total row last).
std::string serialize_results(const ContestResults& results);

struct NamedPair {
    std::string winner;
    std::string loser;
    audit::PairwiseContest contest;
};

// One pair per loser with at least one vote, in stored order. Requires at
// least two candidates.
std::vector<NamedPair> derive_named_pairwise(const ContestResults& results);
std::vector<audit::PairwiseContest> derive_pairwise(const ContestResults& results);

struct ManifestEntry {
    std::string county;
    std::string container;
    std::int64_t ballot_count = 0;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class BallotManifest {
public:
    BallotManifest() = default;
    explicit BallotManifest(std::vector<ManifestEntry> entries);

    // Header `county,container,ballots`.
    static BallotManifest parse_csv(std::string_view csv);

    const std::vector<ManifestEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::int64_t total() const { return cumulative_.empty() ? 0 : cumulative_.back(); }

    // Entry index holding the 1-based global ballot position.
    std::size_t locate(std::int64_t position) const;
    // Ballots held by the entries before `index`.
    std::int64_t offset_of(std::size_t index) const { return index == 0 ? 0 : cumulative_[index - 1]; }

    // County with the most ballots; ties go to the first listed.
    std::string largest_county() const;
    // Per-entry flag for membership in `county`.
    std::vector<bool> county_mask(std::string_view county) const;

    friend bool operator==(const BallotManifest& a, const BallotManifest& b) {
        return a.entries_ == b.entries_;
    }

private:
    std::vector<ManifestEntry> entries_;
    std::vector<std::int64_t> cumulative_;
};

struct SampledBallot {
    std::string county;
    std::string container;
    // 1-based within the container.
    std::int64_t position_within = 0;
    // 1-based over the whole manifest.
    std::int64_t global_position = 0;
    // 1-based draw index across the whole audit.
    std::int64_t draw_index = 0;
};

// Uniform global positions for draws already_drawn+1 .. already_drawn+count.
std::int64_t sample_position(const BallotManifest& manifest, std::uint64_t seed,
                             std::int64_t draw_index);

std::vector<SampledBallot> draw_sample(const BallotManifest& manifest, std::int64_t count,
                                       std::uint64_t seed, std::int64_t already_drawn = 0);

}  // namespace providence::election

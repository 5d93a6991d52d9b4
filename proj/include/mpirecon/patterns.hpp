#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mpirecon/collectives.hpp"
#include "mpirecon/store.hpp"

namespace mpirecon::patterns {

using store::StoredCallSite;

// A group of call sites is (epsilon, delta)-repeated when at least delta
// sites fall within an epsilon-line span. No epsilon means unbounded span.
struct PatternQuery {
    std::set<CollectiveName> names;
    std::optional<std::int64_t> epsilon;
    std::int64_t delta = 2;

    // Throws DomainError: names empty, delta < 2 or epsilon < 0.
    void validate() const;
};

enum class Classification { Homogeneous, Mixed };

std::string_view to_string(Classification c);

struct PatternGroup {
    std::string repo_id;
    std::string revision_id;
    std::string filename;
    std::vector<StoredCallSite> sites;
    std::int64_t span = 0;
    std::size_t size = 0;
    Classification classification = Classification::Homogeneous;
};

// Sites must come from one file, sorted by line. Sites outside q.names are
// dropped first; the remainder is cut greedily left to right into maximal
// runs whose span stays within epsilon, and runs shorter than delta are
// discarded.
std::vector<PatternGroup> find_repeated_groups(std::span<const StoredCallSite> sites,
                                               const PatternQuery& q);

// Homogeneous iff every site names the same collective. Needs >= 2 sites.
Classification classify_group(std::span<const StoredCallSite> sites);

// Unordered (a-site, b-site) pairs at most epsilon lines apart in one file.
std::uint64_t count_pair_cooccurrences(std::span<const StoredCallSite> sites,
                                       const CollectiveName& a, const CollectiveName& b,
                                       std::int64_t epsilon);

struct SweepRow {
    std::int64_t epsilon = 0;
    std::uint64_t count = 0;

    bool operator==(const SweepRow&) const = default;
};

struct PairSweepReport {
    CollectivePair pair;
    std::vector<SweepRow> rows; // epsilon ascending
};

std::vector<PairSweepReport> sweep_epsilon(const std::vector<CollectivePair>& pairs,
                                           const std::vector<std::int64_t>& epsilons,
                                           const store::Store& db);

struct FusionRatio {
    std::uint64_t paired_a = 0;
    std::uint64_t total_a = 0;
    std::uint64_t paired_b = 0;
    std::uint64_t total_b = 0;

    double pct_a() const;
    double pct_b() const;
};

// Share of a-sites (b-sites) taking part in at least one a/b pair within
// epsilon. Throws DomainError if either collective has no occurrences.
FusionRatio fusion_ratio(const CollectivePair& pair, std::int64_t epsilon,
                         const store::Store& db);

struct HomogeneityTally {
    std::uint64_t homogeneous = 0;
    std::uint64_t mixed = 0;

    std::uint64_t total() const { return homogeneous + mixed; }
    HomogeneityTally& operator+=(const HomogeneityTally& o);
    bool operator==(const HomogeneityTally&) const = default;
};

// Adjacent pairs of the {a, b}-restricted sequence of one file.
HomogeneityTally tally_adjacent_pairs(std::span<const StoredCallSite> sites,
                                      const CollectiveName& a, const CollectiveName& b);

struct HomogeneityReport {
    CollectivePair pair;
    HomogeneityTally tally;

    bool empty() const { return tally.total() == 0; }
    // Percentages in tenths, homogeneous rounded half-up and mixed taken as
    // the complement so the two always sum to 1000. Undefined when empty().
    std::int64_t homogeneous_tenths() const;
    std::int64_t mixed_tenths() const;
};

HomogeneityReport homogeneity_distribution(const CollectivePair& pair, const store::Store& db);

// 100 * num / den in tenths of a percent, rounded half-up.
std::int64_t percent_tenths(std::uint64_t num, std::uint64_t den);

// 667 -> "66.7"
std::string format_tenths(std::int64_t tenths);

} // namespace mpirecon::patterns

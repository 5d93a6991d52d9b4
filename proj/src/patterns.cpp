#include "mpirecon/patterns.hpp"

#include <algorithm>

#include "mpirecon/error.hpp"

namespace mpirecon::patterns {

namespace {

void require_sorted_single_file(std::span<const StoredCallSite> sites)
{
    for (std::size_t i = 1; i < sites.size(); ++i) {
        const auto& prev = sites[i - 1];
        const auto& cur = sites[i];
        if (cur.filename != prev.filename || cur.repo_id != prev.repo_id ||
            cur.revision_id != prev.revision_id) {
            throw ContractError("call sites span more than one file");
        }
        if (cur.line_number < prev.line_number) {
            throw ContractError("call sites not sorted by line number in " + cur.filename);
        }
    }
}

void require_epsilon(std::int64_t epsilon)
{
    if (epsilon < 0) {
        throw DomainError("epsilon must be non-negative, got " + std::to_string(epsilon));
    }
}

void require_distinct(const CollectiveName& a, const CollectiveName& b)
{
    if (a == b) {
        throw DomainError("pair needs two different collectives, got " + a + " twice; "
                          "use repeated-group detection for homogeneous repetition");
    }
}

std::vector<std::int64_t> lines_of(std::span<const StoredCallSite> sites, const CollectiveName& name)
{
    std::vector<std::int64_t> lines;
    for (const auto& s : sites) {
        if (s.collective == name) {
            lines.push_back(s.line_number);
        }
    }
    return lines;
}

// Number of entries of sorted `others` within [line - eps, line + eps].
std::size_t within(const std::vector<std::int64_t>& others, std::int64_t line, std::int64_t eps)
{
    auto lo = std::lower_bound(others.begin(), others.end(), line - eps);
    auto hi = std::upper_bound(lo, others.end(), line + eps);
    return static_cast<std::size_t>(hi - lo);
}

std::uint64_t count_participants(const std::vector<std::int64_t>& mine,
                                 const std::vector<std::int64_t>& others, std::int64_t eps)
{
    return static_cast<std::uint64_t>(std::count_if(
        mine.begin(), mine.end(), [&](std::int64_t l) { return within(others, l, eps) > 0; }));
}

} // namespace

void PatternQuery::validate() const
{
    if (names.empty()) {
        throw DomainError("pattern query needs at least one collective name");
    }
    if (delta < 2) {
        throw DomainError("delta must be at least 2, got " + std::to_string(delta));
    }
    if (epsilon) {
        require_epsilon(*epsilon);
    }
}

std::string_view to_string(Classification c)
{
    return c == Classification::Homogeneous ? "homogeneous" : "mixed";
}

Classification classify_group(std::span<const StoredCallSite> sites)
{
    if (sites.size() < 2) {
        throw DomainError("a complex collective needs at least 2 call sites, got " +
                          std::to_string(sites.size()));
    }
    const auto& first = sites.front().collective;
    bool same = std::all_of(sites.begin() + 1, sites.end(),
                            [&](const StoredCallSite& s) { return s.collective == first; });
    return same ? Classification::Homogeneous : Classification::Mixed;
}

std::vector<PatternGroup> find_repeated_groups(std::span<const StoredCallSite> sites,
                                               const PatternQuery& q)
{
    q.validate();
    require_sorted_single_file(sites);

    std::vector<StoredCallSite> restricted;
    std::copy_if(sites.begin(), sites.end(), std::back_inserter(restricted),
                 [&](const StoredCallSite& s) { return q.names.contains(s.collective); });

    std::vector<PatternGroup> groups;
    const auto delta = static_cast<std::size_t>(q.delta);
    std::size_t start = 0;
    while (start < restricted.size()) {
        std::size_t end = start + 1;
        while (end < restricted.size() &&
               (!q.epsilon ||
                restricted[end].line_number - restricted[start].line_number <= *q.epsilon)) {
            ++end;
        }
        if (end - start >= delta) {
            PatternGroup g;
            g.repo_id = restricted[start].repo_id;
            g.revision_id = restricted[start].revision_id;
            g.filename = restricted[start].filename;
            g.sites.assign(restricted.begin() + static_cast<std::ptrdiff_t>(start),
                           restricted.begin() + static_cast<std::ptrdiff_t>(end));
            g.span = g.sites.back().line_number - g.sites.front().line_number;
            g.size = g.sites.size();
            g.classification = classify_group(g.sites);
            groups.push_back(std::move(g));
        }
        start = end;
    }
    return groups;
}

std::uint64_t count_pair_cooccurrences(std::span<const StoredCallSite> sites,
                                       const CollectiveName& a, const CollectiveName& b,
                                       std::int64_t epsilon)
{
    require_distinct(a, b);
    require_epsilon(epsilon);
    require_sorted_single_file(sites);

    auto a_lines = lines_of(sites, a);
    auto b_lines = lines_of(sites, b);
    std::uint64_t count = 0;
    for (auto line : a_lines) {
        count += within(b_lines, line, epsilon);
    }
    return count;
}

std::vector<PairSweepReport> sweep_epsilon(const std::vector<CollectivePair>& pairs,
                                           const std::vector<std::int64_t>& epsilons,
                                           const store::Store& db)
{
    if (epsilons.empty()) {
        throw DomainError("epsilon sweep needs at least one epsilon");
    }
    auto eps = epsilons;
    std::sort(eps.begin(), eps.end());
    eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
    for (auto e : eps) {
        require_epsilon(e);
    }

    std::set<CollectiveName> names;
    std::vector<PairSweepReport> reports;
    for (const auto& [a, b] : pairs) {
        db.collective_set().require(a);
        db.collective_set().require(b);
        require_distinct(a, b);
        names.insert(a);
        names.insert(b);
        PairSweepReport r{{a, b}, {}};
        for (auto e : eps) {
            r.rows.push_back({e, 0});
        }
        reports.push_back(std::move(r));
    }
    if (reports.empty()) {
        return reports;
    }

    db.for_each_file({std::nullopt, names}, [&](const store::FileSites& file) {
        for (auto& report : reports) {
            for (auto& row : report.rows) {
                row.count += count_pair_cooccurrences(file.sites, report.pair.first,
                                                      report.pair.second, row.epsilon);
            }
        }
    });
    return reports;
}

double FusionRatio::pct_a() const
{
    return total_a ? 100.0 * static_cast<double>(paired_a) / static_cast<double>(total_a) : 0.0;
}

double FusionRatio::pct_b() const
{
    return total_b ? 100.0 * static_cast<double>(paired_b) / static_cast<double>(total_b) : 0.0;
}

FusionRatio fusion_ratio(const CollectivePair& pair, std::int64_t epsilon, const store::Store& db)
{
    const auto& [a, b] = pair;
    require_distinct(a, b);
    require_epsilon(epsilon);

    FusionRatio ratio;
    ratio.total_a = static_cast<std::uint64_t>(db.total_occurrences(a));
    ratio.total_b = static_cast<std::uint64_t>(db.total_occurrences(b));
    if (ratio.total_a == 0) {
        throw DomainError("no occurrences of " + a + " in the database");
    }
    if (ratio.total_b == 0) {
        throw DomainError("no occurrences of " + b + " in the database");
    }

    db.for_each_file({std::nullopt, std::set<CollectiveName>{a, b}},
                     [&](const store::FileSites& file) {
                         auto a_lines = lines_of(file.sites, a);
                         auto b_lines = lines_of(file.sites, b);
                         ratio.paired_a += count_participants(a_lines, b_lines, epsilon);
                         ratio.paired_b += count_participants(b_lines, a_lines, epsilon);
                     });
    return ratio;
}

HomogeneityTally& HomogeneityTally::operator+=(const HomogeneityTally& o)
{
    homogeneous += o.homogeneous;
    mixed += o.mixed;
    return *this;
}

HomogeneityTally tally_adjacent_pairs(std::span<const StoredCallSite> sites,
                                      const CollectiveName& a, const CollectiveName& b)
{
    require_distinct(a, b);
    require_sorted_single_file(sites);

    HomogeneityTally tally;
    const StoredCallSite* prev = nullptr;
    for (const auto& s : sites) {
        if (s.collective != a && s.collective != b) {
            continue;
        }
        if (prev) {
            const StoredCallSite group[] = {*prev, s};
            if (classify_group(group) == Classification::Homogeneous) {
                ++tally.homogeneous;
            } else {
                ++tally.mixed;
            }
        }
        prev = &s;
    }
    return tally;
}

std::int64_t HomogeneityReport::homogeneous_tenths() const
{
    return percent_tenths(tally.homogeneous, tally.total());
}

std::int64_t HomogeneityReport::mixed_tenths() const
{
    return 1000 - homogeneous_tenths();
}

HomogeneityReport homogeneity_distribution(const CollectivePair& pair, const store::Store& db)
{
    const auto& [a, b] = pair;
    require_distinct(a, b);
    db.collective_set().require(a);
    db.collective_set().require(b);

    HomogeneityReport report{pair, {}};
    db.for_each_file({std::nullopt, std::set<CollectiveName>{a, b}},
                     [&](const store::FileSites& file) {
                         report.tally += tally_adjacent_pairs(file.sites, a, b);
                     });
    return report;
}

std::int64_t percent_tenths(std::uint64_t num, std::uint64_t den)
{
    if (den == 0) {
        throw DomainError("percentage of an empty total");
    }
    return static_cast<std::int64_t>((2000 * num + den) / (2 * den));
}

std::string format_tenths(std::int64_t tenths)
{
    std::string sign = tenths < 0 ? "-" : "";
    auto t = tenths < 0 ? -tenths : tenths;
    return sign + std::to_string(t / 10) + "." + std::to_string(t % 10);
}

} // namespace mpirecon::patterns

#include <gtest/gtest.h>

#include <random>

#include "mpirecon/error.hpp"
#include "mpirecon/patterns.hpp"
#include "test_support.hpp"

using namespace mpirecon;
using namespace mpirecon::patterns;
using testing_support::scan_of;

namespace {

std::vector<StoredCallSite> sites(const std::vector<std::pair<std::string, std::int64_t>>& s)
{
    std::vector<StoredCallSite> out;
    std::int64_t col = 1;
    for (const auto& [name, line] : s) {
        out.push_back({"1", "r", "main.c", name, line, col++});
    }
    return out;
}

PatternQuery query(std::set<CollectiveName> names, std::optional<std::int64_t> eps,
                   std::int64_t delta)
{
    PatternQuery q;
    q.names = std::move(names);
    q.epsilon = eps;
    q.delta = delta;
    return q;
}

} // namespace

TEST(RepeatedGroups, HomogeneousPair)
{
    auto s = sites({{"Allreduce", 93}, {"Allreduce", 98}});
    auto g = find_repeated_groups(s, query({"Allreduce"}, 5, 2));
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].span, 5);
    EXPECT_EQ(g[0].size, 2u);
    EXPECT_EQ(g[0].classification, Classification::Homogeneous);
    EXPECT_EQ(g[0].filename, "main.c");
}

TEST(RepeatedGroups, MixedSandwich)
{
    auto s = sites({{"Allreduce", 200}, {"Allreduce", 217}, {"Allgather", 227}, {"Allgather", 230}});
    auto g = find_repeated_groups(s, query({"Allreduce", "Allgather"}, 30, 4));
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].span, 30);
    EXPECT_EQ(g[0].size, 4u);
    EXPECT_EQ(g[0].classification, Classification::Mixed);
}

TEST(RepeatedGroups, SingleSiteBelowDelta)
{
    auto s = sites({{"Bcast", 7}});
    EXPECT_TRUE(find_repeated_groups(s, query({"Bcast"}, 10, 2)).empty());
}

TEST(RepeatedGroups, OutlierExcluded)
{
    auto s = sites({{"Bcast", 10}, {"Bcast", 30}, {"Bcast", 100}});
    auto g = find_repeated_groups(s, query({"Bcast"}, 25, 2));
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].span, 20);
    ASSERT_EQ(g[0].sites.size(), 2u);
    EXPECT_EQ(g[0].sites[0].line_number, 10);
    EXPECT_EQ(g[0].sites[1].line_number, 30);
}

TEST(RepeatedGroups, NonMembersIgnored)
{
    auto s = sites({{"Bcast", 1}, {"Barrier", 2}, {"Bcast", 3}});
    auto g = find_repeated_groups(s, query({"Bcast"}, 5, 2));
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].size, 2u);
}

TEST(RepeatedGroups, UnboundedEpsilonTakesWholeFile)
{
    auto s = sites({{"Bcast", 1}, {"Bcast", 5000}, {"Reduce", 9000}});
    auto g = find_repeated_groups(s, query({"Bcast", "Reduce"}, std::nullopt, 3));
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].span, 8999);
}

TEST(RepeatedGroups, Errors)
{
    auto s = sites({{"Bcast", 9}, {"Bcast", 3}});
    EXPECT_THROW(find_repeated_groups(s, query({"Bcast"}, 5, 2)), ContractError);
    auto ok = sites({{"Bcast", 3}});
    EXPECT_THROW(find_repeated_groups(ok, query({"Bcast"}, 5, 1)), DomainError);
    EXPECT_THROW(find_repeated_groups(ok, query({"Bcast"}, -1, 2)), DomainError);
    EXPECT_THROW(find_repeated_groups(ok, query({}, 5, 2)), DomainError);
    auto two_files = sites({{"Bcast", 1}, {"Bcast", 2}});
    two_files[1].filename = "other.c";
    EXPECT_THROW(find_repeated_groups(two_files, query({"Bcast"}, 5, 2)), ContractError);
}

TEST(ClassifyGroup, Cases)
{
    EXPECT_EQ(classify_group(sites({{"Allreduce", 93}, {"Allreduce", 98}})),
              Classification::Homogeneous);
    EXPECT_EQ(classify_group(sites({{"Allreduce", 200}, {"Allgather", 227}})),
              Classification::Mixed);
    EXPECT_EQ(classify_group(sites({{"Gatherv", 5}, {"Gatherv", 9}, {"Gatherv", 12}})),
              Classification::Homogeneous);
    EXPECT_THROW(classify_group(sites({{"Bcast", 1}})), DomainError);
}

TEST(PairCooccurrence, Examples)
{
    EXPECT_EQ(count_pair_cooccurrences(sites({{"Gather", 10}, {"Scatter", 40}}), "Gather", "Scatter", 50), 1u);
    EXPECT_EQ(count_pair_cooccurrences(sites({{"Gather", 10}, {"Scatter", 100}}), "Gather", "Scatter", 50), 0u);
    EXPECT_EQ(count_pair_cooccurrences(sites({{"Gather", 10}, {"Scatter", 15}, {"Gather", 20}}),
                                       "Gather", "Scatter", 10),
              2u);
}

TEST(PairCooccurrence, SameLineAndSymmetry)
{
    auto s = sites({{"Reduce", 4}, {"Bcast", 4}, {"Reduce", 4}});
    EXPECT_EQ(count_pair_cooccurrences(s, "Reduce", "Bcast", 0), 2u);
    EXPECT_EQ(count_pair_cooccurrences(s, "Bcast", "Reduce", 0), 2u);
}

TEST(PairCooccurrence, Errors)
{
    auto s = sites({{"Reduce", 4}});
    EXPECT_THROW(count_pair_cooccurrences(s, "Reduce", "Reduce", 3), DomainError);
    EXPECT_THROW(count_pair_cooccurrences(s, "Reduce", "Bcast", -1), DomainError);
}

TEST(Sweep, FileBoundariesRespected)
{
    store::Store db(":memory:");
    db.ingest(scan_of("1", "r", {{"Gather", 10}}, "a.c"));
    db.ingest(scan_of("2", "r", {{"Scatter", 10}}, "a.c"));
    auto rep = sweep_epsilon({{"Gather", "Scatter"}}, {0, 1000}, db);
    ASSERT_EQ(rep.size(), 1u);
    EXPECT_EQ(rep[0].rows, (std::vector<SweepRow>{{0, 0}, {1000, 0}}));
}

TEST(Sweep, SortsEpsilonsAndRejectsEmpty)
{
    store::Store db(":memory:");
    db.ingest(scan_of("1", "r", {{"Gather", 10}, {"Scatter", 14}}));
    auto rep = sweep_epsilon({{"Gather", "Scatter"}}, {10, 0, 5, 5}, db);
    EXPECT_EQ(rep[0].rows, (std::vector<SweepRow>{{0, 0}, {5, 1}, {10, 1}}));
    EXPECT_THROW(sweep_epsilon({{"Gather", "Scatter"}}, {}, db), DomainError);
    EXPECT_THROW(sweep_epsilon({{"Gather", "Send"}}, {1}, db), DomainError);
}

TEST(Sweep, MatchesOracleAndIsMonotone)
{
    std::mt19937_64 rng(23);
    store::Store db(":memory:");
    for (int r = 0; r < 10; ++r) {
        db.ingest(testing_support::random_scan(rng, "r" + std::to_string(r), 10, 60, 400));
    }
    auto files = db.call_sites_by_file();
    const std::vector<std::int64_t> eps = {0, 1, 5, 10, 30, 50, 100, 1000};
    auto reports = sweep_epsilon(default_pairs(), eps, db);
    ASSERT_EQ(reports.size(), default_pairs().size());
    for (const auto& rep : reports) {
        std::uint64_t prev = 0;
        for (const auto& row : rep.rows) {
            EXPECT_EQ(row.count, testing_support::oracle_pair_count(files, rep.pair.first,
                                                                    rep.pair.second, row.epsilon));
            EXPECT_GE(row.count, prev);
            prev = row.count;
        }
    }
}

TEST(RepeatedGroups, MatchesOracleOnRandomFiles)
{
    std::mt19937_64 rng(5);
    const auto& all = default_collective_names();
    for (int trial = 0; trial < 300; ++trial) {
        auto scan = testing_support::random_scan(rng, "x", 1, 120, 500);
        std::vector<StoredCallSite> s;
        for (const auto& cs : scan.call_sites) {
            s.push_back({cs.repo_id, "rev1", cs.filename, cs.collective, cs.line_number, cs.column});
        }
        std::set<CollectiveName> names = {all[trial % all.size()], all[(trial * 7 + 3) % all.size()]};
        std::vector<std::string> name_list(names.begin(), names.end());
        for (std::int64_t eps : {0, 3, 10, 50, 200}) {
            std::size_t prev_groups = SIZE_MAX;
            for (std::int64_t delta : {2, 3, 4, 6}) {
                auto got = find_repeated_groups(s, query(names, eps, delta));
                auto want = testing_support::oracle_groups(s, name_list, eps, delta);
                ASSERT_EQ(got.size(), want.size());
                for (std::size_t i = 0; i < got.size(); ++i) {
                    std::vector<std::int64_t> lines;
                    for (const auto& site : got[i].sites) {
                        lines.push_back(site.line_number);
                    }
                    EXPECT_EQ(lines, want[i].lines);
                    EXPECT_LE(got[i].span, eps);
                    EXPECT_GE(static_cast<std::int64_t>(got[i].size), delta);
                }
                // Greedy cuts do not depend on delta, so a larger threshold
                // only filters groups out.
                EXPECT_LE(got.size(), prev_groups);
                prev_groups = got.size();
            }
        }
    }
}

TEST(FusionRatio, HalfOfGathersPaired)
{
    store::Store db(":memory:");
    db.ingest(scan_of("1", "r", {{"Gather", 10}, {"Scatter", 40}, {"Gather", 300}}));
    auto fr = fusion_ratio({"Gather", "Scatter"}, 50, db);
    EXPECT_EQ(fr.paired_a, 1u);
    EXPECT_EQ(fr.total_a, 2u);
    EXPECT_EQ(fr.paired_b, 1u);
    EXPECT_EQ(fr.total_b, 1u);
    EXPECT_DOUBLE_EQ(fr.pct_a(), 50.0);
    EXPECT_DOUBLE_EQ(fr.pct_b(), 100.0);
}

TEST(FusionRatio, ZeroOccurrencesIsDomainError)
{
    store::Store db(":memory:");
    db.ingest(scan_of("1", "r", {{"Gather", 10}}));
    try {
        fusion_ratio({"Gather", "Scatter"}, 50, db);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("Scatter"), std::string::npos);
    }
}

TEST(Homogeneity, SandwichSplit)
{
    store::Store db(":memory:");
    db.ingest(scan_of("1", "r", {{"Allreduce", 200}, {"Allreduce", 217}, {"Allgather", 227}, {"Allgather", 230}}));
    auto rep = homogeneity_distribution({"Allreduce", "Allgather"}, db);
    EXPECT_EQ(rep.tally, (HomogeneityTally{2, 1}));
    EXPECT_EQ(format_tenths(rep.homogeneous_tenths()), "66.7");
    EXPECT_EQ(format_tenths(rep.mixed_tenths()), "33.3");
}

TEST(Homogeneity, AlternatingAndUniform)
{
    auto alt = sites({{"Reduce", 1}, {"Bcast", 2}, {"Reduce", 3}, {"Bcast", 4}});
    EXPECT_EQ(tally_adjacent_pairs(alt, "Reduce", "Bcast"), (HomogeneityTally{0, 3}));
    auto same = sites({{"Reduce", 1}, {"Reduce", 2}, {"Reduce", 3}});
    EXPECT_EQ(tally_adjacent_pairs(same, "Reduce", "Bcast"), (HomogeneityTally{2, 0}));
    auto none = sites({{"Barrier", 1}});
    EXPECT_EQ(tally_adjacent_pairs(none, "Reduce", "Bcast"), (HomogeneityTally{}));
}

TEST(Homogeneity, EmptyReport)
{
    store::Store db(":memory:");
    auto rep = homogeneity_distribution({"Reduce", "Bcast"}, db);
    EXPECT_TRUE(rep.empty());
}

TEST(Homogeneity, PercentagesAlwaysSumToHundred)
{
    for (std::uint64_t h = 0; h <= 60; ++h) {
        for (std::uint64_t m = 0; m <= 60; ++m) {
            if (h + m == 0) {
                continue;
            }
            HomogeneityReport rep{{"Reduce", "Bcast"}, {h, m}};
            EXPECT_EQ(rep.homogeneous_tenths() + rep.mixed_tenths(), 1000);
            EXPECT_GE(rep.mixed_tenths(), 0);
        }
    }
}

TEST(Percent, RoundingAndFormatting)
{
    EXPECT_EQ(percent_tenths(2, 3), 667);
    EXPECT_EQ(percent_tenths(1, 3), 333);
    EXPECT_EQ(percent_tenths(1, 2), 500);
    EXPECT_EQ(percent_tenths(1, 8), 125);    // 12.5 exactly
    EXPECT_EQ(percent_tenths(1, 16), 63);    // 6.25 -> 6.3
    EXPECT_EQ(percent_tenths(0, 5), 0);
    EXPECT_EQ(format_tenths(1000), "100.0");
    EXPECT_EQ(format_tenths(5), "0.5");
    EXPECT_EQ(format_tenths(667), "66.7");
}

#include "mpirecon/pipeline.hpp"

#include <algorithm>

#include "mpirecon/error.hpp"
#include "mpirecon/scanner.hpp"

namespace mpirecon::pipeline {

namespace {

std::string label(const corpus::ManifestEntry& e)
{
    return e.owner + "/" + e.name + "@" + e.default_revision;
}

} // namespace

const std::vector<std::int64_t>& default_epsilons()
{
    static const std::vector<std::int64_t> eps = {0, 5, 10, 20, 30, 50, 100};
    return eps;
}

void PipelineConfig::validate() const
{
    if (byte_budget == 0) {
        throw DomainError("byte budget must be positive");
    }
    if (epsilons.empty()) {
        throw DomainError("at least one epsilon is required");
    }
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (epsilons[i] < 0) {
            throw DomainError("epsilon must be non-negative, got " + std::to_string(epsilons[i]));
        }
        if (i > 0 && epsilons[i] <= epsilons[i - 1]) {
            throw DomainError("epsilons must be strictly increasing");
        }
    }
    if (delta < 2) {
        throw DomainError("delta must be at least 2");
    }
    for (const auto& [a, b] : default_pairs) {
        collective_set.require(a);
        collective_set.require(b);
        if (a == b) {
            throw DomainError("pair " + a + ":" + b + " repeats one collective");
        }
    }
    search.validate(collective_set);
}

RunSummary run_pipeline(const PipelineConfig& config,
                        const std::vector<corpus::ManifestEntry>& manifest, store::Store& db,
                        corpus::ArchiveSource& source, const RunHooks& hooks)
{
    if (config.byte_budget == 0) {
        throw BudgetError("byte budget must be positive");
    }
    RunSummary summary;
    std::vector<corpus::ManifestEntry> pending;
    for (const auto& e : manifest) {
        if (db.contains(e.repo_id, e.default_revision)) {
            summary.skipped_existing.push_back(label(e));
        } else {
            pending.push_back(e);
        }
    }

    // Leftovers of an interrupted run would count against the budget.
    corpus::release_partition({{}, config.byte_budget, config.workdir});

    auto observe = [&](const corpus::FetchedRepo& repo, std::uint64_t used) {
        summary.peak_workdir_bytes = std::max(summary.peak_workdir_bytes, used);
        summary.largest_repo_bytes = std::max(summary.largest_repo_bytes, repo.bytes);
        if (hooks.on_fetch) {
            hooks.on_fetch(repo, used);
        }
    };

    while (!pending.empty()) {
        corpus::Partition partition{pending, config.byte_budget, config.workdir};
        auto outcome = corpus::fetch_partition(partition, source, observe);

        for (const auto& fetched : outcome.fetched) {
            try {
                auto scan = scanner::scan_tree(fetched.root, fetched.entry.to_repo_record(),
                                               config.collective_set, {config.threads});
                if (hooks.on_scan) {
                    hooks.on_scan(scan);
                }
                db.ingest(scan);
                summary.ingested.push_back(label(fetched.entry));
            } catch (const std::exception& ex) {
                summary.failed.emplace_back(label(fetched.entry), ex.what());
            }
        }
        for (const auto& f : outcome.failed) {
            summary.failed.emplace_back(label(f.entry), f.reason);
        }
        corpus::release_partition(partition);

        if (outcome.skipped.size() == pending.size()) {
            throw BudgetError("no progress: budget too small to fetch any repository");
        }
        pending = std::move(outcome.skipped);
    }
    return summary;
}

} // namespace mpirecon::pipeline

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpirecon/collectives.hpp"
#include "mpirecon/corpus.hpp"
#include "mpirecon/store.hpp"

namespace mpirecon::pipeline {

const std::vector<std::int64_t>& default_epsilons();

// Run-wide parameters shared by every subcommand.
struct PipelineConfig {
    corpus::SearchSpec search;
    std::uint64_t byte_budget = 512ull * 1024 * 1024;
    std::filesystem::path workdir = "mpirecon-work";
    std::filesystem::path db_path = "mpirecon.db";
    CollectiveSet collective_set;
    std::vector<CollectivePair> default_pairs = mpirecon::default_pairs();
    std::vector<std::int64_t> epsilons = default_epsilons();
    std::int64_t delta = 2;
    std::size_t threads = 1;

    // byte_budget > 0, epsilons strictly increasing and non-negative,
    // delta >= 2, pairs made of set members. Throws DomainError.
    void validate() const;
};

struct RunSummary {
    std::vector<std::string> ingested; // "owner/name@revision"
    std::vector<std::string> skipped_existing;
    std::vector<std::pair<std::string, std::string>> failed; // (repo, reason)
    std::uint64_t peak_workdir_bytes = 0;
    std::uint64_t largest_repo_bytes = 0;
};

struct RunHooks {
    corpus::FetchObserver on_fetch;
    // Receives every scan before ingestion (used for --emit-scan).
    std::function<void(const ScanResult&)> on_scan;
};

// Partition loop: fetch under budget, scan, ingest, release; repeat until
// the manifest is exhausted. Snapshots already in the store are skipped,
// so re-running after a crash resumes where it stopped.
RunSummary run_pipeline(const PipelineConfig& config,
                        const std::vector<corpus::ManifestEntry>& manifest,
                        store::Store& db, corpus::ArchiveSource& source,
                        const RunHooks& hooks = {});

} // namespace mpirecon::pipeline

namespace mpirecon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the mpi-recon tool; returns the process exit code.
int run(int argc, const char* const* argv);

} // namespace mpirecon::cli

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpirecon/collectives.hpp"

namespace mpirecon {

// One mined repository snapshot. (repo_id, revision_id) identifies an
// ingestion; two revisions of the same project are stored side by side.
struct RepoRecord {
    std::string repo_id;
    std::string owner;
    std::string name;
    std::string revision_id;
    std::string clone_url;
    std::string retrieval_date; // ISO-8601 yyyy-mm-dd

    bool operator==(const RepoRecord&) const = default;
};

struct LineCounts {
    std::int64_t openmp = 0;
    std::int64_t openacc = 0;
    std::int64_t cuda = 0;
    std::int64_t opencl = 0;
    std::int64_t c = 0;
    std::int64_t cpp = 0;
    std::int64_t fortran = 0;
    std::int64_t total = 0;

    LineCounts& operator+=(const LineCounts& other);
    bool operator==(const LineCounts&) const = default;
};

struct FileRecord {
    std::string filename; // repository-relative, '/'-separated
    LineCounts counts;

    bool operator==(const FileRecord&) const = default;
};

struct CallSite {
    std::string repo_id;
    std::string filename;
    CollectiveName collective;
    std::int64_t line_number = 0; // 1-based
    std::int64_t column = 0;      // 1-based byte column of the "MPI_" token

    bool operator==(const CallSite&) const = default;
};

// Total order used everywhere call sites are listed.
bool call_site_less(const CallSite& a, const CallSite& b);

struct ScanLogEntry {
    std::string filename;
    std::string reason;
};

struct ScanResult {
    RepoRecord repo;
    std::vector<FileRecord> files;     // sorted by filename
    std::vector<CallSite> call_sites;  // sorted by (filename, line, column)
    std::vector<ScanLogEntry> log;     // sorted by filename
};

} // namespace mpirecon

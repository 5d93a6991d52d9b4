#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpirecon/collectives.hpp"
#include "mpirecon/records.hpp"

struct sqlite3;

namespace mpirecon::store {

struct StoredCallSite {
    std::string repo_id;
    std::string revision_id;
    std::string filename;
    CollectiveName collective;
    std::int64_t line_number = 0;
    std::int64_t column = 0;

    bool operator==(const StoredCallSite&) const = default;
};

// All call sites of one file of one repository snapshot, by line then column.
struct FileSites {
    std::string repo_id;
    std::string revision_id;
    std::string filename;
    std::vector<StoredCallSite> sites;
};

struct CallSiteFilter {
    std::optional<std::string> repo_id;
    std::optional<std::set<CollectiveName>> collectives;
};

struct IngestSummary {
    std::int64_t repos = 0;
    std::int64_t files = 0;
    std::int64_t call_sites = 0;

    bool operator==(const IngestSummary&) const = default;
};

enum class Table { Metadata, Collectives };

// SQLite-backed corpus database. Schema:
//
//   repos      (repo_id, revision_id) PK, owner, name, clone_url, retrieval_date
//   files      (repo_id, revision_id, filename) PK, eight line-count columns
//   call_sites (repo_id, revision_id, filename, line_number, column_number,
//               collective) PK, FK -> files
//
// One writer at a time; readers may share the file.
class Store {
public:
    // Opens (creating if needed) the database file. ":memory:" works too.
    explicit Store(const std::filesystem::path& path, CollectiveSet set = {});
    ~Store();

    Store(Store&&) noexcept;
    Store& operator=(Store&&) noexcept;
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    const CollectiveSet& collective_set() const { return set_; }

    // Transactional; replaces any rows previously ingested for the same
    // (repo_id, revision_id).
    IngestSummary ingest(const ScanResult& scan);

    bool contains(const std::string& repo_id, const std::string& revision_id) const;

    // Throws DomainError for names outside the configured set.
    std::int64_t total_occurrences(const CollectiveName& collective) const;

    IngestSummary row_counts() const;

    // Visits groups ordered by (repo_id, revision_id, filename).
    void for_each_file(const CallSiteFilter& filter,
                       const std::function<void(const FileSites&)>& visit) const;
    std::vector<FileSites> call_sites_by_file(const CallSiteFilter& filter = {}) const;

    void export_csv(Table table, const std::filesystem::path& path) const;

    // SHA-256 over every table's rows in primary-key order, hex encoded.
    std::string digest() const;

private:
    sqlite3* db_ = nullptr;
    CollectiveSet set_;
};

// Header rows written by export_csv.
const std::vector<std::string>& metadata_columns();
const std::vector<std::string>& collectives_columns();

// RFC-4180 field quoting.
std::string csv_field(const std::string& value);

} // namespace mpirecon::store

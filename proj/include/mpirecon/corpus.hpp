#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mpirecon/collectives.hpp"
#include "mpirecon/records.hpp"

namespace mpirecon::corpus {

inline constexpr const char* kTokenEnv = "MPIRECON_TOKEN";
inline constexpr const char* kTokenFallbackEnv = "GITHUB_TOKEN";

const std::vector<std::string>& supported_languages();

struct SearchSpec {
    std::vector<CollectiveName> keywords = default_search_keywords();
    std::vector<std::string> languages = supported_languages();
    std::int64_t max_results = 1000; // per (keyword, language) query
    std::int64_t per_page = 100;
    // {keyword} and {language} are substituted per query.
    std::string query_template = "MPI_{keyword} language:{language}";

    // Throws DomainError when a keyword is not a known collective or a
    // language is outside C/C++/Fortran.
    void validate(const CollectiveSet& known = {}) const;
};

struct ManifestEntry {
    std::string repo_id;
    std::string owner;
    std::string name;
    std::string clone_url;
    std::string default_revision;
    std::set<CollectiveName> matched_keywords;
    std::string retrieval_date;

    bool operator==(const ManifestEntry&) const = default;
    RepoRecord to_repo_record() const;
};

// MPIRECON_TOKEN, else GITHUB_TOKEN, else CredentialError naming both.
std::string resolve_token();

struct HttpResponse {
    int status = 0;
    std::multimap<std::string, std::string> headers; // lower-cased names
    std::string body;

    std::string header(std::string_view name) const;
};

using HttpHeaders = std::multimap<std::string, std::string>;

// Blocking GET. Network failures raise IoError; HTTP error codes are
// returned, not thrown.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse get(const std::string& url, const HttpHeaders& headers) = 0;
};

// cpp-httplib backed transport following redirects.
std::unique_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(60));

struct RetryPolicy {
    std::chrono::milliseconds initial_delay{1000};
    double factor = 2.0;
    int max_retries = 5;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

// Today's date as yyyy-mm-dd (UTC).
std::string utc_today();

// One code-hosting API endpoint. Requests are issued sequentially;
// rate-limit responses (429, or 403 carrying rate-limit headers) are
// retried with exponential backoff or the server's Retry-After hint.
class HostingApi {
public:
    HostingApi(std::string base_url, std::string token, HttpTransport& transport,
               RetryPolicy retry = {}, Sleeper sleeper = real_sleeper());

    const std::string& base_url() const { return base_url_; }
    const std::string& token() const { return token_; }

    std::string search_path = "/search/repositories";
    std::function<std::string()> today = utc_today;

    // GET base_url + path_and_query with auth; applies the retry policy.
    HttpResponse get(const std::string& path_and_query);

    // Rate-limit rejections seen so far (including retried ones).
    int rate_limit_rejections() const { return rejections_; }

private:
    std::string base_url_;
    std::string token_;
    HttpTransport& transport_;
    RetryPolicy retry_;
    Sleeper sleeper_;
    int rejections_ = 0;
};

// One query per (keyword, language); dedups by (owner, name) and returns
// entries sorted by (owner, name).
std::vector<ManifestEntry> search_repositories(const SearchSpec& spec, HostingApi& api);

// JSON Lines, one object per entry.
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

std::string manifest_line(const ManifestEntry& entry);
ManifestEntry parse_manifest_line(std::string_view line);

// Supplies the .tar.gz snapshot of a repository at its default revision.
class ArchiveSource {
public:
    virtual ~ArchiveSource() = default;
    virtual std::string fetch(const ManifestEntry& entry) = 0;
};

// file:// clone URLs are read from disk, clone URLs ending in .tar.gz/.tgz
// are downloaded directly, anything else goes through the API tarball
// endpoint {base_url}/repos/{owner}/{name}/tarball/{revision}.
class DefaultArchiveSource : public ArchiveSource {
public:
    DefaultArchiveSource(HttpTransport& transport, std::string api_base_url, std::string token = {});
    std::string fetch(const ManifestEntry& entry) override;

private:
    HttpTransport& transport_;
    std::string api_base_url_;
    std::string token_;
};

// Extracts a gzip'd ustar/pax archive into dest. Rejects entries that
// would escape dest. Returns bytes written.
std::uint64_t extract_tar_gz(std::string_view archive, const std::filesystem::path& dest);

// Sum of regular-file sizes below root; symlinks are not followed.
std::uint64_t directory_bytes(const std::filesystem::path& root);

struct Partition {
    std::vector<ManifestEntry> entries;
    std::uint64_t byte_budget = 0;
    std::filesystem::path workdir;
};

struct FetchedRepo {
    ManifestEntry entry;
    std::filesystem::path root; // scan root (single top-level dir unwrapped)
    std::uint64_t bytes = 0;
};

struct FetchFailure {
    ManifestEntry entry;
    std::string reason;
};

struct FetchOutcome {
    std::vector<FetchedRepo> fetched;
    std::vector<FetchFailure> failed;
    std::vector<ManifestEntry> skipped; // not attempted: budget reached
};

// Called after each successful extraction with the workdir's byte total.
using FetchObserver = std::function<void(const FetchedRepo&, std::uint64_t workdir_bytes)>;

// Fetches entries in order into workdir/<index>-<owner>-<name>. Stops
// before the next entry once the workdir holds byte_budget bytes, so
// usage never exceeds the budget by more than one repository.
FetchOutcome fetch_partition(const Partition& p, ArchiveSource& source,
                             const FetchObserver& observer = {});

// Removes everything under workdir, keeping the directory itself.
void release_partition(const Partition& p);

} // namespace mpirecon::corpus

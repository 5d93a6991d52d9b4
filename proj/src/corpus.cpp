#include "mpirecon/corpus.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "mpirecon/error.hpp"

namespace mpirecon::corpus {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string lowercase(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string url_encode(std::string_view s)
{
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 0xF];
        }
    }
    return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to)
{
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

bool ends_with(std::string_view s, std::string_view suffix)
{
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_rate_limited(const HttpResponse& r)
{
    if (r.status == 429) {
        return true;
    }
    if (r.status != 403) {
        return false;
    }
    return r.header("x-ratelimit-remaining") == "0" || !r.header("retry-after").empty() ||
           lowercase(r.body).find("rate limit") != std::string::npos;
}

std::optional<std::chrono::milliseconds> server_delay(const HttpResponse& r)
{
    auto retry_after = r.header("retry-after");
    if (!retry_after.empty()) {
        char* end = nullptr;
        long secs = std::strtol(retry_after.c_str(), &end, 10);
        if (end != retry_after.c_str() && secs >= 0) {
            return std::chrono::seconds(secs);
        }
    }
    auto reset = r.header("x-ratelimit-reset");
    if (r.header("x-ratelimit-remaining") == "0" && !reset.empty()) {
        char* end = nullptr;
        long long at = std::strtoll(reset.c_str(), &end, 10);
        if (end != reset.c_str()) {
            long long wait = at - static_cast<long long>(std::time(nullptr));
            return std::chrono::seconds(std::clamp<long long>(wait, 0, 3600));
        }
    }
    return std::nullopt;
}

std::string json_id(const json& v)
{
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer()) {
        return std::to_string(v.get<long long>());
    }
    throw std::invalid_argument("id is neither string nor integer");
}

ManifestEntry parse_item(const json& item)
{
    const json& repo = item.contains("repository") ? item.at("repository") : item;
    ManifestEntry e;
    e.repo_id = json_id(repo.at("id"));
    e.owner = repo.at("owner").at("login").get<std::string>();
    e.name = repo.at("name").get<std::string>();
    if (repo.contains("clone_url") && repo["clone_url"].is_string()) {
        e.clone_url = repo["clone_url"].get<std::string>();
    } else if (repo.contains("html_url") && repo["html_url"].is_string()) {
        e.clone_url = repo["html_url"].get<std::string>() + ".git";
    } else {
        e.clone_url = "https://github.com/" + e.owner + "/" + e.name + ".git";
    }
    e.default_revision = repo.contains("default_branch") && repo["default_branch"].is_string()
                             ? repo["default_branch"].get<std::string>()
                             : "HEAD";
    if (e.clone_url.find("://") == std::string::npos) {
        throw std::invalid_argument("clone_url is not an absolute URL: " + e.clone_url);
    }
    return e;
}

std::string sanitize(std::string_view s)
{
    std::string out;
    for (unsigned char c : s) {
        out += (std::isalnum(c) || c == '.' || c == '_' || c == '-') ? static_cast<char>(c) : '_';
    }
    return out;
}

std::string read_binary(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("not found: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --- tar.gz ---------------------------------------------------------------

std::string gunzip(std::string_view data)
{
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) {
        throw IoError("zlib init failed");
    }
    std::string out;
    char buf[64 * 1024];
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    int rc = Z_OK;
    while (true) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        out.append(buf, sizeof buf - zs.avail_out);
        if (rc == Z_STREAM_END) {
            if (zs.avail_in == 0) {
                break;
            }
            inflateReset(&zs); // concatenated gzip members
            continue;
        }
        if (rc != Z_OK) {
            std::string msg = zs.msg ? zs.msg : "corrupt gzip stream";
            inflateEnd(&zs);
            throw IoError("gzip: " + msg);
        }
        if (zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw IoError("gzip: truncated stream");
        }
    }
    inflateEnd(&zs);
    return out;
}

std::string tar_string(std::string_view block, std::size_t off, std::size_t len)
{
    auto field = block.substr(off, len);
    auto nul = field.find('\0');
    return std::string(field.substr(0, nul));
}

std::uint64_t tar_number(std::string_view block, std::size_t off, std::size_t len)
{
    auto field = block.substr(off, len);
    if (!field.empty() && (static_cast<unsigned char>(field[0]) & 0x80)) {
        std::uint64_t v = static_cast<unsigned char>(field[0]) & 0x7F;
        for (std::size_t i = 1; i < field.size(); ++i) {
            v = (v << 8) | static_cast<unsigned char>(field[i]);
        }
        return v;
    }
    std::uint64_t v = 0;
    for (char c : field) {
        if (c >= '0' && c <= '7') {
            v = v * 8 + static_cast<std::uint64_t>(c - '0');
        } else if (c == '\0' || c == ' ') {
            if (v != 0) {
                break;
            }
        } else {
            throw IoError("tar: bad numeric field");
        }
    }
    return v;
}

bool checksum_ok(std::string_view block)
{
    std::uint64_t stored = tar_number(block, 148, 8);
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < 512; ++i) {
        sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(block[i]);
    }
    return sum == stored;
}

std::optional<std::string> pax_path(std::string_view records)
{
    std::optional<std::string> path;
    std::size_t pos = 0;
    while (pos < records.size()) {
        auto space = records.find(' ', pos);
        if (space == std::string_view::npos) {
            break;
        }
        std::size_t len = std::strtoul(std::string(records.substr(pos, space - pos)).c_str(), nullptr, 10);
        if (len == 0 || pos + len > records.size()) {
            break;
        }
        auto rec = records.substr(space + 1, pos + len - space - 2); // drop trailing '\n'
        auto eq = rec.find('=');
        if (eq != std::string_view::npos && rec.substr(0, eq) == "path") {
            path = std::string(rec.substr(eq + 1));
        }
        pos += len;
    }
    return path;
}

fs::path safe_join(const fs::path& dest, const std::string& name)
{
    fs::path rel = fs::path(name).lexically_normal();
    if (rel.is_absolute() || rel.has_root_name()) {
        throw IoError("tar: absolute entry path " + name);
    }
    for (const auto& part : rel) {
        if (part == "..") {
            throw IoError("tar: entry escapes destination: " + name);
        }
    }
    return dest / rel;
}

} // namespace

const std::vector<std::string>& supported_languages()
{
    static const std::vector<std::string> langs = {"C", "C++", "Fortran"};
    return langs;
}

void SearchSpec::validate(const CollectiveSet& known) const
{
    if (keywords.empty()) {
        throw DomainError("search needs at least one keyword");
    }
    for (const auto& kw : keywords) {
        if (!known.contains(kw)) {
            throw DomainError("unknown collective keyword '" + kw + "'");
        }
    }
    for (const auto& lang : languages) {
        const auto& ok = supported_languages();
        if (std::find(ok.begin(), ok.end(), lang) == ok.end()) {
            throw DomainError("unsupported language '" + lang + "' (expected C, C++ or Fortran)");
        }
    }
    if (max_results < 0) {
        throw DomainError("max_results must be non-negative");
    }
    if (per_page <= 0) {
        throw DomainError("per_page must be positive");
    }
}

RepoRecord ManifestEntry::to_repo_record() const
{
    return {repo_id, owner, name, default_revision, clone_url, retrieval_date};
}

std::string resolve_token()
{
    for (const char* var : {kTokenEnv, kTokenFallbackEnv}) {
        const char* value = std::getenv(var);
        if (value && *value) {
            return value;
        }
    }
    throw CredentialError(std::string("no API token: set ") + kTokenEnv + " (or " +
                          kTokenFallbackEnv + ")");
}

std::string HttpResponse::header(std::string_view name) const
{
    auto it = headers.find(lowercase(name));
    return it == headers.end() ? std::string() : it->second;
}

Sleeper real_sleeper()
{
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string utc_today()
{
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[16];
    std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
    return buf;
}

HostingApi::HostingApi(std::string base_url, std::string token, HttpTransport& transport,
                       RetryPolicy retry, Sleeper sleeper)
    : base_url_(std::move(base_url)),
      token_(std::move(token)),
      transport_(transport),
      retry_(retry),
      sleeper_(std::move(sleeper))
{
    while (!base_url_.empty() && base_url_.back() == '/') {
        base_url_.pop_back();
    }
}

HttpResponse HostingApi::get(const std::string& path_and_query)
{
    const std::string url = base_url_ + path_and_query;
    HttpHeaders headers = {
        {"Accept", "application/vnd.github+json"},
        {"User-Agent", "mpi-recon"},
        {"X-GitHub-Api-Version", "2022-11-28"},
    };
    if (!token_.empty()) {
        headers.emplace("Authorization", "Bearer " + token_);
    }

    for (int attempt = 0;; ++attempt) {
        HttpResponse r = transport_.get(url, headers);
        if (is_rate_limited(r)) {
            ++rejections_;
            if (attempt >= retry_.max_retries) {
                throw RateLimitError("rate limited after " + std::to_string(attempt) +
                                     " retries: " + url);
            }
            auto delay = server_delay(r).value_or(std::chrono::milliseconds(static_cast<long long>(
                static_cast<double>(retry_.initial_delay.count()) * std::pow(retry_.factor, attempt))));
            sleeper_(delay);
            continue;
        }
        if (r.status == 401) {
            throw CredentialError("API rejected the token (HTTP 401) for " + url);
        }
        return r;
    }
}

std::vector<ManifestEntry> search_repositories(const SearchSpec& spec, HostingApi& api)
{
    spec.validate();
    std::map<std::pair<std::string, std::string>, ManifestEntry> found;
    const std::string date = api.today();
    constexpr std::int64_t kSearchWindow = 1000;

    for (const auto& kw : spec.keywords) {
        for (const auto& lang : spec.languages) {
            std::string query = replace_all(replace_all(spec.query_template, "{keyword}", kw),
                                            "{language}", lang);
            std::int64_t collected = 0;
            for (std::int64_t page = 1; collected < spec.max_results; ++page) {
                std::string where = "query '" + query + "' page " + std::to_string(page);
                auto resp = api.get(api.search_path + "?q=" + url_encode(query) +
                                    "&per_page=" + std::to_string(spec.per_page) +
                                    "&page=" + std::to_string(page));
                if (resp.status != 200) {
                    throw ProtocolError("HTTP " + std::to_string(resp.status) + " for " + where);
                }
                json body;
                std::size_t n_items = 0;
                std::int64_t total_count = -1;
                try {
                    body = json::parse(resp.body);
                    const auto& items = body.at("items");
                    if (!items.is_array()) {
                        throw std::invalid_argument("items is not an array");
                    }
                    if (body.contains("total_count") && body["total_count"].is_number_integer()) {
                        total_count = body["total_count"].get<std::int64_t>();
                    }
                    n_items = items.size();
                    for (const auto& item : items) {
                        if (collected >= spec.max_results) {
                            break;
                        }
                        auto e = parse_item(item);
                        e.retrieval_date = date;
                        auto key = std::make_pair(e.owner, e.name);
                        auto [it, inserted] = found.try_emplace(key, std::move(e));
                        it->second.matched_keywords.insert(kw);
                        ++collected;
                    }
                } catch (const std::exception& ex) {
                    throw ProtocolError("malformed response for " + where + ": " + ex.what());
                }
                const auto seen = page * spec.per_page;
                if (static_cast<std::int64_t>(n_items) < spec.per_page || seen >= kSearchWindow ||
                    (total_count >= 0 && seen >= total_count)) {
                    break;
                }
            }
        }
    }

    std::vector<ManifestEntry> entries;
    entries.reserve(found.size());
    for (auto& [key, e] : found) {
        entries.push_back(std::move(e));
    }
    return entries;
}

std::string manifest_line(const ManifestEntry& e)
{
    json j = json::object();
    j["repo_id"] = e.repo_id;
    j["owner"] = e.owner;
    j["name"] = e.name;
    j["clone_url"] = e.clone_url;
    j["default_revision"] = e.default_revision;
    j["matched_keywords"] = e.matched_keywords;
    j["retrieval_date"] = e.retrieval_date;
    return j.dump();
}

ManifestEntry parse_manifest_line(std::string_view line)
{
    try {
        json j = json::parse(line);
        ManifestEntry e;
        e.repo_id = j.at("repo_id").get<std::string>();
        e.owner = j.at("owner").get<std::string>();
        e.name = j.at("name").get<std::string>();
        e.clone_url = j.at("clone_url").get<std::string>();
        e.default_revision = j.at("default_revision").get<std::string>();
        e.matched_keywords = j.at("matched_keywords").get<std::set<std::string>>();
        e.retrieval_date = j.at("retrieval_date").get<std::string>();
        return e;
    } catch (const json::exception& ex) {
        throw ProtocolError(std::string("bad manifest record: ") + ex.what());
    }
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write manifest " + path.string());
    }
    for (const auto& e : entries) {
        out << manifest_line(e) << '\n';
    }
    if (!out.flush()) {
        throw IoError("write failed: " + path.string());
    }
}

std::vector<ManifestEntry> read_manifest(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read manifest " + path.string());
    }
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            entries.push_back(parse_manifest_line(line));
        } catch (const ProtocolError& ex) {
            throw ProtocolError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return entries;
}

DefaultArchiveSource::DefaultArchiveSource(HttpTransport& transport, std::string api_base_url,
                                           std::string token)
    : transport_(transport), api_base_url_(std::move(api_base_url)), token_(std::move(token))
{
    while (!api_base_url_.empty() && api_base_url_.back() == '/') {
        api_base_url_.pop_back();
    }
}

std::string DefaultArchiveSource::fetch(const ManifestEntry& entry)
{
    const std::string& url = entry.clone_url;
    if (url.rfind("file://", 0) == 0) {
        return read_binary(url.substr(7));
    }
    std::string target = (ends_with(url, ".tar.gz") || ends_with(url, ".tgz"))
                             ? url
                             : api_base_url_ + "/repos/" + entry.owner + "/" + entry.name +
                                   "/tarball/" + entry.default_revision;
    HttpHeaders headers = {{"User-Agent", "mpi-recon"}};
    if (!token_.empty()) {
        headers.emplace("Authorization", "Bearer " + token_);
    }
    auto r = transport_.get(target, headers);
    if (r.status != 200) {
        throw IoError("HTTP " + std::to_string(r.status) + " fetching " + target);
    }
    return std::move(r.body);
}

std::uint64_t extract_tar_gz(std::string_view archive, const fs::path& dest)
{
    const std::string tar = gunzip(archive);
    std::string_view data(tar);
    std::uint64_t written = 0;
    std::optional<std::string> next_name;
    std::size_t off = 0;

    while (off + 512 <= data.size()) {
        auto block = data.substr(off, 512);
        if (block.find_first_not_of('\0') == std::string_view::npos) {
            break;
        }
        if (!checksum_ok(block)) {
            throw IoError("tar: header checksum mismatch at offset " + std::to_string(off));
        }
        const std::uint64_t size = tar_number(block, 124, 12);
        const char type = block[156];
        const std::size_t body = off + 512;
        const std::size_t padded = static_cast<std::size_t>((size + 511) / 512 * 512);
        if (body + size > data.size()) {
            throw IoError("tar: truncated archive");
        }
        auto content = data.substr(body, static_cast<std::size_t>(size));

        std::string name = tar_string(block, 0, 100);
        if (block.substr(257, 5) == "ustar") {
            auto prefix = tar_string(block, 345, 155);
            if (!prefix.empty()) {
                name = prefix + "/" + name;
            }
        }
        if (next_name) {
            name = std::move(*next_name);
            next_name.reset();
        }

        switch (type) {
        case 'x':
            next_name = pax_path(content);
            break;
        case 'L':
            next_name = std::string(content.substr(0, content.find('\0')));
            break;
        case '0':
        case '\0':
        case '7': {
            auto path = safe_join(dest, name);
            fs::create_directories(path.parent_path());
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            out.write(content.data(), static_cast<std::streamsize>(content.size()));
            if (!out) {
                throw IoError("cannot write " + path.string());
            }
            written += size;
            break;
        }
        case '5':
            fs::create_directories(safe_join(dest, name));
            break;
        default:
            break; // links, devices and global pax headers are ignored
        }
        off = body + padded;
    }
    return written;
}

std::uint64_t directory_bytes(const fs::path& root)
{
    std::uint64_t total = 0;
    std::error_code ec;
    if (!fs::exists(root, ec)) {
        return 0;
    }
    for (fs::recursive_directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec)) {
        std::error_code sec;
        if (!it->is_symlink(sec) && it->is_regular_file(sec)) {
            total += it->file_size(sec);
        }
    }
    return total;
}

FetchOutcome fetch_partition(const Partition& p, ArchiveSource& source, const FetchObserver& observer)
{
    if (p.byte_budget == 0) {
        throw BudgetError("byte budget is 0; nothing can be fetched");
    }
    std::error_code ec;
    fs::create_directories(p.workdir, ec);
    if (ec) {
        throw IoError("cannot create workdir " + p.workdir.string() + ": " + ec.message());
    }
    std::uint64_t used = directory_bytes(p.workdir);
    if (used >= p.byte_budget && !p.entries.empty()) {
        throw BudgetError("workdir already holds " + std::to_string(used) +
                          " bytes, budget is " + std::to_string(p.byte_budget));
    }

    FetchOutcome outcome;
    for (std::size_t i = 0; i < p.entries.size(); ++i) {
        const auto& entry = p.entries[i];
        if (used >= p.byte_budget) {
            outcome.skipped.assign(p.entries.begin() + static_cast<std::ptrdiff_t>(i), p.entries.end());
            break;
        }
        fs::path dir = p.workdir / (std::to_string(i) + "-" + sanitize(entry.owner) + "-" + sanitize(entry.name));
        try {
            auto archive = source.fetch(entry);
            fs::remove_all(dir);
            fs::create_directories(dir);
            FetchedRepo repo{entry, dir, extract_tar_gz(archive, dir)};
            // GitHub tarballs wrap everything in one <owner>-<name>-<sha>/ directory.
            std::vector<fs::path> children;
            for (const auto& child : fs::directory_iterator(dir)) {
                children.push_back(child.path());
            }
            if (children.size() == 1 && fs::is_directory(fs::symlink_status(children.front()))) {
                repo.root = children.front();
            }
            used = directory_bytes(p.workdir);
            if (observer) {
                observer(repo, used);
            }
            outcome.fetched.push_back(std::move(repo));
        } catch (const std::exception& ex) {
            fs::remove_all(dir, ec);
            used = directory_bytes(p.workdir);
            outcome.failed.push_back({entry, ex.what()});
        }
    }
    return outcome;
}

void release_partition(const Partition& p)
{
    std::error_code ec;
    if (!fs::exists(p.workdir, ec)) {
        return;
    }
    std::vector<std::string> survivors;
    for (const auto& child : fs::directory_iterator(p.workdir)) {
        std::error_code rm;
        fs::remove_all(child.path(), rm);
        if (rm) {
            survivors.push_back(child.path().string() + " (" + rm.message() + ")");
        }
    }
    if (!survivors.empty()) {
        std::string msg = "could not remove:";
        for (const auto& s : survivors) {
            msg += " " + s;
        }
        throw IoError(msg);
    }
}

} // namespace mpirecon::corpus

#include "mpirecon/store.hpp"

#include <openssl/evp.h>
#include <sqlite3.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <utility>

#include "mpirecon/error.hpp"

namespace mpirecon::store {

namespace {

constexpr const char* kSchema = R"sql(
PRAGMA foreign_keys = ON;
CREATE TABLE IF NOT EXISTS repos (
    repo_id         TEXT NOT NULL,
    revision_id     TEXT NOT NULL,
    owner           TEXT NOT NULL,
    name            TEXT NOT NULL,
    clone_url       TEXT NOT NULL,
    retrieval_date  TEXT NOT NULL,
    PRIMARY KEY (repo_id, revision_id)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS files (
    repo_id         TEXT NOT NULL,
    revision_id     TEXT NOT NULL,
    filename        TEXT NOT NULL,
    openmp_lines    INTEGER NOT NULL CHECK (openmp_lines >= 0),
    openacc_lines   INTEGER NOT NULL CHECK (openacc_lines >= 0),
    cuda_lines      INTEGER NOT NULL CHECK (cuda_lines >= 0),
    opencl_lines    INTEGER NOT NULL CHECK (opencl_lines >= 0),
    c_lines         INTEGER NOT NULL CHECK (c_lines >= 0),
    cpp_lines       INTEGER NOT NULL CHECK (cpp_lines >= 0),
    fortran_lines   INTEGER NOT NULL CHECK (fortran_lines >= 0),
    total_lines     INTEGER NOT NULL CHECK (total_lines >= 0),
    PRIMARY KEY (repo_id, revision_id, filename),
    FOREIGN KEY (repo_id, revision_id) REFERENCES repos (repo_id, revision_id) ON DELETE CASCADE
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS call_sites (
    repo_id         TEXT NOT NULL,
    revision_id     TEXT NOT NULL,
    filename        TEXT NOT NULL,
    line_number     INTEGER NOT NULL CHECK (line_number >= 1),
    column_number   INTEGER NOT NULL CHECK (column_number >= 1),
    collective      TEXT NOT NULL,
    PRIMARY KEY (repo_id, revision_id, filename, line_number, column_number, collective),
    FOREIGN KEY (repo_id, revision_id, filename)
        REFERENCES files (repo_id, revision_id, filename) ON DELETE CASCADE
) WITHOUT ROWID;
CREATE INDEX IF NOT EXISTS call_sites_collective ON call_sites (collective);
)sql";

[[noreturn]] void fail(sqlite3* db, const std::string& what)
{
    int code = db ? sqlite3_extended_errcode(db) : SQLITE_ERROR;
    std::string msg = what + ": " + (db ? sqlite3_errmsg(db) : "sqlite error");
    if ((code & 0xFF) == SQLITE_CONSTRAINT) {
        throw ContractError("constraint violation, " + msg);
    }
    throw IoError(msg);
}

class Statement {
public:
    Statement(sqlite3* db, const std::string& sql) : db_(db)
    {
        if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK) {
            fail(db, "prepare");
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int index, const std::string& value)
    {
        if (sqlite3_bind_text(stmt_, index, value.data(), static_cast<int>(value.size()),
                              SQLITE_TRANSIENT) != SQLITE_OK) {
            fail(db_, "bind");
        }
        return *this;
    }

    Statement& bind(int index, std::int64_t value)
    {
        if (sqlite3_bind_int64(stmt_, index, value) != SQLITE_OK) {
            fail(db_, "bind");
        }
        return *this;
    }

    // true while a row is available.
    bool step()
    {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) {
            return true;
        }
        if (rc != SQLITE_DONE) {
            fail(db_, "step");
        }
        return false;
    }

    void run()
    {
        step();
        sqlite3_reset(stmt_);
        sqlite3_clear_bindings(stmt_);
    }

    std::string text(int col) const
    {
        auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
                 : std::string();
    }

    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
    int columns() const { return sqlite3_column_count(stmt_); }

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql)
{
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        int code = sqlite3_extended_errcode(db);
        if ((code & 0xFF) == SQLITE_CONSTRAINT) {
            throw ContractError(std::string("constraint violation: ") + msg);
        }
        throw IoError(std::string("sqlite: ") + msg);
    }
}

std::int64_t scalar(sqlite3* db, const std::string& sql)
{
    Statement st(db, sql);
    return st.step() ? st.integer(0) : 0;
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new())
    {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
            throw Error("sha256 init failed");
        }
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view data) { EVP_DigestUpdate(ctx_, data.data(), data.size()); }

    std::string hex()
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md.data(), &len);
        std::string out;
        char buf[3];
        for (unsigned i = 0; i < len; ++i) {
            std::snprintf(buf, sizeof buf, "%02x", md[i]);
            out += buf;
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

} // namespace

Store::Store(const std::filesystem::path& path, CollectiveSet set) : set_(std::move(set))
{
    if (sqlite3_open_v2(path.string().c_str(), &db_,
                        SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw IoError("cannot open database " + path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    try {
        exec(db_, kSchema);
    } catch (...) {
        sqlite3_close(db_);
        db_ = nullptr;
        throw;
    }
}

Store::~Store()
{
    if (db_) {
        sqlite3_close(db_);
    }
}

Store::Store(Store&& other) noexcept : db_(std::exchange(other.db_, nullptr)), set_(std::move(other.set_)) {}

Store& Store::operator=(Store&& other) noexcept
{
    if (this != &other) {
        if (db_) {
            sqlite3_close(db_);
        }
        db_ = std::exchange(other.db_, nullptr);
        set_ = std::move(other.set_);
    }
    return *this;
}

IngestSummary Store::ingest(const ScanResult& scan)
{
    const auto& repo = scan.repo;
    IngestSummary summary;
    exec(db_, "BEGIN IMMEDIATE");
    try {
        Statement(db_, "DELETE FROM repos WHERE repo_id = ?1 AND revision_id = ?2")
            .bind(1, repo.repo_id)
            .bind(2, repo.revision_id)
            .run();

        Statement(db_, "INSERT INTO repos (repo_id, revision_id, owner, name, clone_url, "
                       "retrieval_date) VALUES (?1, ?2, ?3, ?4, ?5, ?6)")
            .bind(1, repo.repo_id)
            .bind(2, repo.revision_id)
            .bind(3, repo.owner)
            .bind(4, repo.name)
            .bind(5, repo.clone_url)
            .bind(6, repo.retrieval_date)
            .run();
        summary.repos = 1;

        Statement file_insert(db_, "INSERT INTO files VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)");
        for (const auto& f : scan.files) {
            const auto& c = f.counts;
            file_insert.bind(1, repo.repo_id)
                .bind(2, repo.revision_id)
                .bind(3, f.filename)
                .bind(4, c.openmp)
                .bind(5, c.openacc)
                .bind(6, c.cuda)
                .bind(7, c.opencl)
                .bind(8, c.c)
                .bind(9, c.cpp)
                .bind(10, c.fortran)
                .bind(11, c.total)
                .run();
            ++summary.files;
        }

        Statement site_insert(db_, "INSERT INTO call_sites (repo_id, revision_id, filename, "
                                   "line_number, column_number, collective) "
                                   "VALUES (?1, ?2, ?3, ?4, ?5, ?6)");
        for (const auto& cs : scan.call_sites) {
            if (!set_.contains(cs.collective)) {
                throw DomainError("call site names unknown collective '" + cs.collective + "'");
            }
            site_insert.bind(1, cs.repo_id)
                .bind(2, repo.revision_id)
                .bind(3, cs.filename)
                .bind(4, cs.line_number)
                .bind(5, cs.column)
                .bind(6, cs.collective)
                .run();
            ++summary.call_sites;
        }
        exec(db_, "COMMIT");
    } catch (...) {
        sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
        throw;
    }
    return summary;
}

bool Store::contains(const std::string& repo_id, const std::string& revision_id) const
{
    Statement st(db_, "SELECT 1 FROM repos WHERE repo_id = ?1 AND revision_id = ?2");
    st.bind(1, repo_id).bind(2, revision_id);
    return st.step();
}

std::int64_t Store::total_occurrences(const CollectiveName& collective) const
{
    set_.require(collective);
    Statement st(db_, "SELECT COUNT(*) FROM call_sites WHERE collective = ?1");
    st.bind(1, collective);
    return st.step() ? st.integer(0) : 0;
}

IngestSummary Store::row_counts() const
{
    return {scalar(db_, "SELECT COUNT(*) FROM repos"), scalar(db_, "SELECT COUNT(*) FROM files"),
            scalar(db_, "SELECT COUNT(*) FROM call_sites")};
}

void Store::for_each_file(const CallSiteFilter& filter,
                          const std::function<void(const FileSites&)>& visit) const
{
    std::string sql = "SELECT repo_id, revision_id, filename, collective, line_number, "
                      "column_number FROM call_sites WHERE 1";
    int next = 1;
    if (filter.repo_id) {
        sql += " AND repo_id = ?" + std::to_string(next++);
    }
    if (filter.collectives) {
        if (filter.collectives->empty()) {
            return;
        }
        sql += " AND collective IN (";
        for (std::size_t i = 0; i < filter.collectives->size(); ++i) {
            sql += (i ? ", ?" : "?") + std::to_string(next++);
        }
        sql += ")";
    }
    sql += " ORDER BY repo_id, revision_id, filename, line_number, column_number, collective";

    Statement st(db_, sql);
    int index = 1;
    if (filter.repo_id) {
        st.bind(index++, *filter.repo_id);
    }
    if (filter.collectives) {
        for (const auto& name : *filter.collectives) {
            st.bind(index++, name);
        }
    }

    FileSites group;
    bool open = false;
    while (st.step()) {
        StoredCallSite site{st.text(0), st.text(1), st.text(2), st.text(3), st.integer(4), st.integer(5)};
        if (open && (site.repo_id != group.repo_id || site.revision_id != group.revision_id ||
                     site.filename != group.filename)) {
            visit(group);
            open = false;
        }
        if (!open) {
            group = FileSites{site.repo_id, site.revision_id, site.filename, {}};
            open = true;
        }
        group.sites.push_back(std::move(site));
    }
    if (open) {
        visit(group);
    }
}

std::vector<FileSites> Store::call_sites_by_file(const CallSiteFilter& filter) const
{
    std::vector<FileSites> out;
    for_each_file(filter, [&](const FileSites& g) { out.push_back(g); });
    return out;
}

const std::vector<std::string>& metadata_columns()
{
    static const std::vector<std::string> cols = {
        "Repo ID",     "Owner",         "Filename",   "Revision ID",  "Clone URL",
        "Retrieval Date", "OpenMP Lines", "OpenACC Lines", "CUDA Lines", "OpenCL Lines",
        "C Lines",     "CPP Lines",     "Fortran Lines", "Total Lines"};
    return cols;
}

const std::vector<std::string>& collectives_columns()
{
    static const std::vector<std::string> cols = {"Repo ID", "Revision ID", "Filename",
                                                  "Collective Call", "Line Number"};
    return cols;
}

std::string csv_field(const std::string& value)
{
    if (value.find_first_of(",\"\r\n") == std::string::npos) {
        return value;
    }
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

void Store::export_csv(Table table, const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    const auto& header = table == Table::Metadata ? metadata_columns() : collectives_columns();
    for (std::size_t i = 0; i < header.size(); ++i) {
        out << (i ? "," : "") << csv_field(header[i]);
    }
    out << '\n';

    const char* sql =
        table == Table::Metadata
            ? "SELECT r.repo_id, r.owner, f.filename, r.revision_id, r.clone_url, "
              "r.retrieval_date, f.openmp_lines, f.openacc_lines, f.cuda_lines, "
              "f.opencl_lines, f.c_lines, f.cpp_lines, f.fortran_lines, f.total_lines "
              "FROM files f JOIN repos r ON r.repo_id = f.repo_id AND r.revision_id = f.revision_id "
              "ORDER BY f.repo_id, f.revision_id, f.filename"
            : "SELECT repo_id, revision_id, filename, collective, line_number FROM call_sites "
              "ORDER BY repo_id, revision_id, filename, line_number, column_number, collective";
    Statement st(db_, sql);
    while (st.step()) {
        for (int c = 0; c < st.columns(); ++c) {
            out << (c ? "," : "") << csv_field(st.text(c));
        }
        out << '\n';
    }
    if (!out.flush()) {
        throw IoError("write failed: " + path.string());
    }
}

std::string Store::digest() const
{
    static const std::array<std::pair<const char*, const char*>, 3> tables = {{
        {"repos", "SELECT * FROM repos ORDER BY repo_id, revision_id"},
        {"files", "SELECT * FROM files ORDER BY repo_id, revision_id, filename"},
        {"call_sites", "SELECT * FROM call_sites ORDER BY repo_id, revision_id, filename, "
                       "line_number, column_number, collective"},
    }};
    Sha256 sha;
    for (const auto& [name, sql] : tables) {
        sha.update(name);
        sha.update("\x1d");
        Statement st(db_, sql);
        while (st.step()) {
            for (int c = 0; c < st.columns(); ++c) {
                sha.update(st.text(c));
                sha.update("\x1f");
            }
            sha.update("\x1e");
        }
    }
    return sha.hex();
}

} // namespace mpirecon::store

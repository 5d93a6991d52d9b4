#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mpirecon/error.hpp"
#include "mpirecon/patterns.hpp"
#include "mpirecon/pipeline.hpp"
#include "mpirecon/scanner.hpp"

namespace mpirecon::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    pipeline::PipelineConfig config;
    fs::path manifest = "manifest.jsonl";
    fs::path out_dir = "reports";
    std::string emit_scan;
    std::string api_url = "https://api.github.com";
    std::vector<std::string> collectives = default_collective_names();
    std::vector<std::string> pairs;
    std::vector<std::int64_t> eps;
    int retries = 5;
    std::int64_t backoff_ms = 1000;

    bool pairs_given() const { return !pairs.empty(); }
};

class UsageError : public Error {
public:
    using Error::Error;
};

// Advisory lock next to the database so one pipeline runs per db file.
class DbLock {
public:
    explicit DbLock(const fs::path& db)
    {
        auto path = db.string() + ".lock";
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) {
            throw IoError("cannot open lock file " + path);
        }
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw IoError("database " + db.string() + " is in use by another pipeline");
        }
    }
    ~DbLock()
    {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    DbLock(const DbLock&) = delete;
    DbLock& operator=(const DbLock&) = delete;

private:
    int fd_ = -1;
};

std::vector<CollectivePair> selected_pairs(const Options& o)
{
    if (!o.pairs_given()) {
        return o.config.default_pairs;
    }
    std::vector<CollectivePair> pairs;
    for (const auto& text : o.pairs) {
        CollectivePair p;
        try {
            p = parse_pair(text);
        } catch (const DomainError& ex) {
            throw UsageError(ex.what());
        }
        for (const auto& name : {p.first, p.second}) {
            if (!o.config.collective_set.contains(name)) {
                throw UsageError("unknown collective '" + name + "' in pair " + text);
            }
        }
        if (p.first == p.second) {
            throw UsageError("pair " + text + " repeats one collective");
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::string report_suffix(const Options& o, const std::vector<CollectivePair>& pairs)
{
    return (o.pairs_given() && pairs.size() == 1) ? format_pair(pairs.front(), '-') : "all";
}

std::ofstream open_report(const Options& o, const std::string& filename)
{
    std::error_code ec;
    fs::create_directories(o.out_dir, ec);
    auto path = o.out_dir / filename;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write report " + path.string());
    }
    return out;
}

store::Store open_existing(const Options& o)
{
    if (!fs::exists(o.config.db_path)) {
        throw IoError("database not found: " + o.config.db_path.string());
    }
    return store::Store(o.config.db_path, o.config.collective_set);
}

int cmd_search(const Options& o)
{
    if (o.config.search.max_results == 0) {
        corpus::write_manifest({}, o.manifest);
        std::cout << "0 repositories written to " << o.manifest.string() << "\n";
        return kExitOk;
    }
    auto token = corpus::resolve_token();
    auto transport = corpus::make_http_transport();
    corpus::RetryPolicy retry{std::chrono::milliseconds(o.backoff_ms), 2.0, o.retries};
    corpus::HostingApi api(o.api_url, token, *transport, retry);
    auto entries = corpus::search_repositories(o.config.search, api);
    corpus::write_manifest(entries, o.manifest);
    std::cout << entries.size() << " repositories written to " << o.manifest.string() << "\n";
    if (api.rate_limit_rejections() > 0) {
        std::cout << api.rate_limit_rejections() << " rate-limited requests retried\n";
    }
    return kExitOk;
}

nlohmann::json file_json(const ScanResult& scan, const FileRecord& f)
{
    const auto& c = f.counts;
    return {{"type", "file"},          {"repo_id", scan.repo.repo_id},
            {"revision_id", scan.repo.revision_id},
            {"filename", f.filename},  {"openmp_lines", c.openmp},
            {"openacc_lines", c.openacc}, {"cuda_lines", c.cuda},
            {"opencl_lines", c.opencl}, {"c_lines", c.c},
            {"cpp_lines", c.cpp},      {"fortran_lines", c.fortran},
            {"total_lines", c.total}};
}

int cmd_run(const Options& o)
{
    auto manifest = corpus::read_manifest(o.manifest);
    if (o.config.db_path.has_parent_path()) {
        fs::create_directories(o.config.db_path.parent_path());
    }
    DbLock lock(o.config.db_path);
    store::Store db(o.config.db_path, o.config.collective_set);

    auto transport = corpus::make_http_transport();
    const char* token = std::getenv(corpus::kTokenEnv);
    if (!token || !*token) {
        token = std::getenv(corpus::kTokenFallbackEnv);
    }
    corpus::DefaultArchiveSource source(*transport, o.api_url, token ? token : "");

    auto log = open_report(o, "scan.log");
    std::ofstream emit;
    if (!o.emit_scan.empty()) {
        emit.open(o.emit_scan, std::ios::binary | std::ios::trunc);
        if (!emit) {
            throw IoError("cannot write " + o.emit_scan);
        }
    }
    pipeline::RunHooks hooks;
    hooks.on_scan = [&](const ScanResult& scan) {
        const std::string repo = scan.repo.owner + "/" + scan.repo.name;
        for (const auto& entry : scan.log) {
            log << repo << "\t" << entry.filename << "\t" << entry.reason << "\n";
        }
        if (emit.is_open()) {
            for (const auto& f : scan.files) {
                emit << file_json(scan, f).dump() << "\n";
            }
            for (const auto& cs : scan.call_sites) {
                nlohmann::json j = {{"type", "call_site"},     {"repo_id", cs.repo_id},
                                    {"revision_id", scan.repo.revision_id},
                                    {"filename", cs.filename}, {"collective", cs.collective},
                                    {"line_number", cs.line_number}, {"column", cs.column}};
                emit << j.dump() << "\n";
            }
        }
    };

    auto summary = pipeline::run_pipeline(o.config, manifest, db, source, hooks);
    std::cout << "ingested " << summary.ingested.size() << ", already present "
              << summary.skipped_existing.size() << ", failed " << summary.failed.size() << "\n";
    for (const auto& [repo, reason] : summary.failed) {
        std::cout << "failed\t" << repo << "\t" << reason << "\n";
    }
    std::cout << "peak workdir bytes " << summary.peak_workdir_bytes << "\n";
    return kExitOk;
}

int cmd_stats(const Options& o)
{
    auto db = open_existing(o);
    std::vector<std::pair<CollectiveName, std::int64_t>> rows;
    for (const auto& name : o.config.collective_set.names()) {
        rows.emplace_back(name, db.total_occurrences(name));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::ostringstream csv;
    csv << "collective,occurrences\n";
    for (const auto& [name, count] : rows) {
        csv << name << "," << count << "\n";
    }
    open_report(o, "stats-all.csv") << csv.str();
    std::cout << csv.str();
    return kExitOk;
}

int cmd_pairs(const Options& o)
{
    auto pairs = selected_pairs(o);
    auto eps = o.eps.empty() ? o.config.epsilons : o.eps;
    auto db = open_existing(o);
    auto reports = patterns::sweep_epsilon(pairs, eps, db);
    const auto suffix = report_suffix(o, pairs);

    std::ostringstream csv;
    csv << "pair,epsilon,count\n";
    for (const auto& r : reports) {
        for (const auto& row : r.rows) {
            csv << format_pair(r.pair) << "," << row.epsilon << "," << row.count << "\n";
        }
    }
    open_report(o, "pairs-" + suffix + ".csv") << csv.str();
    std::cout << csv.str();

    auto dat = open_report(o, "pairs-" + suffix + ".dat");
    dat << "# epsilon";
    for (const auto& r : reports) {
        dat << " " << format_pair(r.pair);
    }
    dat << "\n";
    if (!reports.empty()) {
        for (std::size_t i = 0; i < reports.front().rows.size(); ++i) {
            dat << reports.front().rows[i].epsilon;
            for (const auto& r : reports) {
                dat << " " << r.rows[i].count;
            }
            dat << "\n";
        }
    }

    auto ratio = open_report(o, "ratio-" + suffix + ".csv");
    ratio << "pair,epsilon,pct_a,pct_b\n";
    for (const auto& r : reports) {
        const bool defined = db.total_occurrences(r.pair.first) > 0 &&
                             db.total_occurrences(r.pair.second) > 0;
        for (const auto& row : r.rows) {
            ratio << format_pair(r.pair) << "," << row.epsilon << ",";
            if (!defined) {
                ratio << "n/a,n/a\n";
                continue;
            }
            auto fr = patterns::fusion_ratio(r.pair, row.epsilon, db);
            ratio << patterns::format_tenths(patterns::percent_tenths(fr.paired_a, fr.total_a)) << ","
                  << patterns::format_tenths(patterns::percent_tenths(fr.paired_b, fr.total_b)) << "\n";
        }
    }

    auto groups = open_report(o, "groups-" + suffix + ".csv");
    groups << "pair,epsilon,delta,groups,homogeneous,mixed\n";
    for (const auto& r : reports) {
        for (const auto& row : r.rows) {
            patterns::PatternQuery q{{r.pair.first, r.pair.second}, row.epsilon, o.config.delta};
            std::uint64_t total = 0, homogeneous = 0;
            db.for_each_file({std::nullopt, q.names}, [&](const store::FileSites& f) {
                for (const auto& g : patterns::find_repeated_groups(f.sites, q)) {
                    ++total;
                    homogeneous += g.classification == patterns::Classification::Homogeneous;
                }
            });
            groups << format_pair(r.pair) << "," << row.epsilon << "," << o.config.delta << ","
                   << total << "," << homogeneous << "," << total - homogeneous << "\n";
        }
    }
    return kExitOk;
}

int cmd_homogeneity(const Options& o)
{
    auto pairs = selected_pairs(o);
    auto db = open_existing(o);
    const auto suffix = report_suffix(o, pairs);

    std::ostringstream csv;
    std::ostringstream dat;
    csv << "pair,homogeneous_pct,mixed_pct\n";
    dat << "# pair homogeneous_pct mixed_pct\n";
    for (const auto& pair : pairs) {
        auto r = patterns::homogeneity_distribution(pair, db);
        std::string h = "empty", m = "empty";
        if (!r.empty()) {
            h = patterns::format_tenths(r.homogeneous_tenths());
            m = patterns::format_tenths(r.mixed_tenths());
        }
        csv << format_pair(pair) << "," << h << "," << m << "\n";
        dat << format_pair(pair) << " " << h << " " << m << "\n";
    }
    open_report(o, "homogeneity-" + suffix + ".csv") << csv.str();
    open_report(o, "homogeneity-" + suffix + ".dat") << dat.str();
    std::cout << csv.str();
    return kExitOk;
}

int cmd_export(const Options& o)
{
    auto db = open_existing(o);
    std::error_code ec;
    fs::create_directories(o.out_dir, ec);
    db.export_csv(store::Table::Metadata, o.out_dir / "export-metadata.csv");
    db.export_csv(store::Table::Collectives, o.out_dir / "export-collectives.csv");
    std::cout << "wrote " << (o.out_dir / "export-metadata.csv").string() << " and "
              << (o.out_dir / "export-collectives.csv").string() << "\n";
    return kExitOk;
}

} // namespace

int run(int argc, const char* const* argv)
{
    Options o;
    auto& cfg = o.config;
    std::uint64_t budget = cfg.byte_budget;
    std::string workdir = cfg.workdir.string();
    std::string db_path = cfg.db_path.string();
    std::string manifest = o.manifest.string();
    std::string out_dir = o.out_dir.string();

    CLI::App app{"Mine MPI collective call sites from open-source repositories and report "
                 "complex-collective patterns.",
                 "mpi-recon"};
    app.set_config("--config", "", "Flat key = value config file; every key is a flag name");
    app.require_subcommand(1, 1);
    app.fallthrough();

    app.add_option("--db", db_path, "Corpus database file")->capture_default_str();
    app.add_option("--manifest", manifest, "Manifest file (JSON Lines)")->capture_default_str();
    app.add_option("--workdir", workdir, "Scratch directory for fetched archives")->capture_default_str();
    app.add_option("--budget-bytes", budget, "On-disk byte budget per partition")->capture_default_str();
    app.add_option("--keywords", cfg.search.keywords, "Collective keywords to search for")
        ->delimiter(',')->capture_default_str();
    app.add_option("--languages", cfg.search.languages, "Language filters: C, C++, Fortran")
        ->delimiter(',')->capture_default_str();
    app.add_option("--max-results", cfg.search.max_results, "Result cap per keyword/language query")
        ->capture_default_str();
    app.add_option("--per-page", cfg.search.per_page, "Search page size")->capture_default_str();
    app.add_option("--query-template", cfg.search.query_template,
                   "Search query; {keyword} and {language} are substituted")->capture_default_str();
    app.add_option("--api-url", o.api_url, "Code-hosting API base URL")->capture_default_str();
    app.add_option("--retries", o.retries, "Retry budget for rate-limited requests")->capture_default_str();
    app.add_option("--backoff-ms", o.backoff_ms, "Initial retry backoff in milliseconds")
        ->capture_default_str();
    app.add_option("--collectives", o.collectives, "Collective names recognised by the scanner")
        ->delimiter(',')->capture_default_str();
    app.add_option("--pairs", o.pairs, "Pairs as A:B (default: the six sampled pairs)")->delimiter(',');
    app.add_option("--eps", o.eps, "Epsilon line spans (default 0,5,10,20,30,50,100)")->delimiter(',');
    app.add_option("--delta", cfg.delta, "Minimum group size for repeated-group counts")
        ->capture_default_str();
    app.add_option("--out-dir", out_dir, "Report directory")->capture_default_str();
    app.add_option("--emit-scan", o.emit_scan, "Write per-file and per-call-site scan records here");
    app.add_option("--threads", cfg.threads, "Scanner threads")->capture_default_str();

    auto* search = app.add_subcommand("search", "Query the hosting API and write a manifest");
    auto* run_cmd = app.add_subcommand("run", "Fetch, scan and ingest every manifest entry");
    auto* stats = app.add_subcommand("stats", "Occurrences per collective");
    auto* pairs = app.add_subcommand("pairs", "Pair co-occurrence counts over an epsilon sweep");
    auto* homogeneity = app.add_subcommand("homogeneity", "Homogeneous vs mixed adjacent pairs");
    auto* export_cmd = app.add_subcommand("export", "Export database tables as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        cfg.byte_budget = budget;
        cfg.workdir = workdir;
        cfg.db_path = db_path;
        o.manifest = manifest;
        o.out_dir = out_dir;
        cfg.collective_set = CollectiveSet(o.collectives);
        if (!o.eps.empty()) {
            auto sorted = o.eps;
            std::sort(sorted.begin(), sorted.end());
            sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
            cfg.epsilons = sorted;
            o.eps = sorted;
        }
        cfg.validate();
        if (o.retries < 0 || o.backoff_ms < 0) {
            throw DomainError("retries and backoff must be non-negative");
        }
        if (cfg.threads == 0) {
            throw DomainError("threads must be at least 1");
        }
    } catch (const Error& e) {
        std::cerr << "mpi-recon: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (search->parsed()) return cmd_search(o);
        if (run_cmd->parsed()) return cmd_run(o);
        if (stats->parsed()) return cmd_stats(o);
        if (pairs->parsed()) return cmd_pairs(o);
        if (homogeneity->parsed()) return cmd_homogeneity(o);
        if (export_cmd->parsed()) return cmd_export(o);
    } catch (const UsageError& e) {
        std::cerr << "mpi-recon: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "mpi-recon: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace mpirecon::cli

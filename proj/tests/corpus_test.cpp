#include <gtest/gtest.h>

#include <cstdlib>
#include <deque>

#include <json.hpp>

#include "mpirecon/corpus.hpp"
#include "mpirecon/error.hpp"
#include "test_support.hpp"

using namespace mpirecon;
using namespace mpirecon::corpus;
using testing_support::TempDir;
using nlohmann::json;

namespace {

struct FakeTransport : HttpTransport {
    std::deque<HttpResponse> replies;
    std::vector<std::string> urls;
    std::vector<HttpHeaders> sent;

    HttpResponse get(const std::string& url, const HttpHeaders& headers) override
    {
        urls.push_back(url);
        sent.push_back(headers);
        if (replies.empty()) {
            return {200, {}, R"({"total_count":0,"items":[]})"};
        }
        auto r = replies.front();
        replies.pop_front();
        return r;
    }
};

json repo_item(int id, const std::string& owner, const std::string& name)
{
    return {{"id", id},
            {"name", name},
            {"owner", {{"login", owner}}},
            {"clone_url", "https://example.org/" + owner + "/" + name + ".git"},
            {"default_branch", "main"}};
}

HttpResponse page(std::int64_t total, const std::vector<json>& items)
{
    json body = {{"total_count", total}, {"items", items}};
    return {200, {}, body.dump()};
}

SearchSpec one_query(std::int64_t per_page = 2)
{
    SearchSpec s;
    s.keywords = {"Allreduce"};
    s.languages = {"C"};
    s.per_page = per_page;
    return s;
}

struct SleepLog {
    std::vector<std::chrono::milliseconds> delays;
    Sleeper sleeper()
    {
        return [this](std::chrono::milliseconds d) { delays.push_back(d); };
    }
};

} // namespace

TEST(Search, PaginatesAndDeduplicates)
{
    FakeTransport t;
    t.replies.push_back(page(3, {repo_item(2, "zed", "b"), repo_item(1, "amy", "a")}));
    t.replies.push_back(page(3, {repo_item(1, "amy", "a")}));
    t.replies.push_back(page(2, {repo_item(3, "bob", "c"), repo_item(2, "zed", "b")}));
    SleepLog sl;
    HostingApi api("http://api.test", "tok", t, {}, sl.sleeper());
    api.today = [] { return std::string("2024-02-29"); };

    auto spec = one_query();
    spec.keywords = {"Allreduce", "Bcast"};
    auto entries = search_repositories(spec, api);
    ASSERT_EQ(entries.size(), 3u);
    EXPECT_EQ(entries[0].owner, "amy");
    EXPECT_EQ(entries[1].owner, "bob");
    EXPECT_EQ(entries[2].owner, "zed");
    EXPECT_EQ(entries[2].matched_keywords, (std::set<CollectiveName>{"Allreduce", "Bcast"}));
    EXPECT_EQ(entries[0].matched_keywords, (std::set<CollectiveName>{"Allreduce"}));
    EXPECT_EQ(entries[0].retrieval_date, "2024-02-29");
    EXPECT_EQ(entries[0].default_revision, "main");
    EXPECT_EQ(t.urls.size(), 3u);
    EXPECT_NE(t.urls[0].find("page=1"), std::string::npos);
    EXPECT_NE(t.urls[1].find("page=2"), std::string::npos);
    EXPECT_NE(t.urls[0].find("/search/repositories?q="), std::string::npos);
    EXPECT_TRUE(sl.delays.empty());

    auto auth = t.sent[0].find("Authorization");
    ASSERT_NE(auth, t.sent[0].end());
    EXPECT_EQ(auth->second, "Bearer tok");
}

TEST(Search, EmptyResults)
{
    FakeTransport t;
    HostingApi api("http://api.test", "tok", t, {}, [](auto) {});
    EXPECT_TRUE(search_repositories(one_query(), api).empty());
}

TEST(Search, MaxResultsZeroIssuesNoRequests)
{
    FakeTransport t;
    HostingApi api("http://api.test", "tok", t, {}, [](auto) {});
    auto spec = one_query();
    spec.max_results = 0;
    EXPECT_TRUE(search_repositories(spec, api).empty());
    EXPECT_TRUE(t.urls.empty());
}

TEST(Search, MaxResultsCapsPerQuery)
{
    FakeTransport t;
    t.replies.push_back(page(10, {repo_item(1, "a", "a"), repo_item(2, "b", "b")}));
    HostingApi api("http://api.test", "tok", t, {}, [](auto) {});
    auto spec = one_query();
    spec.max_results = 1;
    EXPECT_EQ(search_repositories(spec, api).size(), 1u);
    EXPECT_EQ(t.urls.size(), 1u);
}

TEST(Search, UnknownKeywordRejected)
{
    FakeTransport t;
    HostingApi api("http://api.test", "tok", t, {}, [](auto) {});
    auto spec = one_query();
    spec.keywords = {"Send"};
    EXPECT_THROW(search_repositories(spec, api), DomainError);
    spec = one_query();
    spec.languages = {"Rust"};
    EXPECT_THROW(search_repositories(spec, api), DomainError);
}

TEST(Search, BadCredentials)
{
    FakeTransport t;
    t.replies.push_back({401, {}, R"({"message":"Bad credentials"})"});
    HostingApi api("http://api.test", "bad", t, {}, [](auto) {});
    EXPECT_THROW(search_repositories(one_query(), api), CredentialError);
}

TEST(Search, MalformedPageNamesQueryAndPage)
{
    FakeTransport t;
    t.replies.push_back(page(4, {repo_item(1, "a", "a"), repo_item(2, "b", "b")}));
    t.replies.push_back({200, {}, R"({"items": 5})"});
    HostingApi api("http://api.test", "tok", t, {}, [](auto) {});
    try {
        search_repositories(one_query(), api);
        FAIL() << "expected ProtocolError";
    } catch (const ProtocolError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("MPI_Allreduce language:C"), std::string::npos) << msg;
        EXPECT_NE(msg.find("page 2"), std::string::npos) << msg;
    }
}

TEST(Search, NotJsonIsProtocolError)
{
    FakeTransport t;
    t.replies.push_back({200, {}, "<html>"});
    HostingApi api("http://api.test", "tok", t, {}, [](auto) {});
    EXPECT_THROW(search_repositories(one_query(), api), ProtocolError);
}

TEST(RateLimit, RetriesWithExponentialBackoff)
{
    FakeTransport t;
    t.replies.push_back({429, {}, ""});
    t.replies.push_back({403, {{"x-ratelimit-remaining", "0"}}, ""});
    t.replies.push_back({403, {}, R"({"message":"API rate limit exceeded"})"});
    t.replies.push_back(page(1, {repo_item(1, "a", "a")}));
    SleepLog sl;
    HostingApi api("http://api.test", "tok", t, {}, sl.sleeper());
    auto entries = search_repositories(one_query(), api);
    EXPECT_EQ(entries.size(), 1u);
    EXPECT_EQ(api.rate_limit_rejections(), 3);
    using ms = std::chrono::milliseconds;
    EXPECT_EQ(sl.delays, (std::vector<ms>{ms(1000), ms(2000), ms(4000)}));
}

TEST(RateLimit, RetryAfterHonored)
{
    FakeTransport t;
    t.replies.push_back({429, {{"retry-after", "7"}}, ""});
    t.replies.push_back(page(0, {}));
    SleepLog sl;
    HostingApi api("http://api.test", "tok", t, {}, sl.sleeper());
    search_repositories(one_query(), api);
    ASSERT_EQ(sl.delays.size(), 1u);
    EXPECT_EQ(sl.delays[0], std::chrono::seconds(7));
}

TEST(RateLimit, ExhaustionRaises)
{
    FakeTransport t;
    for (int i = 0; i < 10; ++i) {
        t.replies.push_back({429, {}, ""});
    }
    SleepLog sl;
    RetryPolicy policy;
    policy.max_retries = 3;
    HostingApi api("http://api.test", "tok", t, policy, sl.sleeper());
    EXPECT_THROW(search_repositories(one_query(), api), RateLimitError);
    EXPECT_EQ(sl.delays.size(), 3u);
    EXPECT_EQ(api.rate_limit_rejections(), 4);
}

TEST(RateLimit, PlainForbiddenIsNotRetried)
{
    FakeTransport t;
    t.replies.push_back({403, {}, R"({"message":"Resource not accessible"})"});
    SleepLog sl;
    HostingApi api("http://api.test", "tok", t, {}, sl.sleeper());
    EXPECT_THROW(search_repositories(one_query(), api), ProtocolError);
    EXPECT_TRUE(sl.delays.empty());
}

TEST(Token, ResolutionOrder)
{
    ::unsetenv(kTokenEnv);
    ::unsetenv(kTokenFallbackEnv);
    try {
        resolve_token();
        FAIL() << "expected CredentialError";
    } catch (const CredentialError& e) {
        EXPECT_NE(std::string(e.what()).find("MPIRECON_TOKEN"), std::string::npos);
    }
    ::setenv(kTokenFallbackEnv, "fallback", 1);
    EXPECT_EQ(resolve_token(), "fallback");
    ::setenv(kTokenEnv, "primary", 1);
    EXPECT_EQ(resolve_token(), "primary");
    ::unsetenv(kTokenEnv);
    ::unsetenv(kTokenFallbackEnv);
}

TEST(Manifest, RoundTrip)
{
    TempDir dir;
    ManifestEntry a{"1", "ünï", "cödé", "https://example.org/x.git", "main", {"Bcast", "Reduce"}, "2024-01-01"};
    ManifestEntry b{"2", "o", "n \"quoted\"", "file:///tmp/n.tar.gz", "v1.0", {}, "2024-01-02"};
    write_manifest({a, b}, dir / "m.jsonl");
    auto back = read_manifest(dir / "m.jsonl");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], a);
    EXPECT_EQ(back[1], b);
    EXPECT_EQ(parse_manifest_line(manifest_line(a)), a);

    write_manifest({}, dir / "empty.jsonl");
    EXPECT_TRUE(read_manifest(dir / "empty.jsonl").empty());
}

TEST(Manifest, BadLineRejected)
{
    EXPECT_THROW(parse_manifest_line("{\"repo_id\": 3"), std::exception);
}

TEST(Archive, ExtractsNestedFiles)
{
    TempDir dir;
    auto tgz = testing_support::make_tar_gz({{"top/a.c", "int a;\n"}, {"top/sub/b.f90", "end\n"}});
    auto bytes = extract_tar_gz(tgz, dir.path());
    EXPECT_EQ(bytes, 11u);
    EXPECT_EQ(testing_support::read_file(dir / "top/a.c"), "int a;\n");
    EXPECT_EQ(testing_support::read_file(dir / "top/sub/b.f90"), "end\n");
    EXPECT_EQ(directory_bytes(dir.path()), 11u);
}

TEST(Archive, RejectsEscapingPaths)
{
    TempDir dir;
    auto tgz = testing_support::make_tar_gz({{"../evil.c", "x"}});
    EXPECT_THROW(extract_tar_gz(tgz, dir / "inner"), std::exception);
    EXPECT_FALSE(std::filesystem::exists(dir / "evil.c"));
}

TEST(Archive, RejectsGarbage)
{
    TempDir dir;
    EXPECT_THROW(extract_tar_gz("not an archive", dir.path()), std::exception);
}

namespace {

struct MapSource : ArchiveSource {
    std::map<std::string, std::string> archives;
    std::string fetch(const ManifestEntry& e) override
    {
        auto it = archives.find(e.repo_id);
        if (it == archives.end()) {
            throw IoError("HTTP 404 for " + e.owner + "/" + e.name);
        }
        return it->second;
    }
};

ManifestEntry entry(const std::string& id)
{
    return {id, "own", "repo" + id, "https://example.org/" + id + ".git", "main", {}, "2024-01-01"};
}

} // namespace

TEST(Fetch, TwoArchivesIntoSeparateDirs)
{
    TempDir dir;
    MapSource src;
    src.archives["1"] = testing_support::make_tar_gz({{"own-repo1-abc/x.c", "MPI_Bcast();\n"}});
    src.archives["2"] = testing_support::make_tar_gz({{"y.c", "a\n"}, {"z.c", "b\n"}});
    Partition p{{entry("1"), entry("2")}, 1 << 20, dir / "work"};
    std::vector<std::uint64_t> seen;
    auto out = fetch_partition(p, src, [&](const FetchedRepo&, std::uint64_t used) { seen.push_back(used); });
    ASSERT_EQ(out.fetched.size(), 2u);
    EXPECT_TRUE(out.failed.empty());
    EXPECT_TRUE(out.skipped.empty());
    EXPECT_EQ(out.fetched[0].root.filename(), "own-repo1-abc");
    EXPECT_TRUE(std::filesystem::exists(out.fetched[0].root / "x.c"));
    EXPECT_TRUE(std::filesystem::exists(out.fetched[1].root / "z.c"));
    EXPECT_NE(out.fetched[0].root.parent_path(), out.fetched[1].root);
    EXPECT_EQ(seen, (std::vector<std::uint64_t>{13, 17}));

    release_partition(p);
    EXPECT_TRUE(std::filesystem::exists(p.workdir));
    EXPECT_TRUE(std::filesystem::is_empty(p.workdir));
    release_partition(p);
}

TEST(Fetch, MissingArchiveIsFailureNotAbort)
{
    TempDir dir;
    MapSource src;
    src.archives["2"] = testing_support::make_tar_gz({{"y.c", "a\n"}});
    Partition p{{entry("1"), entry("2")}, 1 << 20, dir / "work"};
    auto out = fetch_partition(p, src);
    ASSERT_EQ(out.failed.size(), 1u);
    EXPECT_EQ(out.failed[0].entry.repo_id, "1");
    EXPECT_NE(out.failed[0].reason.find("404"), std::string::npos);
    EXPECT_EQ(out.fetched.size(), 1u);
}

TEST(Fetch, BudgetStopsBeforeNextEntry)
{
    TempDir dir;
    MapSource src;
    for (auto id : {"1", "2", "3"}) {
        src.archives[id] = testing_support::make_tar_gz({{"f.c", std::string(100, 'x')}});
    }
    Partition p{{entry("1"), entry("2"), entry("3")}, 150, dir / "work"};
    auto out = fetch_partition(p, src);
    EXPECT_EQ(out.fetched.size(), 2u);
    ASSERT_EQ(out.skipped.size(), 1u);
    EXPECT_EQ(out.skipped[0].repo_id, "3");
    EXPECT_LE(directory_bytes(p.workdir), p.byte_budget + 100);
}

TEST(Fetch, ZeroBudgetRejected)
{
    TempDir dir;
    MapSource src;
    Partition p{{entry("1")}, 0, dir / "work"};
    EXPECT_THROW(fetch_partition(p, src), BudgetError);
}

TEST(Fetch, FileUrlSource)
{
    TempDir dir;
    testing_support::write_file(dir / "a.tar.gz", testing_support::make_tar_gz({{"m.c", "x\n"}}));
    FakeTransport t;
    DefaultArchiveSource src(t, "http://api.test");
    auto e = entry("1");
    e.clone_url = "file://" + (dir / "a.tar.gz").string();
    EXPECT_EQ(src.fetch(e), testing_support::read_file(dir / "a.tar.gz"));
    EXPECT_TRUE(t.urls.empty());

    e.clone_url = "https://example.org/own/repo1.git";
    t.replies.push_back({404, {}, "missing"});
    EXPECT_THROW(src.fetch(e), IoError);
    ASSERT_EQ(t.urls.size(), 1u);
    EXPECT_EQ(t.urls[0], "http://api.test/repos/own/repo1/tarball/main");
}

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <algorithm>
#include <cctype>

#include "mpirecon/corpus.hpp"
#include "mpirecon/error.hpp"

namespace mpirecon::corpus {

namespace {

class HttplibTransport : public HttpTransport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

    HttpResponse get(const std::string& url, const HttpHeaders& headers) override
    {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            throw IoError("not an absolute URL: " + url);
        }
        auto path_start = url.find('/', scheme_end + 3);
        std::string origin = url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(origin);
        client.set_follow_location(true);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);

        httplib::Headers h(headers.begin(), headers.end());
        auto res = client.Get(path, h);
        if (!res) {
            throw IoError("GET " + url + " failed: " + httplib::to_string(res.error()));
        }
        HttpResponse out;
        out.status = res->status;
        out.body = std::move(res->body);
        for (const auto& [k, v] : res->headers) {
            std::string key = k;
            std::transform(key.begin(), key.end(), key.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            out.headers.emplace(std::move(key), v);
        }
        return out;
    }

private:
    std::chrono::seconds timeout_;
};

} // namespace

std::unique_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout)
{
    return std::make_unique<HttplibTransport>(timeout);
}

} // namespace mpirecon::corpus

#include "iotmap/pdns_client.hpp"

#include <thread>

#include "httplib.h"
#include "iotmap/error.hpp"

namespace iotmap {

std::vector<PassiveDnsRecord> fetch_passive_dns(const PdnsEndpoint& endpoint, const std::string& rrname_glob,
                                                const StudyWindow& window, IngestStats& stats, ReadOptions opts) {
    if (endpoint.page_size == 0) throw ValidationError("page size must be positive");
    // split "scheme://host:port/prefix" into the client origin and the path prefix
    const auto scheme_end = endpoint.base_url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("endpoint URL needs a scheme: " + endpoint.base_url);
    const auto path_start = endpoint.base_url.find('/', scheme_end + 3);
    const std::string origin = endpoint.base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : endpoint.base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(origin);
    client.set_connection_timeout(endpoint.timeout);
    client.set_read_timeout(endpoint.timeout);
    if (!endpoint.token.empty()) client.set_bearer_token_auth(endpoint.token);

    std::vector<PassiveDnsRecord> out;
    std::optional<std::chrono::steady_clock::time_point> last;
    for (std::size_t offset = 0;; offset += endpoint.page_size) {
        if (last) std::this_thread::sleep_until(*last + endpoint.min_interval);
        last = std::chrono::steady_clock::now();
        const httplib::Params params{{"rrname", rrname_glob},
                                     {"time_last_after", std::to_string(window.start)},
                                     {"time_first_before", std::to_string(window.end - 1)},
                                     {"offset", std::to_string(offset)},
                                     {"limit", std::to_string(endpoint.page_size)}};
        auto res = client.Get(prefix + "/lookup", params, httplib::Headers{});
        if (!res) throw IoError("passive DNS request failed: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw IoError("passive DNS request returned HTTP " + std::to_string(res->status));
        const std::size_t before = stats.records;
        auto page = parse_passive_dns_lines(res->body, endpoint.base_url + "@" + std::to_string(offset), stats, opts);
        out.insert(out.end(), std::make_move_iterator(page.begin()), std::make_move_iterator(page.end()));
        if (stats.records - before < endpoint.page_size) break;
    }
    return out;
}

}  // namespace iotmap

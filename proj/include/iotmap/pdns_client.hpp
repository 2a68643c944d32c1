#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "iotmap/discovery.hpp"

namespace iotmap {

/// Paged passive-DNS lookup service. Each page is requested as
/// `GET <base>/lookup?rrname=<glob>&time_last_after=<s>&time_first_before=<e>&offset=<n>&limit=<k>`
/// with a bearer token and answered with passive-DNS export lines.
struct PdnsEndpoint {
    std::string base_url;  // http://host:port[/prefix] or https://...
    std::string token;
    /// Client-side rate limit: minimum spacing between two requests.
    std::chrono::milliseconds min_interval{1000};
    std::size_t page_size = 1000;
    std::chrono::seconds timeout{30};
};

/// Fetches every row for `rrname_glob` (e.g. `*.amazonaws.com`) that overlaps the window.
/// Malformed rows follow the usual counting rules; HTTP errors raise IoError.
std::vector<PassiveDnsRecord> fetch_passive_dns(const PdnsEndpoint& endpoint, const std::string& rrname_glob,
                                                const StudyWindow& window, IngestStats& stats,
                                                ReadOptions opts = {});

}  // namespace iotmap

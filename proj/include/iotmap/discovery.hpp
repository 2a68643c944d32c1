#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iotmap/catalog.hpp"
#include "iotmap/net.hpp"
#include "iotmap/time.hpp"

namespace iotmap {

enum class Source : std::uint8_t { tls_cert = 1, passive_dns = 2, active_dns = 4 };

std::string_view source_name(Source s);  // tls-cert | passive-dns | active-dns
std::optional<Source> parse_source(std::string_view s);

struct CertScanRecord {
    IpAddress ip;
    std::uint16_t port = 443;
    std::vector<std::string> names;  // subject CN + SAN dNSNames, lowercase
    Timestamp not_before = 0;
    Timestamp not_after = 0;
    Timestamp observed_at = 0;
};

struct PassiveDnsRecord {
    std::string rrname;
    std::string rrtype;
    std::string rdata;
    Timestamp first_seen = 0;
    Timestamp last_seen = 0;
};

enum class ResolutionStatus { ok, nxdomain, timeout, servfail };

std::string_view resolution_status_name(ResolutionStatus s);
std::optional<ResolutionStatus> parse_resolution_status(std::string_view s);

struct ResolutionResult {
    std::string fqdn;
    std::string vantage_id;
    std::vector<IpAddress> answers;
    Timestamp resolved_at = 0;
    ResolutionStatus status = ResolutionStatus::timeout;
};

struct Observation {
    std::string provider_id;
    std::string fqdn;
    IpAddress ip;
    Source source = Source::tls_cert;
    Timestamp seen_at = 0;
    /// The name carried a leading `*` label (wildcard certificate).
    bool wildcard_name = false;

    auto operator<=>(const Observation&) const = default;
    bool operator==(const Observation&) const = default;
};

/// Every record that does not become an observation is accounted for here.
struct IngestStats {
    std::size_t records = 0;
    std::size_t malformed = 0;
    std::size_t outside_window = 0;
    std::size_t skipped_rrtype = 0;
    std::size_t unmatched_names = 0;
    std::size_t multi_match_names = 0;
    std::size_t not_ok = 0;  // resolutions without answers
    std::size_t emitted = 0;

    IngestStats& operator+=(const IngestStats& o);
    std::string summary() const;
};

struct ReadOptions {
    /// Abort on the first malformed record instead of counting and skipping it.
    bool strict = false;
};

// Readers for the line-delimited export formats (docs/formats.md).
std::vector<CertScanRecord> read_cert_scan(const std::filesystem::path& path, IngestStats& stats,
                                           ReadOptions opts = {});
std::vector<PassiveDnsRecord> read_passive_dns(const std::filesystem::path& path, IngestStats& stats,
                                               ReadOptions opts = {});
std::vector<ResolutionResult> read_resolutions(const std::filesystem::path& path, IngestStats& stats,
                                               ReadOptions opts = {});
std::vector<PassiveDnsRecord> parse_passive_dns_lines(std::string_view body, const std::string& source,
                                                      IngestStats& stats, ReadOptions opts = {});

std::string cert_scan_line(const CertScanRecord& r);
std::string passive_dns_line(const PassiveDnsRecord& r);
std::string resolution_line(const ResolutionResult& r);

/// One observation per (record, matching name, matching provider) for certificates whose validity
/// interval overlaps the window and that were observed inside it.
std::vector<Observation> ingest_cert_scan(std::span<const CertScanRecord> records, const PatternSet& patterns,
                                          const StudyWindow& window, IngestStats* stats = nullptr);

/// A/AAAA rows whose rrname matches a pattern and whose [first_seen, last_seen] overlaps the window.
std::vector<Observation> ingest_passive_dns(std::span<const PassiveDnsRecord> records, const PatternSet& patterns,
                                            const StudyWindow& window, IngestStats* stats = nullptr);

/// Answers of successful resolutions performed inside the window.
std::vector<Observation> ingest_resolutions(std::span<const ResolutionResult> results, const PatternSet& patterns,
                                            const StudyWindow& window, IngestStats* stats = nullptr);

/// Sorts and removes duplicates, giving the byte-stable order used by `--sorted`.
void canonicalize(std::vector<Observation>& obs);

void write_observations(std::ostream& out, std::span<const Observation> obs);
void write_observations(const std::filesystem::path& path, std::span<const Observation> obs);
std::vector<Observation> read_observations(const std::filesystem::path& path);

/// Distinct normalized FQDNs of the observations, e.g. as input for active resolution.
std::vector<std::string> distinct_fqdns(std::span<const Observation> obs);

}  // namespace iotmap

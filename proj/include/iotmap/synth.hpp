#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iotmap/catalog.hpp"
#include "iotmap/discovery.hpp"
#include "iotmap/disruption.hpp"
#include "iotmap/flow_io.hpp"
#include "iotmap/fusion.hpp"
#include "iotmap/geo.hpp"
#include "iotmap/net.hpp"
#include "iotmap/time.hpp"

namespace iotmap {

// ---- configuration --------------------------------------------------------------------------

struct PortWeight {
    std::uint16_t port = 0;
    Transport transport = Transport::tcp;
    double weight = 0.0;
};

struct ProviderSpec {
    std::string id;  // catalog id; the naming grammar comes from the catalog profile
    std::size_t servers = 0;
    double ipv6_fraction = 0.0;
    /// Region token (providers with a region grammar) or "CC/City" location key -> weight.
    std::vector<std::pair<std::string, double>> regions;
    /// Share of servers announced from a public-cloud ASN instead of the provider's own.
    double cloud_fraction = 0.0;
    std::uint32_t cloud_asn = 0;  // 0 picks a default cloud operator
    double tls_coverage = 1.0;
    double pdns_coverage = 1.0;
    double adns_coverage = 1.0;
    /// The servers answer blind TLS scans without a certificate.
    bool sni_only = false;
    double shared_fraction = 0.0;
    /// Fraction of the servers replaced every day.
    double churn = 0.0;
    /// Fraction of dedicated servers that subscriber lines are routed to.
    double assigned_fraction = 1.0;
    /// Assigned servers hidden from every discovery source.
    std::size_t missed_active = 0;
    double missed_traffic_scale = 0.05;
    /// Emit the provider's prefixes as a ground-truth set.
    bool ground_truth = false;
    std::vector<PortWeight> ports;  // empty: documented protocols, equal weights
    double down_up_ratio = 1.0;
};

struct LineCategorySpec {
    double weight = 1.0;
    /// Independent draws per line; each draw picks at most one provider.
    std::size_t draws = 1;
    std::vector<std::pair<std::string, double>> adoption;
};

struct PopulationSpec {
    std::size_t lines = 0;
    std::vector<LineCategorySpec> categories;
    /// Piecewise-constant hourly multipliers over the local day.
    std::array<double, 24> diurnal{};
    double active_hours = 4.0;  // mean active hours per (line, provider) and day
    double daily_bytes_median = 400'000.0;
    double daily_bytes_sigma = 1.0;
    std::uint32_t packet_size_min = 200;
    std::uint32_t packet_size_max = 1400;
    std::size_t scanners = 0;
    std::size_t scanner_breadth = 0;
    /// Target traffic share per region (eu, us, asia, other); unset leaves server choice uniform.
    std::optional<std::array<double, 4>> traffic_regions;

    PopulationSpec() { diurnal.fill(1.0); }
};

struct OutageSpec {
    std::string provider_id;
    std::string location;  // location key of the affected servers
    std::size_t day = 0;   // index into the window
    int start_hour = 0;    // local hour
    int hours = 1;
    double drop = 0.0;     // below the previous-week minimum
};

enum class SamplingMode { deterministic, random };

struct UniverseConfig {
    std::uint64_t seed = 1;
    StudyWindow window;
    UtcOffset tz;
    std::uint32_t sampling_rate = 1;
    SamplingMode sampling_mode = SamplingMode::deterministic;
    std::vector<ProviderSpec> providers;
    PopulationSpec population;
    std::vector<OutageSpec> outages;
    std::size_t blocklists = 0;
    std::size_t blocklist_cidrs = 0;
    std::size_t blocklist_hits = 0;
    std::size_t routing_unrelated = 0;
    std::size_t routing_planted = 0;

    static UniverseConfig from_json(const std::string& text);
    static UniverseConfig load(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Throws ValidationError for configurations that cannot be generated.
void validate_config(const UniverseConfig& config, const std::vector<ProviderProfile>& profiles);

// ---- ground truth ---------------------------------------------------------------------------

struct TruthServer {
    std::string provider_id;
    IpAddress ip;
    std::vector<std::string> fqdns;
    std::optional<std::string> region_token;
    Location location;
    std::uint32_t asn = 0;
    Cidr prefix;
    Sharing sharing = Sharing::dedicated;
    std::size_t foreign_names = 0;  // non-matching names in reverse DNS
    SourceMask visible = 0;
    bool assigned = false;
    bool missed = false;
    std::size_t first_day = 0;  // active days [first_day, last_day)
    std::size_t last_day = 0;

    bool operator==(const TruthServer&) const = default;
};

/// Unsampled traffic of one line to one server, port and hour.
struct TruthFlowTotal {
    std::uint64_t line_id = 0;
    std::string provider_id;
    IpAddress server_ip;
    std::uint16_t port = 0;
    Transport transport = Transport::tcp;
    Timestamp hour = 0;  // UTC start of the local hour
    std::uint64_t down_bytes = 0;
    std::uint64_t up_bytes = 0;
    std::uint64_t down_packets = 0;
    std::uint64_t up_packets = 0;

    bool operator==(const TruthFlowTotal&) const = default;
};

struct ChurnDay {
    std::string provider_id;
    std::size_t day = 0;
    std::vector<IpAddress> added;
    std::vector<IpAddress> removed;

    bool operator==(const ChurnDay&) const = default;
};

struct OutageEvent {
    std::string provider_id;
    std::string location;
    StudyWindow window;
    double drop = 0.0;
    std::uint64_t baseline_bytes = 0;  // previous-week hourly minimum

    bool operator==(const OutageEvent&) const = default;
};

struct BlocklistHit {
    std::string list_id;
    std::string provider_id;
    IpAddress ip;

    bool operator==(const BlocklistHit&) const = default;
};

struct GroundTruthLog {
    std::uint64_t seed = 0;
    StudyWindow window;
    UtcOffset tz;
    std::uint32_t sampling_rate = 1;
    std::vector<TruthServer> servers;  // sorted by (provider, ip)
    std::vector<TruthFlowTotal> flows;
    std::vector<std::uint64_t> scanners;
    std::vector<OutageEvent> outages;
    std::vector<ChurnDay> churn;
    std::vector<BlocklistHit> blocklist_hits;
    std::vector<std::string> routing_planted;  // event ids

    bool operator==(const GroundTruthLog&) const = default;
    std::size_t days() const { return static_cast<std::size_t>((window.end - window.start) / kDay); }
};

/// Writes `truth.json` plus `truth_flows.tsv` into dir.
void write_truth_log(const std::filesystem::path& dir, const GroundTruthLog& log);
GroundTruthLog read_truth_log(const std::filesystem::path& dir);

// ---- generation -----------------------------------------------------------------------------

struct Universe {
    GroundTruthLog log;
    std::vector<CertScanRecord> certs;
    std::vector<PassiveDnsRecord> pdns;
    std::vector<ResolutionResult> resolutions;
    std::vector<PassiveDnsRecord> reverse;  // reverse-lookup rows for the sharing classifier
    std::vector<LocationHint> hints;
    std::vector<std::pair<Cidr, std::uint32_t>> prefixes;
    std::vector<std::pair<std::uint32_t, std::string>> asn_classes;  // asn, class
    std::vector<GroundTruthSet> ground_truth;
    std::vector<FlowRecord> flows;  // sampled, time ordered
    std::map<std::size_t, std::vector<CertScanRecord>> daily_certs;  // churn snapshots by day index
    std::map<std::string, std::vector<Cidr>> blocklists;
    std::vector<RoutingEvent> routing_events;
};

Universe generate(const UniverseConfig& config, const std::vector<ProviderProfile>& profiles);

/// File names inside a generated directory.
struct UniverseFiles {
    static constexpr const char* certs = "certs.jsonl";
    static constexpr const char* pdns = "pdns.jsonl";
    static constexpr const char* resolutions = "resolutions.jsonl";
    static constexpr const char* reverse = "reverse.jsonl";
    static constexpr const char* hints = "hints.tsv";
    static constexpr const char* prefixes = "prefixes.tsv";
    static constexpr const char* asn_classes = "asn_classes.tsv";
    static constexpr const char* ground_truth = "ground_truth.tsv";
    static constexpr const char* flows = "flows.bin";
    static constexpr const char* routing = "routing_events.jsonl";
    static constexpr const char* snapshots = "snapshots";
    static constexpr const char* blocklists = "blocklists";
};

void write_universe(const std::filesystem::path& dir, const Universe& u);

/// Packets sampled out of `packets` when the trace has already seen `counter` packets.
inline std::uint64_t deterministic_samples(std::uint64_t counter, std::uint64_t packets, std::uint64_t n) {
    return (counter + packets) / n - counter / n;
}

// ---- oracle ---------------------------------------------------------------------------------

struct OracleParams {
    std::size_t scanner_threshold = 100;
    std::vector<std::size_t> sweep_thresholds;
    /// Restrict counts to servers some source saw, as the pipeline does.
    bool discovered_only = true;
};

struct OracleProvider {
    std::size_t universe = 0;  // dedicated servers
    std::size_t contacted = 0;
    std::size_t lines_all = 0;
    std::size_t lines_tls = 0;
    std::uint64_t down_bytes = 0;
    std::uint64_t up_bytes = 0;
    std::uint64_t sampled_packets_expected = 0;  // packets / rate
    std::map<std::pair<std::uint16_t, Transport>, std::uint64_t> port_bytes;
};

struct OracleSweepPoint {
    std::size_t threshold = 0;
    std::size_t visible = 0;
    std::size_t scanner_lines = 0;
    std::set<std::uint64_t> scanner_line_ids;
};

struct OracleMetrics {
    /// (provider, ip) -> union of the source views.
    std::map<std::pair<std::string, IpAddress>, SourceMask> candidates;
    std::map<std::string, OracleProvider> providers;
    std::size_t universe = 0;
    std::vector<OracleSweepPoint> sweep;
    /// (provider, UTC hour) -> distinct active lines.
    std::map<std::pair<std::string, Timestamp>, std::size_t> active_lines;
    std::array<std::uint64_t, 4> region_bytes{};
    std::array<std::size_t, 6> line_categories{};
    /// (line, local day) -> bytes, both directions.
    std::map<std::pair<std::uint64_t, std::int64_t>, std::uint64_t> line_day_bytes;
    /// (provider, day index) -> stability diff sizes (added, removed) of TLS-visible servers.
    std::map<std::pair<std::string, std::size_t>, std::pair<std::size_t, std::size_t>> churn;
};

/// Recomputes every reference value by iterating the unsampled truth.
OracleMetrics oracle_metrics(const GroundTruthLog& log, const OracleParams& params = {});

std::string oracle_json(const OracleMetrics& m);

// ---- scenarios ------------------------------------------------------------------------------

namespace scenario {
/// 16 providers, 10k servers, mixed source coverage.
UniverseConfig discovery(std::uint64_t seed = 11);
/// One SNI-only provider next to a certificate-visible one.
UniverseConfig sni_only(std::uint64_t seed = 12);
/// One day, 100k lines, 5 scanners of breadth 200.
UniverseConfig scanner_day(std::uint64_t seed = 13);
/// About 10^6 flows at 1-in-1000 deterministic sampling.
UniverseConfig sampling(std::uint64_t seed = 14);
/// 62 % EU / 35 % US / 3 % other traffic.
UniverseConfig continent(std::uint64_t seed = 15);
/// 15 days; a 14.5 % drop on the US-east servers of one provider on the last day, EU at 3x volume.
UniverseConfig outage(std::uint64_t seed = 16);
/// 10 % daily churn over 7 days.
UniverseConfig churn(std::uint64_t seed = 17);
/// 52 active ground-truth addresses, 4 of them hidden from every source.
UniverseConfig ground_truth(std::uint64_t seed = 18);
/// 28 % of servers assigned to subscriber lines.
UniverseConfig visibility(std::uint64_t seed = 19);
}  // namespace scenario

}  // namespace iotmap

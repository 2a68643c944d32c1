#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "iotmap/flow_io.hpp"
#include "iotmap/footprint.hpp"
#include "iotmap/geo.hpp"

namespace iotmap {

inline constexpr std::size_t kDefaultScannerThreshold = 100;
inline constexpr std::size_t kSuppressionFloor = 15;

// ---- estimation -----------------------------------------------------------------------------

inline std::uint64_t estimated_bytes(const FlowRecord& f) {
    return f.sampled_bytes * static_cast<std::uint64_t>(f.sampling_rate);
}

std::uint64_t estimate_bytes(std::span<const FlowRecord> flows);

template <typename KeyFn>
auto estimate_bytes_by(std::span<const FlowRecord> flows, KeyFn key) {
    std::map<std::decay_t<decltype(key(flows.front()))>, std::uint64_t> out;
    for (const auto& f : flows) out[key(f)] += estimated_bytes(f);
    return out;
}

// ---- attribution ----------------------------------------------------------------------------

struct FlowOptions {
    UtcOffset tz;
    /// Flows outside the window are skipped when set.
    std::optional<StudyWindow> window;
    bool parallel = true;
};

/// Local day index of a timestamp.
inline std::int64_t local_day(Timestamp t, UtcOffset tz) { return floor_div(tz.local(t), kDay); }
inline std::int64_t local_hour(Timestamp t, UtcOffset tz) { return floor_div(tz.local(t), kHour); }
/// UTC start of a local hour or day bucket.
inline Timestamp hour_start(std::int64_t hour, UtcOffset tz) { return hour * kHour - tz.seconds; }
inline Timestamp day_start(std::int64_t day, UtcOffset tz) { return day * kDay - tz.seconds; }

/// Maps flow server addresses to backend servers.
///
/// Traffic goes to dedicated servers only and, for providers with dedicated ports, only on those
/// ports. A flow whose address belongs to several providers is attributed to the first one in
/// provider order. With `include_shared`, shared servers join the contact universe used for scanner
/// detection and visibility, never the traffic metrics.
class ServerIndex {
public:
    static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();

    ServerIndex(std::span<const BackendServer> servers, const std::vector<ProviderProfile>& profiles,
                bool include_shared = false);

    const std::vector<std::string>& providers() const noexcept { return providers_; }
    const std::vector<BackendServer>& servers() const noexcept { return servers_; }
    const std::vector<IpAddress>& ips() const noexcept { return ips_; }
    std::uint32_t provider_of(std::uint32_t server) const { return server_provider_[server]; }
    std::uint32_t ip_of(std::uint32_t server) const { return server_ip_[server]; }
    TrafficRegion region_of(std::uint32_t server) const { return server_region_[server]; }
    /// Distinct location keys ("CC" or "CC/City"), sorted.
    const std::vector<std::string>& locations() const noexcept { return locations_; }
    std::uint32_t location_of(std::uint32_t server) const { return server_location_[server]; }
    /// Member of the visibility and scanner universe.
    bool in_universe(std::uint32_t server) const { return universe_[server]; }
    bool ip_in_universe(std::uint32_t ip) const { return ip_universe_[ip]; }
    const ProviderProfile* profile(std::uint32_t provider) const { return profiles_[provider]; }
    std::optional<std::uint32_t> provider_index(std::string_view id) const;

    /// Address id of a flow's server, or npos if unknown.
    std::uint32_t find_ip(const IpAddress& ip) const;
    /// Server receiving the flow's traffic, or npos.
    std::uint32_t traffic_server(std::uint32_t ip, std::uint16_t port) const;
    /// Calls fn(server) for every universe server the flow counts as contacting.
    template <typename Fn>
    void for_each_contact(std::uint32_t ip, std::uint16_t port, Fn fn) const {
        for (auto s : by_ip_[ip])
            if (universe_[s] && port_ok(s, port)) fn(s);
    }
    bool contacts(std::uint32_t ip, std::uint16_t port) const;

private:
    bool port_ok(std::uint32_t server, std::uint16_t port) const;

    std::vector<std::string> providers_;
    std::vector<const ProviderProfile*> profiles_;
    std::vector<BackendServer> servers_;
    std::vector<std::uint32_t> server_provider_;
    std::vector<std::uint32_t> server_ip_;
    std::vector<TrafficRegion> server_region_;
    std::vector<std::string> locations_;
    std::vector<std::uint32_t> server_location_;
    std::vector<bool> universe_;
    std::vector<bool> dedicated_;
    std::vector<IpAddress> ips_;
    std::vector<bool> ip_universe_;
    std::vector<std::vector<std::uint32_t>> by_ip_;  // server ids in provider order
    std::unordered_map<IpAddress, std::uint32_t> ip_lookup_;
};

// ---- scanners -------------------------------------------------------------------------------

/// Distinct universe addresses contacted per (local day, line).
struct ContactTable {
    struct LineDay {
        std::int64_t day = 0;
        std::uint64_t line = 0;
        std::uint32_t distinct = 0;
        bool operator==(const LineDay&) const = default;
    };
    std::vector<LineDay> line_days;         // sorted by (day, line)
    std::vector<std::uint32_t> min_breadth;  // per address id: smallest breadth of a contacting line-day
    std::size_t universe = 0;
    std::size_t universe_v4 = 0;

    static constexpr std::uint32_t never = std::numeric_limits<std::uint32_t>::max();
    bool operator==(const ContactTable&) const = default;
};

ContactTable count_contacts(std::span<const FlowRecord> flows, const ServerIndex& index, const FlowOptions& opts);
ContactTable count_contacts_serial(std::span<const FlowRecord> flows, const ServerIndex& index,
                                   const FlowOptions& opts);

struct ScannerVerdict {
    std::uint64_t line_id = 0;
    std::int64_t day = 0;  // local day index
    std::uint32_t distinct_backend_ips = 0;
    bool is_scanner = false;
    std::size_t threshold_used = 0;
};

/// One verdict per line-day; scanner iff distinct_backend_ips > threshold.
std::vector<ScannerVerdict> detect_scanners(const ContactTable& contacts, std::size_t threshold);

struct LineDayKey {
    std::int64_t day = 0;
    std::uint64_t line = 0;
    bool operator==(const LineDayKey&) const = default;
};
struct LineDayHash {
    std::size_t operator()(const LineDayKey& k) const noexcept;
};
using ScannerSet = std::unordered_set<LineDayKey, LineDayHash>;

ScannerSet scanner_set(const ContactTable& contacts, std::size_t threshold);

struct SweepPoint {
    std::size_t threshold = 0;
    std::size_t visible_ips = 0;
    std::size_t visible_ips_v4 = 0;
    double visible_fraction = 0.0;
    double visible_fraction_v4 = 0.0;
    std::size_t scanner_lines = 0;      // distinct lines flagged on at least one day
    std::size_t scanner_line_days = 0;
};

/// Visibility is the union of addresses contacted by non-scanner line-days over the universe size.
std::vector<SweepPoint> threshold_sweep(const ContactTable& contacts, const ServerIndex& index,
                                        std::span<const std::size_t> thresholds);

// ---- aggregate ------------------------------------------------------------------------------

struct DownUp {
    std::uint64_t down = 0;
    std::uint64_t up = 0;
    std::uint64_t total() const { return down + up; }
    DownUp& operator+=(const DownUp& o) {
        down += o.down;
        up += o.up;
        return *this;
    }
    bool operator==(const DownUp&) const = default;
};

struct ProviderHour {
    std::uint32_t provider = 0;
    std::int64_t hour = 0;
    auto operator<=>(const ProviderHour&) const = default;
};

struct PortKey {
    std::uint32_t provider = 0;
    std::uint16_t port = 0;
    Transport transport = Transport::tcp;
    auto operator<=>(const PortKey&) const = default;
};

struct LocationHour {
    std::uint32_t provider = 0;
    std::uint32_t location = 0;
    std::int64_t hour = 0;
    auto operator<=>(const LocationHour&) const = default;
};

struct LineUsageKey {
    std::uint64_t line = 0;
    std::int64_t day = 0;
    std::uint32_t provider = 0;
    std::uint16_t port = 0;
    Transport transport = Transport::tcp;
    auto operator<=>(const LineUsageKey&) const = default;
};

struct KeyHash {
    std::size_t operator()(const ProviderHour& k) const noexcept;
    std::size_t operator()(const PortKey& k) const noexcept;
    std::size_t operator()(const LineUsageKey& k) const noexcept;
    std::size_t operator()(const LocationHour& k) const noexcept;
};

struct ActiveLine {
    std::uint32_t provider = 0;
    std::int64_t hour = 0;
    std::uint64_t line = 0;
    auto operator<=>(const ActiveLine&) const = default;
};

/// Integer-only partial result over a flow partition. merge() is commutative and associative, so
/// any partitioning merged in any order equals the single pass.
struct FlowAggregate {
    std::size_t flows_seen = 0;
    std::size_t flows_outside_window = 0;
    std::size_t flows_scanner = 0;
    std::size_t flows_attributed = 0;

    std::vector<std::uint8_t> contacted;  // per server
    std::vector<ActiveLine> hourly_lines;  // sorted, unique
    std::vector<std::pair<std::uint32_t, std::uint64_t>> active_all;  // (provider, line), sorted, unique
    std::vector<std::pair<std::uint32_t, std::uint64_t>> active_tls;
    std::unordered_map<ProviderHour, DownUp, KeyHash> hourly_bytes;
    std::unordered_map<PortKey, std::uint64_t, KeyHash> port_bytes;
    std::unordered_map<LineUsageKey, DownUp, KeyHash> line_usage;
    std::unordered_map<LocationHour, std::uint64_t, KeyHash> location_bytes;  // both directions
    std::unordered_map<std::uint64_t, std::uint8_t> line_regions;  // bit per TrafficRegion
    std::vector<std::uint64_t> region_bytes;                        // provider * 4 + region
    std::vector<std::uint64_t> sampled_packets;                     // per provider

    void merge(const FlowAggregate& other);
    /// Sorts and deduplicates the set-valued members.
    void finalize();
    bool operator==(const FlowAggregate&) const = default;
};

/// Adds one partition's flows to `agg` (sized for the index). Call finalize() afterwards.
void accumulate(FlowAggregate& agg, std::span<const FlowRecord> flows, const ServerIndex& index,
                const ScannerSet& scanners, const FlowOptions& opts);

FlowAggregate empty_aggregate(const ServerIndex& index);

/// Partitions the flows across OpenMP threads and merges the partials in partition order.
FlowAggregate aggregate_flows(std::span<const FlowRecord> flows, const ServerIndex& index,
                              const ScannerSet& scanners, const FlowOptions& opts);
/// Single-threaded single pass.
FlowAggregate aggregate_flows_serial(std::span<const FlowRecord> flows, const ServerIndex& index,
                                     const ScannerSet& scanners, const FlowOptions& opts);

// ---- metrics --------------------------------------------------------------------------------

struct VisibilityRow {
    std::string provider_id;
    Family family = Family::v4;
    std::size_t servers = 0;
    std::size_t contacted = 0;
    double fraction = 0.0;
};

/// One row per provider and family with at least one universe server.
std::vector<VisibilityRow> visibility_per_provider(const FlowAggregate& agg, const ServerIndex& index);

struct AblationRow {
    std::string provider_id;
    std::size_t lines_all = 0;
    std::size_t lines_tls_only = 0;
    double decrease = 0.0;  // 1 - tls_only / all; 0 when no lines at all
};

/// Active lines per provider with all servers versus only servers seen in certificate scans.
std::vector<AblationRow> source_ablation(const FlowAggregate& agg, const ServerIndex& index);

struct ActivityPoint {
    std::string provider_id;
    Timestamp hour_start = 0;
    std::size_t active_lines = 0;
};

/// Dense hourly series per provider over the hours covering `window`.
std::vector<ActivityPoint> activity_series(const FlowAggregate& agg, const ServerIndex& index,
                                           const StudyWindow& window, UtcOffset tz);

/// Null for points below the floor; applied when reports are written.
std::vector<std::optional<std::size_t>> suppress(std::span<const ActivityPoint> series,
                                                 std::size_t floor = kSuppressionFloor);

struct TrafficPoint {
    Timestamp hour_start = 0;
    std::uint64_t down = 0;
    std::uint64_t up = 0;
    double normalized_down = 0.0;  // down / provider peak
};

struct TrafficSeries {
    std::string provider_id;
    std::vector<TrafficPoint> points;
    std::uint64_t total_down = 0;
    std::uint64_t total_up = 0;
    std::uint64_t peak_down = 0;
    double ratio = 0.0;  // total_down / total_up
    bool ratio_infinite = false;  // total_up == 0 and total_down > 0
};

std::vector<TrafficSeries> traffic_series_and_ratio(const FlowAggregate& agg, const ServerIndex& index,
                                                    const StudyWindow& window, UtcOffset tz);

/// "tcp/8883" style for well-known and documented ports, "udp-high" for other UDP ports above
/// 10000, "tcp/<port>" / "udp/<port>" otherwise.
std::string port_label(std::uint16_t port, Transport transport, const ProviderProfile* profile = nullptr);
bool well_known_port(std::uint16_t port);

struct PortShare {
    std::string provider_id;
    std::string label;
    std::uint64_t bytes = 0;
    double share = 0.0;
};

/// Shares per provider sum to 1; providers without traffic are omitted.
std::vector<PortShare> port_mix(const FlowAggregate& agg, const ServerIndex& index);

struct LineDayProfile {
    std::uint64_t line_id = 0;
    std::int64_t day = 0;
    std::uint32_t distinct_backend_ips = 0;
    std::map<std::string, DownUp> per_provider;
    std::map<std::pair<std::uint16_t, Transport>, std::uint64_t> per_port;

    std::uint64_t total() const;
};

std::vector<LineDayProfile> line_day_profiles(const FlowAggregate& agg, const ContactTable& contacts,
                                              const ServerIndex& index);

/// Empirical distribution over per-line daily byte totals.
class Ecdf {
public:
    Ecdf() = default;
    explicit Ecdf(std::vector<std::uint64_t> values);

    bool empty() const noexcept { return values_.empty(); }
    std::size_t size() const noexcept { return values_.size(); }
    const std::vector<std::uint64_t>& values() const noexcept { return values_; }
    /// Fraction of samples <= x.
    double at(std::uint64_t x) const;
    /// Nearest-rank quantile, q in (0, 1]. Throws ValidationError when empty.
    std::uint64_t quantile(double q) const;
    /// Distinct steps (value, cumulative fraction).
    std::vector<std::pair<std::uint64_t, double>> steps() const;

private:
    std::vector<std::uint64_t> values_;
};

enum class GroupBy { provider, port, all };

/// Keys: provider id, port label, or "all".
std::map<std::string, Ecdf> per_line_distribution(std::span<const LineDayProfile> profiles, GroupBy group_by,
                                                  const std::vector<ProviderProfile>* catalog = nullptr);

enum class LineCategory { eu_only, us_only, eu_us, asia_only, other, mixed };
inline constexpr std::array<LineCategory, 6> kLineCategories = {LineCategory::eu_only, LineCategory::us_only,
                                                                LineCategory::eu_us,   LineCategory::asia_only,
                                                                LineCategory::other,   LineCategory::mixed};
std::string_view line_category_name(LineCategory c);  // EU-only US-only EU+US Asia-only Other Mixed
LineCategory categorize_regions(std::uint8_t region_mask);

inline constexpr std::array<TrafficRegion, 4> kTrafficRegions = {TrafficRegion::eu, TrafficRegion::us,
                                                                 TrafficRegion::asia, TrafficRegion::other};

struct ContinentReport {
    std::array<std::size_t, 6> line_counts{};
    std::array<double, 6> line_shares{};
    std::array<std::uint64_t, 4> traffic_bytes{};
    std::array<double, 4> traffic_shares{};
    std::array<std::size_t, 4> server_counts{};
    std::array<double, 4> server_shares{};
    /// provider -> bytes and shares per region.
    std::map<std::string, std::array<double, 4>> provider_traffic_shares;
};

ContinentReport continent_attribution(const FlowAggregate& agg, const ServerIndex& index);

}  // namespace iotmap

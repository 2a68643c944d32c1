#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iotmap/flows.hpp"
#include "iotmap/footprint.hpp"
#include "iotmap/net.hpp"
#include "iotmap/time.hpp"

namespace iotmap {

// ---- outage ---------------------------------------------------------------------------------

/// Hourly volume of one provider and region, contiguous from `start` (UTC hour boundary).
struct VolumeSeries {
    std::string provider_id;
    std::string region;  // location key, or "total"
    Timestamp start = 0;
    std::vector<double> values;

    Timestamp end() const { return start + static_cast<Timestamp>(values.size()) * kHour; }
};

/// Per provider: one series per server location plus "total", each normalized by the provider's
/// peak total hour over the window.
std::vector<VolumeSeries> regional_series(const FlowAggregate& agg, const ServerIndex& index,
                                          const StudyWindow& window, UtcOffset tz);

struct OutageOptions {
    std::size_t baseline_days = 7;
    std::size_t sustain_hours = 2;
    /// Baseline per hour of day (minimum of the same hour over the baseline days) instead of the
    /// minimum over the whole baseline period.
    bool per_hour = false;
};

struct OutageFinding {
    std::string provider_id;
    std::string region;
    StudyWindow window;  // flagged hours
    double min_baseline = 0.0;
    std::vector<double> observed;
    double max_drop_fraction = 0.0;
};

/// Scans the hours of `scan` day by day. Each day's baseline is the minimum of the preceding
/// `baseline_days` days; runs of at least `sustain_hours` hours strictly below it are findings.
/// Throws ValidationError when the series lacks the history or does not cover the scan window.
std::vector<OutageFinding> outage_scan(const VolumeSeries& series, const StudyWindow& scan,
                                       const OutageOptions& opts = {});

std::string outage_finding_json(const OutageFinding& f);

void write_series(const std::filesystem::path& path, std::span<const VolumeSeries> series);
/// Rows `provider<TAB>region<TAB>hour_start<TAB>value`, hours contiguous per (provider, region).
std::vector<VolumeSeries> read_series(const std::filesystem::path& path);

// ---- blocklists -----------------------------------------------------------------------------

struct BlocklistEntry {
    std::string list_id;
    Cidr cidr;
};

/// Immutable containment index over many lists: one hash map per prefix length and family.
class BlocklistIndex {
public:
    void add(const std::string& list_id, const Cidr& cidr);
    /// Indices into lists() of every list containing ip, ascending.
    std::vector<std::uint32_t> lists_containing(const IpAddress& ip) const;
    const std::vector<std::string>& lists() const noexcept { return lists_; }
    std::size_t entries() const noexcept { return entries_; }

    /// One address or CIDR per line, `#` comments; the list id is the file stem.
    void load_netset(const std::filesystem::path& path);

private:
    struct PerFamily {
        std::vector<std::unordered_map<IpAddress, std::vector<std::uint32_t>>> by_length;
        std::vector<unsigned> lengths;
    };
    PerFamily& family(Family f) { return f == Family::v4 ? v4_ : v6_; }
    const PerFamily& family(Family f) const { return f == Family::v4 ? v4_ : v6_; }
    std::uint32_t intern(const std::string& list_id);

    std::vector<std::string> lists_;
    std::unordered_map<std::string, std::uint32_t> list_ids_;
    PerFamily v4_, v6_;
    std::size_t entries_ = 0;
};

std::vector<BlocklistEntry> load_netset(const std::filesystem::path& path);

struct BlocklistMatch {
    std::string provider_id;
    IpAddress ip;
    std::vector<std::string> lists;
};

struct BlocklistReport {
    std::vector<BlocklistMatch> matches;  // sorted by provider, ip
    std::size_t distinct_ips = 0;
    std::map<std::string, std::size_t> per_provider;
    /// (server, list) hits on excluded lists, not part of `matches`.
    std::size_t excluded_hits = 0;
    std::map<std::string, std::size_t> excluded_per_list;
};

BlocklistReport blocklist_check(std::span<const BackendServer> servers, const BlocklistIndex& index,
                                const std::set<std::string>& excluded = {});

std::string blocklist_match_json(const BlocklistMatch& m);

// ---- routing events -------------------------------------------------------------------------

enum class RoutingEventKind { leak, hijack, as_outage };
std::string_view routing_event_kind_name(RoutingEventKind k);  // leak | hijack | as-outage
std::optional<RoutingEventKind> parse_routing_event_kind(std::string_view s);

struct RoutingEvent {
    std::string id;
    RoutingEventKind kind = RoutingEventKind::leak;
    std::optional<Cidr> prefix;
    std::optional<std::uint32_t> asn;
    StudyWindow window;
};

/// JSON lines: {"id", "kind", "prefix"?, "asn"?, "start", "end"}.
std::vector<RoutingEvent> load_routing_events(const std::filesystem::path& path);

struct RoutingOverlap {
    std::string event_id;
    RoutingEventKind kind = RoutingEventKind::leak;
    bool in_window = false;
    std::vector<std::pair<std::string, IpAddress>> servers;  // (provider, ip), sorted
};

/// A prefix event overlaps servers whose prefix intersects it; an AS event overlaps servers whose
/// origin set contains the ASN. Events outside the study window overlap nothing.
std::vector<RoutingOverlap> routing_event_overlap(std::span<const BackendServer> servers,
                                                  std::span<const RoutingEvent> events, const StudyWindow& study);

std::string routing_overlap_json(const RoutingOverlap& o);

}  // namespace iotmap

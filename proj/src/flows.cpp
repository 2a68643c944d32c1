#include "iotmap/flows.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <omp.h>

#include "iotmap/error.hpp"

namespace iotmap {

namespace {

inline std::size_t mix(std::size_t h, std::uint64_t v) {
    v ^= v >> 33;
    v *= 0xff51afd7ed558ccdULL;
    v ^= v >> 33;
    return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

template <typename T>
void sort_unique(std::vector<T>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

template <typename T>
void merge_sorted(std::vector<T>& into, const std::vector<T>& other) {
    if (other.empty()) return;
    std::vector<T> out;
    out.reserve(into.size() + other.size());
    std::set_union(into.begin(), into.end(), other.begin(), other.end(), std::back_inserter(out));
    into.swap(out);
}

template <typename Map>
void add_map(Map& into, const Map& other) {
    for (const auto& [k, v] : other) into[k] += v;
}

struct Contact {
    std::int64_t day;
    std::uint64_t line;
    std::uint32_t ip;
    auto operator<=>(const Contact&) const = default;
};

std::vector<Contact> collect_contacts(std::span<const FlowRecord> flows, const ServerIndex& index,
                                      const FlowOptions& opts) {
    std::vector<Contact> out;
    for (const auto& f : flows) {
        if (opts.window && !opts.window->contains(f.timestamp)) continue;
        const auto ip = index.find_ip(f.server_ip);
        if (ip == ServerIndex::npos || !index.contacts(ip, f.server_port)) continue;
        out.push_back({local_day(f.timestamp, opts.tz), f.line_id, ip});
    }
    sort_unique(out);
    return out;
}

ContactTable empty_table(const ServerIndex& index) {
    ContactTable t;
    t.min_breadth.assign(index.ips().size(), ContactTable::never);
    for (std::uint32_t i = 0; i < index.ips().size(); ++i) {
        if (!index.ip_in_universe(i)) continue;
        ++t.universe;
        if (index.ips()[i].is_v4()) ++t.universe_v4;
    }
    return t;
}

ContactTable build_table(const std::vector<Contact>& contacts, const ServerIndex& index) {
    ContactTable t = empty_table(index);
    std::size_t i = 0;
    while (i < contacts.size()) {
        std::size_t j = i;
        while (j < contacts.size() && contacts[j].day == contacts[i].day && contacts[j].line == contacts[i].line) ++j;
        const auto breadth = static_cast<std::uint32_t>(j - i);
        t.line_days.push_back({contacts[i].day, contacts[i].line, breadth});
        for (std::size_t k = i; k < j; ++k) t.min_breadth[contacts[k].ip] = std::min(t.min_breadth[contacts[k].ip], breadth);
        i = j;
    }
    return t;
}

std::size_t partition_count(std::size_t n) {
    const auto threads = static_cast<std::size_t>(std::max(1, omp_get_max_threads()));
    return std::clamp<std::size_t>(n / 4096, 1, threads * 4);
}

std::span<const FlowRecord> partition(std::span<const FlowRecord> flows, std::size_t parts, std::size_t i) {
    const std::size_t n = flows.size();
    const std::size_t lo = n * i / parts;
    const std::size_t hi = n * (i + 1) / parts;
    return flows.subspan(lo, hi - lo);
}

std::uint8_t region_bit(TrafficRegion r) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(r)); }

struct HourRange {
    std::int64_t first;
    std::int64_t last;  // inclusive
};

HourRange hours_of(const StudyWindow& window, UtcOffset tz) {
    if (window.end <= window.start) throw ValidationError("empty study window");
    return {local_hour(window.start, tz), local_hour(window.end - 1, tz)};
}

}  // namespace

std::uint64_t estimate_bytes(std::span<const FlowRecord> flows) {
    std::uint64_t total = 0;
    for (const auto& f : flows) total += estimated_bytes(f);
    return total;
}

// ---- ServerIndex ----------------------------------------------------------------------------

ServerIndex::ServerIndex(std::span<const BackendServer> servers, const std::vector<ProviderProfile>& profiles,
                         bool include_shared)
    : servers_(servers.begin(), servers.end()) {
    std::sort(servers_.begin(), servers_.end(), [](const BackendServer& a, const BackendServer& b) {
        return std::tie(a.provider_id, a.ip) < std::tie(b.provider_id, b.ip);
    });
    for (std::size_t i = 1; i < servers_.size(); ++i)
        if (servers_[i].provider_id == servers_[i - 1].provider_id && servers_[i].ip == servers_[i - 1].ip)
            throw ValidationError("duplicate server " + servers_[i].provider_id + " " + servers_[i].ip.to_string());

    for (const auto& s : servers_)
        if (providers_.empty() || providers_.back() != s.provider_id) providers_.push_back(s.provider_id);
    for (const auto& id : providers_) profiles_.push_back(find_profile(profiles, id));

    const auto n = servers_.size();
    server_provider_.resize(n);
    server_ip_.resize(n);
    server_region_.resize(n);
    universe_.resize(n);
    dedicated_.resize(n);
    for (const auto& sv : servers_) locations_.push_back(sv.location.key());
    std::sort(locations_.begin(), locations_.end());
    locations_.erase(std::unique(locations_.begin(), locations_.end()), locations_.end());
    server_location_.resize(n);
    std::uint32_t p = 0;
    for (std::uint32_t s = 0; s < n; ++s) {
        const auto& sv = servers_[s];
        while (providers_[p] != sv.provider_id) ++p;
        server_provider_[s] = p;
        server_region_[s] = traffic_region_of(sv.location);
        server_location_[s] = static_cast<std::uint32_t>(
            std::lower_bound(locations_.begin(), locations_.end(), sv.location.key()) - locations_.begin());
        dedicated_[s] = sv.sharing == Sharing::dedicated;
        universe_[s] = dedicated_[s] || include_shared;
        auto [it, inserted] = ip_lookup_.try_emplace(sv.ip, static_cast<std::uint32_t>(ips_.size()));
        if (inserted) {
            ips_.push_back(sv.ip);
            by_ip_.emplace_back();
            ip_universe_.push_back(false);
        }
        server_ip_[s] = it->second;
        by_ip_[it->second].push_back(s);
        if (universe_[s]) ip_universe_[it->second] = true;
    }
}

std::optional<std::uint32_t> ServerIndex::provider_index(std::string_view id) const {
    auto it = std::lower_bound(providers_.begin(), providers_.end(), id);
    if (it == providers_.end() || *it != id) return std::nullopt;
    return static_cast<std::uint32_t>(it - providers_.begin());
}

std::uint32_t ServerIndex::find_ip(const IpAddress& ip) const {
    auto it = ip_lookup_.find(ip);
    return it == ip_lookup_.end() ? npos : it->second;
}

bool ServerIndex::port_ok(std::uint32_t server, std::uint16_t port) const {
    const auto* prof = profiles_[server_provider_[server]];
    if (!prof || prof->dedicated_ports.empty()) return true;
    return std::find(prof->dedicated_ports.begin(), prof->dedicated_ports.end(), port) != prof->dedicated_ports.end();
}

std::uint32_t ServerIndex::traffic_server(std::uint32_t ip, std::uint16_t port) const {
    for (auto s : by_ip_[ip])
        if (dedicated_[s] && port_ok(s, port)) return s;
    return npos;
}

bool ServerIndex::contacts(std::uint32_t ip, std::uint16_t port) const {
    for (auto s : by_ip_[ip])
        if (universe_[s] && port_ok(s, port)) return true;
    return false;
}

// ---- scanners -------------------------------------------------------------------------------

ContactTable count_contacts(std::span<const FlowRecord> flows, const ServerIndex& index, const FlowOptions& opts) {
    if (!opts.parallel) return count_contacts_serial(flows, index, opts);
    const std::size_t parts = partition_count(flows.size());
    std::vector<std::vector<Contact>> partial(parts);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < parts; ++i) partial[i] = collect_contacts(partition(flows, parts, i), index, opts);
    std::vector<Contact> all = std::move(partial[0]);
    for (std::size_t i = 1; i < parts; ++i) merge_sorted(all, partial[i]);
    return build_table(all, index);
}

ContactTable count_contacts_serial(std::span<const FlowRecord> flows, const ServerIndex& index,
                                   const FlowOptions& opts) {
    std::map<std::pair<std::int64_t, std::uint64_t>, std::set<std::uint32_t>> seen;
    for (const auto& f : flows) {
        if (opts.window && !opts.window->contains(f.timestamp)) continue;
        const auto ip = index.find_ip(f.server_ip);
        if (ip == ServerIndex::npos || !index.contacts(ip, f.server_port)) continue;
        seen[{local_day(f.timestamp, opts.tz), f.line_id}].insert(ip);
    }
    ContactTable t = empty_table(index);
    for (const auto& [key, ips] : seen) {
        const auto breadth = static_cast<std::uint32_t>(ips.size());
        t.line_days.push_back({key.first, key.second, breadth});
        for (auto ip : ips) t.min_breadth[ip] = std::min(t.min_breadth[ip], breadth);
    }
    return t;
}

std::vector<ScannerVerdict> detect_scanners(const ContactTable& contacts, std::size_t threshold) {
    std::vector<ScannerVerdict> out;
    out.reserve(contacts.line_days.size());
    for (const auto& ld : contacts.line_days)
        out.push_back({ld.line, ld.day, ld.distinct, ld.distinct > threshold, threshold});
    return out;
}

std::size_t LineDayHash::operator()(const LineDayKey& k) const noexcept {
    return mix(mix(0, static_cast<std::uint64_t>(k.day)), k.line);
}

ScannerSet scanner_set(const ContactTable& contacts, std::size_t threshold) {
    ScannerSet out;
    for (const auto& ld : contacts.line_days)
        if (ld.distinct > threshold) out.insert({ld.day, ld.line});
    return out;
}

std::vector<SweepPoint> threshold_sweep(const ContactTable& contacts, const ServerIndex& index,
                                        std::span<const std::size_t> thresholds) {
    std::vector<std::uint32_t> breadth_all, breadth_v4;
    for (std::uint32_t i = 0; i < contacts.min_breadth.size(); ++i) {
        if (contacts.min_breadth[i] == ContactTable::never) continue;
        breadth_all.push_back(contacts.min_breadth[i]);
        if (index.ips()[i].is_v4()) breadth_v4.push_back(contacts.min_breadth[i]);
    }
    std::sort(breadth_all.begin(), breadth_all.end());
    std::sort(breadth_v4.begin(), breadth_v4.end());
    auto at_most = [](const std::vector<std::uint32_t>& v, std::size_t t) {
        return static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), t,
                                                         [](std::size_t x, std::uint32_t y) { return x < y; }) -
                                        v.begin());
    };

    std::vector<SweepPoint> out;
    for (auto t : thresholds) {
        SweepPoint p;
        p.threshold = t;
        p.visible_ips = at_most(breadth_all, t);
        p.visible_ips_v4 = at_most(breadth_v4, t);
        p.visible_fraction = contacts.universe ? double(p.visible_ips) / double(contacts.universe) : 0.0;
        p.visible_fraction_v4 = contacts.universe_v4 ? double(p.visible_ips_v4) / double(contacts.universe_v4) : 0.0;
        std::vector<std::uint64_t> lines;
        for (const auto& ld : contacts.line_days)
            if (ld.distinct > t) lines.push_back(ld.line);
        p.scanner_line_days = lines.size();
        sort_unique(lines);
        p.scanner_lines = lines.size();
        out.push_back(p);
    }
    return out;
}

// ---- aggregate ------------------------------------------------------------------------------

std::size_t KeyHash::operator()(const ProviderHour& k) const noexcept {
    return mix(mix(0, k.provider), static_cast<std::uint64_t>(k.hour));
}
std::size_t KeyHash::operator()(const PortKey& k) const noexcept {
    return mix(0, (std::uint64_t{k.provider} << 24) | (std::uint64_t{k.port} << 8) | static_cast<std::uint8_t>(k.transport));
}
std::size_t KeyHash::operator()(const LineUsageKey& k) const noexcept {
    std::size_t h = mix(0, k.line);
    h = mix(h, static_cast<std::uint64_t>(k.day));
    return mix(h, (std::uint64_t{k.provider} << 24) | (std::uint64_t{k.port} << 8) | static_cast<std::uint8_t>(k.transport));
}

std::size_t KeyHash::operator()(const LocationHour& k) const noexcept {
    return mix(mix(0, (std::uint64_t{k.provider} << 32) | k.location), static_cast<std::uint64_t>(k.hour));
}

void FlowAggregate::merge(const FlowAggregate& o) {
    flows_seen += o.flows_seen;
    flows_outside_window += o.flows_outside_window;
    flows_scanner += o.flows_scanner;
    flows_attributed += o.flows_attributed;
    if (contacted.size() < o.contacted.size()) contacted.resize(o.contacted.size(), 0);
    for (std::size_t i = 0; i < o.contacted.size(); ++i) contacted[i] |= o.contacted[i];
    merge_sorted(hourly_lines, o.hourly_lines);
    merge_sorted(active_all, o.active_all);
    merge_sorted(active_tls, o.active_tls);
    add_map(hourly_bytes, o.hourly_bytes);
    add_map(port_bytes, o.port_bytes);
    add_map(line_usage, o.line_usage);
    add_map(location_bytes, o.location_bytes);
    for (const auto& [line, mask] : o.line_regions) line_regions[line] |= mask;
    if (region_bytes.size() < o.region_bytes.size()) region_bytes.resize(o.region_bytes.size(), 0);
    for (std::size_t i = 0; i < o.region_bytes.size(); ++i) region_bytes[i] += o.region_bytes[i];
    if (sampled_packets.size() < o.sampled_packets.size()) sampled_packets.resize(o.sampled_packets.size(), 0);
    for (std::size_t i = 0; i < o.sampled_packets.size(); ++i) sampled_packets[i] += o.sampled_packets[i];
}

void FlowAggregate::finalize() {
    sort_unique(hourly_lines);
    sort_unique(active_all);
    sort_unique(active_tls);
}

FlowAggregate empty_aggregate(const ServerIndex& index) {
    FlowAggregate a;
    a.contacted.assign(index.servers().size(), 0);
    a.region_bytes.assign(index.providers().size() * 4, 0);
    a.sampled_packets.assign(index.providers().size(), 0);
    return a;
}

void accumulate(FlowAggregate& agg, std::span<const FlowRecord> flows, const ServerIndex& index,
                const ScannerSet& scanners, const FlowOptions& opts) {
    for (const auto& f : flows) {
        ++agg.flows_seen;
        if (opts.window && !opts.window->contains(f.timestamp)) {
            ++agg.flows_outside_window;
            continue;
        }
        const auto ip = index.find_ip(f.server_ip);
        if (ip == ServerIndex::npos) continue;
        const auto day = local_day(f.timestamp, opts.tz);
        if (!scanners.empty() && scanners.count({day, f.line_id})) {
            ++agg.flows_scanner;
            continue;
        }
        index.for_each_contact(ip, f.server_port, [&](std::uint32_t s) { agg.contacted[s] = 1; });
        const auto s = index.traffic_server(ip, f.server_port);
        if (s == ServerIndex::npos) continue;
        ++agg.flows_attributed;

        const auto p = index.provider_of(s);
        const auto hour = local_hour(f.timestamp, opts.tz);
        const auto est = estimated_bytes(f);
        const DownUp du = f.direction == Direction::downstream ? DownUp{est, 0} : DownUp{0, est};
        const auto region = index.region_of(s);

        agg.hourly_lines.push_back({p, hour, f.line_id});
        agg.active_all.emplace_back(p, f.line_id);
        if (index.servers()[s].sources & source_bit(Source::tls_cert)) agg.active_tls.emplace_back(p, f.line_id);
        agg.hourly_bytes[{p, hour}] += du;
        agg.port_bytes[{p, f.server_port, f.transport}] += est;
        agg.line_usage[{f.line_id, day, p, f.server_port, f.transport}] += du;
        agg.location_bytes[{p, index.location_of(s), hour}] += est;
        agg.line_regions[f.line_id] |= region_bit(region);
        agg.region_bytes[p * 4 + static_cast<std::size_t>(region)] += est;
        agg.sampled_packets[p] += f.sampled_packets;
    }
}

FlowAggregate aggregate_flows(std::span<const FlowRecord> flows, const ServerIndex& index,
                              const ScannerSet& scanners, const FlowOptions& opts) {
    if (!opts.parallel) return aggregate_flows_serial(flows, index, scanners, opts);
    const std::size_t parts = partition_count(flows.size());
    std::vector<FlowAggregate> partial(parts);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < parts; ++i) {
        partial[i] = empty_aggregate(index);
        accumulate(partial[i], partition(flows, parts, i), index, scanners, opts);
        partial[i].finalize();
    }
    FlowAggregate out = std::move(partial[0]);
    for (std::size_t i = 1; i < parts; ++i) out.merge(partial[i]);
    return out;
}

FlowAggregate aggregate_flows_serial(std::span<const FlowRecord> flows, const ServerIndex& index,
                                     const ScannerSet& scanners, const FlowOptions& opts) {
    FlowAggregate out = empty_aggregate(index);
    accumulate(out, flows, index, scanners, opts);
    out.finalize();
    return out;
}

// ---- metrics --------------------------------------------------------------------------------

std::vector<VisibilityRow> visibility_per_provider(const FlowAggregate& agg, const ServerIndex& index) {
    const auto np = index.providers().size();
    std::vector<std::array<std::size_t, 4>> counts(np, {0, 0, 0, 0});  // v4 servers, v4 hit, v6 servers, v6 hit
    for (std::uint32_t s = 0; s < index.servers().size(); ++s) {
        if (!index.in_universe(s)) continue;
        const std::size_t off = index.servers()[s].ip.is_v4() ? 0 : 2;
        auto& c = counts[index.provider_of(s)];
        ++c[off];
        if (s < agg.contacted.size() && agg.contacted[s]) ++c[off + 1];
    }
    std::vector<VisibilityRow> out;
    for (std::size_t p = 0; p < np; ++p) {
        for (auto fam : {Family::v4, Family::v6}) {
            const std::size_t off = fam == Family::v4 ? 0 : 2;
            if (counts[p][off] == 0) continue;
            VisibilityRow r{index.providers()[p], fam, counts[p][off], counts[p][off + 1], 0.0};
            r.fraction = double(r.contacted) / double(r.servers);
            out.push_back(r);
        }
    }
    return out;
}

std::vector<AblationRow> source_ablation(const FlowAggregate& agg, const ServerIndex& index) {
    const auto np = index.providers().size();
    std::vector<std::size_t> all(np, 0), tls(np, 0);
    for (const auto& [p, line] : agg.active_all) ++all[p];
    for (const auto& [p, line] : agg.active_tls) ++tls[p];
    std::vector<AblationRow> out;
    for (std::size_t p = 0; p < np; ++p) {
        AblationRow r{index.providers()[p], all[p], tls[p], 0.0};
        if (r.lines_all > 0) r.decrease = 1.0 - double(r.lines_tls_only) / double(r.lines_all);
        out.push_back(r);
    }
    return out;
}

std::vector<ActivityPoint> activity_series(const FlowAggregate& agg, const ServerIndex& index,
                                           const StudyWindow& window, UtcOffset tz) {
    const auto range = hours_of(window, tz);
    const auto width = static_cast<std::size_t>(range.last - range.first + 1);
    const auto np = index.providers().size();
    std::vector<std::size_t> counts(np * width, 0);
    for (const auto& a : agg.hourly_lines) {
        if (a.hour < range.first || a.hour > range.last) continue;
        ++counts[a.provider * width + static_cast<std::size_t>(a.hour - range.first)];
    }
    std::vector<ActivityPoint> out;
    out.reserve(np * width);
    for (std::size_t p = 0; p < np; ++p)
        for (std::size_t h = 0; h < width; ++h)
            out.push_back({index.providers()[p], hour_start(range.first + static_cast<std::int64_t>(h), tz),
                           counts[p * width + h]});
    return out;
}

std::vector<std::optional<std::size_t>> suppress(std::span<const ActivityPoint> series, std::size_t floor) {
    std::vector<std::optional<std::size_t>> out;
    out.reserve(series.size());
    for (const auto& p : series) {
        if (p.active_lines < floor) out.emplace_back();
        else out.emplace_back(p.active_lines);
    }
    return out;
}

std::vector<TrafficSeries> traffic_series_and_ratio(const FlowAggregate& agg, const ServerIndex& index,
                                                    const StudyWindow& window, UtcOffset tz) {
    const auto range = hours_of(window, tz);
    const auto width = static_cast<std::size_t>(range.last - range.first + 1);
    const auto np = index.providers().size();
    std::vector<DownUp> cells(np * width);
    for (const auto& [k, du] : agg.hourly_bytes) {
        if (k.hour < range.first || k.hour > range.last) continue;
        cells[k.provider * width + static_cast<std::size_t>(k.hour - range.first)] += du;
    }
    std::vector<TrafficSeries> out;
    for (std::size_t p = 0; p < np; ++p) {
        TrafficSeries ts;
        ts.provider_id = index.providers()[p];
        for (std::size_t h = 0; h < width; ++h) {
            const auto& c = cells[p * width + h];
            ts.points.push_back({hour_start(range.first + static_cast<std::int64_t>(h), tz), c.down, c.up, 0.0});
            ts.total_down += c.down;
            ts.total_up += c.up;
            ts.peak_down = std::max(ts.peak_down, c.down);
        }
        if (ts.peak_down > 0)
            for (auto& pt : ts.points) pt.normalized_down = double(pt.down) / double(ts.peak_down);
        if (ts.total_up > 0) {
            ts.ratio = double(ts.total_down) / double(ts.total_up);
        } else if (ts.total_down > 0) {
            ts.ratio = std::numeric_limits<double>::infinity();
            ts.ratio_infinite = true;
        }
        out.push_back(std::move(ts));
    }
    return out;
}

bool well_known_port(std::uint16_t port) {
    switch (port) {
        case 80: case 443: case 1883: case 5671: case 8443: case 8883: case 8943: case 61616: return true;
        default: return port >= 5682 && port <= 5686;
    }
}

std::string port_label(std::uint16_t port, Transport transport, const ProviderProfile* profile) {
    bool documented = well_known_port(port);
    if (!documented && profile) {
        for (const auto& d : profile->protocols)
            if (d.port == port && d.transport == transport) documented = true;
    }
    if (!documented && transport == Transport::udp && port > 10000) return "udp-high";
    return std::string(transport_name(transport)) + "/" + std::to_string(port);
}

std::vector<PortShare> port_mix(const FlowAggregate& agg, const ServerIndex& index) {
    std::map<std::pair<std::uint32_t, std::string>, std::uint64_t> bytes;
    std::vector<std::uint64_t> totals(index.providers().size(), 0);
    for (const auto& [k, b] : agg.port_bytes) {
        bytes[{k.provider, port_label(k.port, k.transport, index.profile(k.provider))}] += b;
        totals[k.provider] += b;
    }
    std::vector<PortShare> out;
    for (const auto& [k, b] : bytes) {
        if (totals[k.first] == 0) continue;
        out.push_back({index.providers()[k.first], k.second, b, double(b) / double(totals[k.first])});
    }
    std::stable_sort(out.begin(), out.end(), [](const PortShare& a, const PortShare& b) {
        if (a.provider_id != b.provider_id) return a.provider_id < b.provider_id;
        return a.bytes > b.bytes;
    });
    return out;
}

std::uint64_t LineDayProfile::total() const {
    std::uint64_t t = 0;
    for (const auto& [p, du] : per_provider) t += du.total();
    return t;
}

std::vector<LineDayProfile> line_day_profiles(const FlowAggregate& agg, const ContactTable& contacts,
                                              const ServerIndex& index) {
    std::map<std::pair<std::uint64_t, std::int64_t>, LineDayProfile> by_key;
    for (const auto& [k, du] : agg.line_usage) {
        auto& prof = by_key[{k.line, k.day}];
        prof.line_id = k.line;
        prof.day = k.day;
        prof.per_provider[index.providers()[k.provider]] += du;
        prof.per_port[{k.port, k.transport}] += du.total();
    }
    std::vector<LineDayProfile> out;
    out.reserve(by_key.size());
    for (auto& [k, prof] : by_key) {
        auto it = std::lower_bound(contacts.line_days.begin(), contacts.line_days.end(), prof,
                                   [](const ContactTable::LineDay& ld, const LineDayProfile& p) {
                                       return std::tie(ld.day, ld.line) < std::tie(p.day, p.line_id);
                                   });
        if (it != contacts.line_days.end() && it->day == prof.day && it->line == prof.line_id)
            prof.distinct_backend_ips = it->distinct;
        out.push_back(std::move(prof));
    }
    return out;
}

Ecdf::Ecdf(std::vector<std::uint64_t> values) : values_(std::move(values)) {
    std::sort(values_.begin(), values_.end());
}

double Ecdf::at(std::uint64_t x) const {
    if (values_.empty()) return 0.0;
    const auto n = std::upper_bound(values_.begin(), values_.end(), x) - values_.begin();
    return double(n) / double(values_.size());
}

std::uint64_t Ecdf::quantile(double q) const {
    if (values_.empty()) throw ValidationError("quantile of an empty distribution");
    if (!(q > 0.0 && q <= 1.0)) throw ValidationError("quantile must be in (0, 1]");
    auto rank = static_cast<std::size_t>(std::ceil(q * double(values_.size())));
    rank = std::clamp<std::size_t>(rank, 1, values_.size());
    return values_[rank - 1];
}

std::vector<std::pair<std::uint64_t, double>> Ecdf::steps() const {
    std::vector<std::pair<std::uint64_t, double>> out;
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (i + 1 == values_.size() || values_[i + 1] != values_[i])
            out.emplace_back(values_[i], double(i + 1) / double(values_.size()));
    return out;
}

std::map<std::string, Ecdf> per_line_distribution(std::span<const LineDayProfile> profiles, GroupBy group_by,
                                                  const std::vector<ProviderProfile>* catalog) {
    std::map<std::string, std::vector<std::uint64_t>> samples;
    auto label_of = [&](std::uint16_t port, Transport tr) {
        std::string best = port_label(port, tr, nullptr);
        if (catalog && best == "udp-high") {
            for (const auto& p : *catalog) {
                auto l = port_label(port, tr, &p);
                if (l != best) return l;
            }
        }
        return best;
    };
    for (const auto& prof : profiles) {
        switch (group_by) {
            case GroupBy::all: samples["all"].push_back(prof.total()); break;
            case GroupBy::provider:
                for (const auto& [p, du] : prof.per_provider) samples[p].push_back(du.total());
                break;
            case GroupBy::port: {
                std::map<std::string, std::uint64_t> per_label;
                for (const auto& [pt, b] : prof.per_port) per_label[label_of(pt.first, pt.second)] += b;
                for (const auto& [l, b] : per_label) samples[l].push_back(b);
                break;
            }
        }
    }
    std::map<std::string, Ecdf> out;
    if (group_by == GroupBy::all) out["all"] = Ecdf{};
    for (auto& [k, v] : samples) out[k] = Ecdf(std::move(v));
    return out;
}

std::string_view line_category_name(LineCategory c) {
    switch (c) {
        case LineCategory::eu_only: return "EU-only";
        case LineCategory::us_only: return "US-only";
        case LineCategory::eu_us: return "EU+US";
        case LineCategory::asia_only: return "Asia-only";
        case LineCategory::other: return "Other";
        case LineCategory::mixed: return "Mixed";
    }
    return "?";
}

LineCategory categorize_regions(std::uint8_t mask) {
    const auto eu = region_bit(TrafficRegion::eu), us = region_bit(TrafficRegion::us);
    if (mask == eu) return LineCategory::eu_only;
    if (mask == us) return LineCategory::us_only;
    if (mask == (eu | us)) return LineCategory::eu_us;
    if (mask == region_bit(TrafficRegion::asia)) return LineCategory::asia_only;
    if (mask == region_bit(TrafficRegion::other)) return LineCategory::other;
    return LineCategory::mixed;
}

ContinentReport continent_attribution(const FlowAggregate& agg, const ServerIndex& index) {
    ContinentReport r;
    for (const auto& [line, mask] : agg.line_regions) ++r.line_counts[static_cast<std::size_t>(categorize_regions(mask))];
    const std::size_t lines = agg.line_regions.size();
    for (std::size_t i = 0; i < 6; ++i) r.line_shares[i] = lines ? double(r.line_counts[i]) / double(lines) : 0.0;

    for (std::size_t p = 0; p < index.providers().size(); ++p) {
        std::uint64_t total = 0;
        for (std::size_t g = 0; g < 4; ++g) {
            r.traffic_bytes[g] += agg.region_bytes[p * 4 + g];
            total += agg.region_bytes[p * 4 + g];
        }
        if (total == 0) continue;
        auto& shares = r.provider_traffic_shares[index.providers()[p]];
        for (std::size_t g = 0; g < 4; ++g) shares[g] = double(agg.region_bytes[p * 4 + g]) / double(total);
    }
    std::uint64_t total = 0;
    for (auto b : r.traffic_bytes) total += b;
    for (std::size_t g = 0; g < 4; ++g) r.traffic_shares[g] = total ? double(r.traffic_bytes[g]) / double(total) : 0.0;

    std::size_t servers = 0;
    for (std::uint32_t s = 0; s < index.servers().size(); ++s) {
        if (!index.in_universe(s)) continue;
        ++r.server_counts[static_cast<std::size_t>(index.region_of(s))];
        ++servers;
    }
    for (std::size_t g = 0; g < 4; ++g) r.server_shares[g] = servers ? double(r.server_counts[g]) / double(servers) : 0.0;
    return r;
}

}  // namespace iotmap

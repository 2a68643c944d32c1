// Reference values computed straight from the ground-truth log. Deliberately independent of the
// pipeline: plain maps and sets, one pass per question.
#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

#include "iotmap/synth.hpp"
#include "json.hpp"

namespace iotmap {

namespace {

std::uint8_t region_mask_bit(const Location& loc) { return std::uint8_t(1u << static_cast<unsigned>(traffic_region_of(loc))); }

std::size_t category_of(std::uint8_t mask) {
    switch (mask) {
        case 1: return 0;  // EU only
        case 2: return 1;  // US only
        case 3: return 2;  // EU and US
        case 4: return 3;  // Asia only
        case 8: return 4;  // elsewhere only
        default: return 5;
    }
}

}  // namespace

OracleMetrics oracle_metrics(const GroundTruthLog& log, const OracleParams& params) {
    OracleMetrics m;
    std::unordered_map<IpAddress, std::vector<std::size_t>> by_ip;
    for (std::size_t i = 0; i < log.servers.size(); ++i) by_ip[log.servers[i].ip].push_back(i);
    auto counts = [&](const TruthServer& s) {
        return s.sharing == Sharing::dedicated && (!params.discovered_only || s.visible != 0);
    };
    auto find = [&](const TruthFlowTotal& f) -> std::optional<std::size_t> {
        auto it = by_ip.find(f.server_ip);
        if (it == by_ip.end()) return std::nullopt;
        for (auto i : it->second)
            if (log.servers[i].provider_id == f.provider_id) return i;
        return std::nullopt;
    };

    for (const auto& s : log.servers) {
        if (s.visible) m.candidates[{s.provider_id, s.ip}] = s.visible;
        auto& p = m.providers[s.provider_id];
        if (counts(s)) {
            ++p.universe;
            ++m.universe;
        }
    }

    // distinct servers per (line, local day)
    auto day_of = [&](Timestamp hour) { return floor_div(log.tz.local(hour), kDay); };
    std::map<std::pair<std::uint64_t, std::int64_t>, std::set<std::size_t>> breadth;
    for (const auto& f : log.flows) {
        auto id = find(f);
        if (!id || !counts(log.servers[*id])) continue;
        breadth[{f.line_id, day_of(f.hour)}].insert(*id);
    }
    auto scanner_days = [&](std::size_t threshold) {
        std::set<std::pair<std::uint64_t, std::int64_t>> out;
        for (const auto& [key, set] : breadth)
            if (set.size() > threshold) out.insert(key);
        return out;
    };

    for (auto t : params.sweep_thresholds) {
        const auto scanners = scanner_days(t);
        std::set<std::size_t> seen;
        OracleSweepPoint pt;
        pt.threshold = t;
        for (const auto& [key, set] : breadth) {
            if (scanners.count(key)) {
                pt.scanner_line_ids.insert(key.first);
                continue;
            }
            seen.insert(set.begin(), set.end());
        }
        pt.visible = seen.size();
        pt.scanner_lines = pt.scanner_line_ids.size();
        m.sweep.push_back(std::move(pt));
    }

    const auto scanners = scanner_days(params.scanner_threshold);
    std::set<std::size_t> contacted;
    std::map<std::string, std::set<std::uint64_t>> lines_all, lines_tls;
    std::map<std::pair<std::string, Timestamp>, std::set<std::uint64_t>> active;
    std::map<std::uint64_t, std::uint8_t> line_regions;
    for (const auto& f : log.flows) {
        auto id = find(f);
        if (!id) continue;
        const auto& s = log.servers[*id];
        if (!counts(s) || scanners.count({f.line_id, day_of(f.hour)})) continue;
        contacted.insert(*id);
        auto& p = m.providers[s.provider_id];
        lines_all[s.provider_id].insert(f.line_id);
        if (s.visible & source_bit(Source::tls_cert)) lines_tls[s.provider_id].insert(f.line_id);
        p.down_bytes += f.down_bytes;
        p.up_bytes += f.up_bytes;
        p.sampled_packets_expected += f.down_packets + f.up_packets;
        p.port_bytes[{f.port, f.transport}] += f.down_bytes + f.up_bytes;
        active[{s.provider_id, f.hour}].insert(f.line_id);
        m.region_bytes[static_cast<std::size_t>(traffic_region_of(s.location))] += f.down_bytes + f.up_bytes;
        line_regions[f.line_id] |= region_mask_bit(s.location);
        m.line_day_bytes[{f.line_id, day_of(f.hour)}] += f.down_bytes + f.up_bytes;
    }
    for (auto& [id, p] : m.providers) p.sampled_packets_expected /= std::max<std::uint32_t>(1, log.sampling_rate);
    for (auto id : contacted) ++m.providers[log.servers[id].provider_id].contacted;
    for (const auto& [id, set] : lines_all) m.providers[id].lines_all = set.size();
    for (const auto& [id, set] : lines_tls) m.providers[id].lines_tls = set.size();
    for (const auto& [key, set] : active) m.active_lines[key] = set.size();
    for (const auto& [line, mask] : line_regions) ++m.line_categories[category_of(mask)];

    std::map<std::pair<std::string, IpAddress>, bool> tls;
    for (const auto& s : log.servers) tls[{s.provider_id, s.ip}] = (s.visible & source_bit(Source::tls_cert)) != 0;
    for (const auto& c : log.churn) {
        auto& [added, removed] = m.churn[{c.provider_id, c.day}];
        for (const auto& ip : c.added) added += tls[{c.provider_id, ip}] ? 1 : 0;
        for (const auto& ip : c.removed) removed += tls[{c.provider_id, ip}] ? 1 : 0;
    }
    return m;
}

std::string oracle_json(const OracleMetrics& m) {
    using nlohmann::json;
    json j;
    j["candidates"] = m.candidates.size();
    j["universe"] = m.universe;
    j["providers"] = json::object();
    for (const auto& [id, p] : m.providers) {
        json pj;
        pj["universe"] = p.universe;
        pj["contacted"] = p.contacted;
        pj["visibility"] = p.universe ? double(p.contacted) / double(p.universe) : 0.0;
        pj["lines_all"] = p.lines_all;
        pj["lines_tls_only"] = p.lines_tls;
        pj["down_bytes"] = p.down_bytes;
        pj["up_bytes"] = p.up_bytes;
        pj["expected_sampled_packets"] = p.sampled_packets_expected;
        json ports = json::object();
        for (const auto& [k, v] : p.port_bytes) ports[std::to_string(k.first) + "/" + std::string(transport_name(k.second))] = v;
        pj["port_bytes"] = ports;
        j["providers"][id] = pj;
    }
    j["sweep"] = json::array();
    for (const auto& pt : m.sweep)
        j["sweep"].push_back({{"threshold", pt.threshold}, {"visible", pt.visible}, {"scanner_lines", pt.scanner_lines}});
    j["region_bytes"] = {{"eu", m.region_bytes[0]}, {"us", m.region_bytes[1]}, {"asia", m.region_bytes[2]},
                         {"other", m.region_bytes[3]}};
    j["line_categories"] = m.line_categories;
    return j.dump(2) + "\n";
}

}  // namespace iotmap

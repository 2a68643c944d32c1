#include "iotmap/disruption.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "json.hpp"

#include "iotmap/error.hpp"
#include "iotmap/textio.hpp"

namespace iotmap {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

// ---- outage ---------------------------------------------------------------------------------

std::vector<VolumeSeries> regional_series(const FlowAggregate& agg, const ServerIndex& index,
                                          const StudyWindow& window, UtcOffset tz) {
    const auto first = local_hour(window.start, tz);
    const auto last = local_hour(window.end - 1, tz);
    const auto width = static_cast<std::size_t>(last - first + 1);
    const auto np = index.providers().size();

    std::vector<std::set<std::uint32_t>> locations(np);
    for (std::uint32_t s = 0; s < index.servers().size(); ++s)
        if (index.servers()[s].sharing == Sharing::dedicated) locations[index.provider_of(s)].insert(index.location_of(s));

    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<double>> cells;
    std::vector<std::vector<double>> totals(np, std::vector<double>(width, 0.0));
    for (const auto& [k, bytes] : agg.location_bytes) {
        if (k.hour < first || k.hour > last) continue;
        const auto h = static_cast<std::size_t>(k.hour - first);
        auto& v = cells[{k.provider, k.location}];
        if (v.empty()) v.assign(width, 0.0);
        v[h] += double(bytes);
        totals[k.provider][h] += double(bytes);
    }

    std::vector<VolumeSeries> out;
    for (std::uint32_t p = 0; p < np; ++p) {
        const double peak = *std::max_element(totals[p].begin(), totals[p].end());
        auto norm = [&](std::vector<double> v) {
            if (peak > 0)
                for (auto& x : v) x /= peak;
            return v;
        };
        for (auto loc : locations[p]) {
            auto it = cells.find({p, loc});
            out.push_back({index.providers()[p], index.locations()[loc], hour_start(first, tz),
                           norm(it == cells.end() ? std::vector<double>(width, 0.0) : it->second)});
        }
        out.push_back({index.providers()[p], "total", hour_start(first, tz), norm(totals[p])});
    }
    return out;
}

std::vector<OutageFinding> outage_scan(const VolumeSeries& series, const StudyWindow& scan, const OutageOptions& opts) {
    if (opts.baseline_days == 0 || opts.sustain_hours == 0)
        throw ValidationError("baseline_days and sustain_hours must be positive");
    if ((scan.start - series.start) % kHour != 0 || (scan.end - scan.start) % kHour != 0)
        throw ValidationError("scan window must align with the series hours");
    for (double v : series.values)
        if (!std::isfinite(v)) throw ValidationError("series " + series.provider_id + "/" + series.region + " has non-finite values");
    const Timestamp history = static_cast<Timestamp>(opts.baseline_days) * kDay;
    if (scan.start - history < series.start)
        throw ValidationError("insufficient history for " + series.provider_id + "/" + series.region + ": need " +
                              std::to_string(opts.baseline_days) + " days before " + format_timestamp(scan.start));
    if (scan.end > series.end())
        throw ValidationError("series " + series.provider_id + "/" + series.region + " ends before the scan window");

    auto at = [&](Timestamp t) { return series.values[static_cast<std::size_t>((t - series.start) / kHour)]; };
    std::map<Timestamp, double> day_baseline;
    auto baseline_at = [&](Timestamp t) {
        if (opts.per_hour) {
            double b = at(t - kDay);
            for (std::size_t k = 2; k <= opts.baseline_days; ++k) b = std::min(b, at(t - static_cast<Timestamp>(k) * kDay));
            return b;
        }
        const Timestamp day = scan.start + (t - scan.start) / kDay * kDay;
        auto it = day_baseline.find(day);
        if (it != day_baseline.end()) return it->second;
        double b = at(day - history);
        for (Timestamp h = day - history; h < day; h += kHour) b = std::min(b, at(h));
        day_baseline.emplace(day, b);
        return b;
    };

    std::vector<OutageFinding> out;
    std::vector<std::pair<Timestamp, double>> run;  // (hour, baseline)
    auto close = [&] {
        if (run.size() >= opts.sustain_hours) {
            OutageFinding f;
            f.provider_id = series.provider_id;
            f.region = series.region;
            f.window = StudyWindow(run.front().first, run.back().first + kHour);
            f.min_baseline = run.front().second;
            for (const auto& [t, b] : run) {
                const double v = at(t);
                f.observed.push_back(v);
                f.min_baseline = std::min(f.min_baseline, b);
                if (b > 0) f.max_drop_fraction = std::max(f.max_drop_fraction, 1.0 - v / b);
            }
            out.push_back(std::move(f));
        }
        run.clear();
    };
    for (Timestamp t = scan.start; t < scan.end; t += kHour) {
        const double b = baseline_at(t);
        if (at(t) < b) run.emplace_back(t, b);
        else close();
    }
    close();
    return out;
}

std::string outage_finding_json(const OutageFinding& f) {
    json j;
    j["provider_id"] = f.provider_id;
    j["region"] = f.region;
    j["start"] = format_timestamp(f.window.start);
    j["end"] = format_timestamp(f.window.end);
    j["min_baseline"] = f.min_baseline;
    j["max_drop_fraction"] = f.max_drop_fraction;
    j["observed"] = f.observed;
    return j.dump();
}

void write_series(const std::filesystem::path& path, std::span<const VolumeSeries> series) {
    std::ostringstream out;
    out << "# provider_id\tregion\thour_start\tvalue\n";
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.values.size(); ++i)
            out << s.provider_id << '\t' << s.region << '\t' << s.start + static_cast<Timestamp>(i) * kHour << '\t'
                << fmt_double(s.values[i]) << '\n';
    write_file(path, out.str());
}

std::vector<VolumeSeries> read_series(const std::filesystem::path& path) {
    std::vector<VolumeSeries> out;
    std::map<std::pair<std::string, std::string>, std::size_t> slot;
    const std::string src = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        const auto cols = split(line, '\t');
        if (cols.size() != 4) throw ParseError(src, lineno, "", "expected provider<TAB>region<TAB>hour_start<TAB>value");
        Timestamp t = 0;
        auto [p1, e1] = std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), t);
        if (e1 != std::errc() || p1 != cols[2].data() + cols[2].size()) throw ParseError(src, lineno, "hour_start", "expected integer");
        double v = 0;
        auto [p2, e2] = std::from_chars(cols[3].data(), cols[3].data() + cols[3].size(), v);
        if (e2 != std::errc() || p2 != cols[3].data() + cols[3].size()) throw ParseError(src, lineno, "value", "expected number");
        const std::pair<std::string, std::string> key{std::string(cols[0]), std::string(cols[1])};
        auto it = slot.find(key);
        if (it == slot.end()) {
            slot.emplace(key, out.size());
            out.push_back({key.first, key.second, t, {v}});
            return;
        }
        auto& s = out[it->second];
        if (t != s.end()) throw ParseError(src, lineno, "hour_start", "hours must be contiguous");
        s.values.push_back(v);
    });
    return out;
}

// ---- blocklists -----------------------------------------------------------------------------

std::uint32_t BlocklistIndex::intern(const std::string& list_id) {
    auto [it, inserted] = list_ids_.try_emplace(list_id, static_cast<std::uint32_t>(lists_.size()));
    if (inserted) lists_.push_back(list_id);
    return it->second;
}

void BlocklistIndex::add(const std::string& list_id, const Cidr& cidr) {
    const auto li = intern(list_id);
    auto& fam = family(cidr.family());
    if (fam.by_length.empty()) fam.by_length.resize(cidr.network().bit_width() + 1);
    auto& ids = fam.by_length[cidr.length()][cidr.network()];
    if (std::find(ids.begin(), ids.end(), li) != ids.end()) return;
    ids.push_back(li);
    ++entries_;
    if (std::find(fam.lengths.begin(), fam.lengths.end(), cidr.length()) == fam.lengths.end()) {
        fam.lengths.push_back(cidr.length());
        std::sort(fam.lengths.begin(), fam.lengths.end());
    }
}

std::vector<std::uint32_t> BlocklistIndex::lists_containing(const IpAddress& ip) const {
    std::vector<std::uint32_t> out;
    const auto& fam = family(ip.family());
    for (unsigned len : fam.lengths) {
        const auto& slot = fam.by_length[len];
        if (auto it = slot.find(ip.masked(len)); it != slot.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<BlocklistEntry> load_netset(const std::filesystem::path& path) {
    std::vector<BlocklistEntry> out;
    const std::string id = path.stem().string();
    const std::string src = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) return;
        auto cidr = Cidr::parse(line);
        if (!cidr) throw ParseError(src, lineno, "cidr", "invalid address or CIDR '" + std::string(line) + "'");
        out.push_back({id, *cidr});
    });
    return out;
}

void BlocklistIndex::load_netset(const std::filesystem::path& path) {
    const auto entries = iotmap::load_netset(path);
    intern(path.stem().string());
    for (const auto& e : entries) add(e.list_id, e.cidr);
}

BlocklistReport blocklist_check(std::span<const BackendServer> servers, const BlocklistIndex& index,
                                const std::set<std::string>& excluded) {
    BlocklistReport r;
    std::set<IpAddress> distinct;
    for (const auto& s : servers) {
        BlocklistMatch m{s.provider_id, s.ip, {}};
        for (auto li : index.lists_containing(s.ip)) {
            const auto& id = index.lists()[li];
            if (excluded.count(id)) {
                ++r.excluded_hits;
                ++r.excluded_per_list[id];
            } else {
                m.lists.push_back(id);
            }
        }
        if (m.lists.empty()) continue;
        std::sort(m.lists.begin(), m.lists.end());
        distinct.insert(s.ip);
        ++r.per_provider[s.provider_id];
        r.matches.push_back(std::move(m));
    }
    std::sort(r.matches.begin(), r.matches.end(), [](const BlocklistMatch& a, const BlocklistMatch& b) {
        return std::tie(a.provider_id, a.ip) < std::tie(b.provider_id, b.ip);
    });
    r.distinct_ips = distinct.size();
    return r;
}

std::string blocklist_match_json(const BlocklistMatch& m) {
    json j;
    j["provider_id"] = m.provider_id;
    j["ip"] = m.ip.to_string();
    j["lists"] = m.lists;
    return j.dump();
}

// ---- routing events -------------------------------------------------------------------------

std::string_view routing_event_kind_name(RoutingEventKind k) {
    switch (k) {
        case RoutingEventKind::leak: return "leak";
        case RoutingEventKind::hijack: return "hijack";
        case RoutingEventKind::as_outage: return "as-outage";
    }
    return "?";
}

std::optional<RoutingEventKind> parse_routing_event_kind(std::string_view s) {
    if (s == "leak") return RoutingEventKind::leak;
    if (s == "hijack") return RoutingEventKind::hijack;
    if (s == "as-outage") return RoutingEventKind::as_outage;
    return std::nullopt;
}

std::vector<RoutingEvent> load_routing_events(const std::filesystem::path& path) {
    std::vector<RoutingEvent> out;
    const std::string src = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ParseError(src, lineno, "", "not a JSON object");
        auto need_string = [&](const char* key) {
            auto it = j.find(key);
            if (it == j.end() || !it->is_string()) throw ParseError(src, lineno, key, "expected string");
            return it->get<std::string>();
        };
        auto time_of = [&](const char* key) -> Timestamp {
            auto it = j.find(key);
            if (it == j.end()) throw ParseError(src, lineno, key, "missing");
            if (it->is_number_integer()) return it->get<Timestamp>();
            if (it->is_string()) return parse_timestamp(it->get<std::string>());
            throw ParseError(src, lineno, key, "expected timestamp");
        };
        RoutingEvent e;
        e.id = need_string("id");
        auto kind = parse_routing_event_kind(need_string("kind"));
        if (!kind) throw ParseError(src, lineno, "kind", "expected leak, hijack or as-outage");
        e.kind = *kind;
        if (auto it = j.find("prefix"); it != j.end() && !it->is_null()) {
            auto c = it->is_string() ? Cidr::parse(it->get<std::string>()) : std::nullopt;
            if (!c) throw ParseError(src, lineno, "prefix", "invalid CIDR");
            e.prefix = *c;
        }
        if (auto it = j.find("asn"); it != j.end() && !it->is_null()) {
            if (!it->is_number_unsigned() || it->get<std::uint64_t>() == 0 || it->get<std::uint64_t>() > 0xffffffffULL)
                throw ParseError(src, lineno, "asn", "expected positive 32-bit integer");
            e.asn = static_cast<std::uint32_t>(it->get<std::uint64_t>());
        }
        if (!e.prefix && !e.asn) throw ParseError(src, lineno, "", "event needs a prefix or an asn");
        try {
            e.window = StudyWindow(time_of("start"), time_of("end"));
        } catch (const ValidationError& err) {
            throw ParseError(src, lineno, "end", err.what());
        }
        out.push_back(std::move(e));
    });
    return out;
}

std::vector<RoutingOverlap> routing_event_overlap(std::span<const BackendServer> servers,
                                                  std::span<const RoutingEvent> events, const StudyWindow& study) {
    std::vector<RoutingOverlap> out;
    for (const auto& e : events) {
        RoutingOverlap o{e.id, e.kind, e.window.start < study.end && e.window.end > study.start, {}};
        if (o.in_window) {
            for (const auto& s : servers) {
                const bool by_prefix = e.prefix && s.prefix.family() == e.prefix->family() && s.prefix.overlaps(*e.prefix);
                const bool by_asn = e.asn && (s.asn == *e.asn ||
                                              std::find(s.origins.begin(), s.origins.end(), *e.asn) != s.origins.end());
                if (by_prefix || by_asn) o.servers.emplace_back(s.provider_id, s.ip);
            }
            std::sort(o.servers.begin(), o.servers.end());
        }
        out.push_back(std::move(o));
    }
    return out;
}

std::string routing_overlap_json(const RoutingOverlap& o) {
    json j;
    j["event_id"] = o.event_id;
    j["kind"] = routing_event_kind_name(o.kind);
    j["in_window"] = o.in_window;
    json servers = json::array();
    for (const auto& [p, ip] : o.servers) servers.push_back({{"provider_id", p}, {"ip", ip.to_string()}});
    j["servers"] = servers;
    return j.dump();
}

}  // namespace iotmap

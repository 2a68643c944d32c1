#include "iotmap/footprint.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "iotmap/error.hpp"
#include "iotmap/textio.hpp"

namespace iotmap {

namespace {

constexpr std::array<HintSource, 4> kHintSources{HintSource::region_token, HintSource::prefix_announcement,
                                                 HintSource::scan_metadata, HintSource::latency_probe};

std::uint32_t parse_u32(std::string_view s) {
    std::uint32_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw ParseError("", 0, "", "expected unsigned integer, got '" + std::string(s) + "'");
    return v;
}

template <typename Fn>
auto with_locus(const std::string& source, std::size_t line, Fn&& fn) {
    try {
        return fn();
    } catch (const ParseError& e) {
        throw ParseError(source, line, e.field(), e.what());
    } catch (const ValidationError& e) {
        throw ParseError(source, line, "", e.what());
    }
}

}  // namespace

std::string_view hint_source_name(HintSource s) {
    switch (s) {
        case HintSource::region_token: return "region-token";
        case HintSource::prefix_announcement: return "prefix-announcement";
        case HintSource::scan_metadata: return "scan-metadata";
        case HintSource::latency_probe: return "latency-probe";
    }
    return "?";
}

std::optional<HintSource> parse_hint_source(std::string_view s) {
    for (auto h : kHintSources)
        if (hint_source_name(h) == s) return h;
    return std::nullopt;
}

std::string_view confidence_name(Confidence c) {
    switch (c) {
        case Confidence::unanimous: return "unanimous";
        case Confidence::majority: return "majority";
        case Confidence::tiebreak: return "tiebreak";
    }
    return "?";
}

std::optional<Confidence> parse_confidence(std::string_view s) {
    for (auto c : {Confidence::unanimous, Confidence::majority, Confidence::tiebreak})
        if (confidence_name(c) == s) return c;
    return std::nullopt;
}

Located locate(const IpAddress& ip, const std::optional<std::string>& region_token,
               const std::map<std::string, Location>* region_map, std::span<const LocationHint> hints) {
    if (region_token && region_map) {
        auto it = region_map->find(*region_token);
        if (it != region_map->end()) return {it->second, Confidence::unanimous};
    }
    if (hints.empty()) throw ValidationError("unlocatable: no region token and no hints for " + ip.to_string());

    struct Tally {
        std::size_t votes = 0;
        int best_source = 99;  // lowest enum value seen
        std::set<std::string> cities;
    };
    std::map<std::string, Tally> by_country;
    for (const auto& h : hints) {
        auto& t = by_country[h.location.country];
        ++t.votes;
        t.best_source = std::min(t.best_source, static_cast<int>(h.source));
        t.cities.insert(h.location.city);
    }
    std::size_t top = 0;
    for (const auto& [c, t] : by_country) top = std::max(top, t.votes);
    std::vector<std::string> leaders;
    for (const auto& [c, t] : by_country)
        if (t.votes == top) leaders.push_back(c);

    Confidence confidence = by_country.size() == 1 ? Confidence::unanimous : Confidence::majority;
    std::string winner = leaders.front();
    if (leaders.size() > 1) {
        confidence = Confidence::tiebreak;
        for (const auto& c : leaders)  // map order makes the smaller code win equal priorities
            if (by_country[c].best_source < by_country[winner].best_source) winner = c;
    }
    const auto& cities = by_country[winner].cities;
    const std::string city = cities.size() == 1 ? *cities.begin() : std::string();
    return {Location::make(winner, city), confidence};
}

std::unordered_map<IpAddress, std::vector<LocationHint>> load_hints(const std::filesystem::path& path) {
    std::unordered_map<IpAddress, std::vector<LocationHint>> out;
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        with_locus(source, lineno, [&] {
            const auto cols = split(line, '\t');
            if (cols.size() != 4) throw ParseError("", 0, "", "expected ip<TAB>source<TAB>country<TAB>city");
            LocationHint h;
            auto ip = IpAddress::parse(cols[0]);
            if (!ip) throw ParseError("", 0, "ip", "invalid address");
            h.ip = *ip;
            auto src = parse_hint_source(cols[1]);
            if (!src) throw ParseError("", 0, "source", "unknown hint source '" + std::string(cols[1]) + "'");
            h.source = *src;
            h.location = Location::make(std::string(cols[2]), cols[3] == "-" ? std::string() : std::string(cols[3]));
            out[h.ip].push_back(std::move(h));
            return 0;
        });
    });
    return out;
}

std::vector<std::uint32_t> parse_origins(std::string_view text) {
    std::vector<std::uint32_t> out;
    std::string cleaned;
    for (char c : text)
        if (c != '{' && c != '}') cleaned += c == ',' ? '_' : c;
    for (auto part : split(cleaned, '_')) {
        const auto asn = parse_u32(trim(part));
        if (asn == 0) throw ValidationError("ASN 0 is not a valid origin");
        out.push_back(asn);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) throw ValidationError("empty origin set");
    return out;
}

void PrefixTable::add(const Cidr& prefix, std::vector<std::uint32_t> origins) {
    if (origins.empty()) throw ValidationError("prefix without origin: " + prefix.to_string());
    std::sort(origins.begin(), origins.end());
    origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
    auto& fam = family(prefix.family());
    auto& slot = fam.by_length[prefix.length()];
    if (auto it = slot.find(prefix.network()); it != slot.end()) {
        // repeated rows merge their origins
        auto& existing = entries_[it->second].origins;
        existing.insert(existing.end(), origins.begin(), origins.end());
        std::sort(existing.begin(), existing.end());
        existing.erase(std::unique(existing.begin(), existing.end()), existing.end());
        return;
    }
    slot.emplace(prefix.network(), entries_.size());
    entries_.push_back({prefix, std::move(origins)});
    if (std::find(fam.lengths.begin(), fam.lengths.end(), prefix.length()) == fam.lengths.end()) {
        fam.lengths.push_back(prefix.length());
        std::sort(fam.lengths.rbegin(), fam.lengths.rend());
    }
}

const PrefixOrigin* PrefixTable::lookup(const IpAddress& ip) const {
    const auto& fam = family(ip.family());
    for (unsigned len : fam.lengths) {
        const auto& slot = fam.by_length[len];
        if (auto it = slot.find(ip.masked(len)); it != slot.end()) return &entries_[it->second];
    }
    return nullptr;
}

PrefixTable PrefixTable::load(const std::filesystem::path& path) {
    PrefixTable table;
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        with_locus(source, lineno, [&] {
            const auto cols = split(line, '\t');
            if (cols.size() != 3) throw ParseError("", 0, "", "expected prefix<TAB>length<TAB>asn");
            auto net = IpAddress::parse(cols[0]);
            if (!net) throw ParseError("", 0, "prefix", "invalid address");
            const auto len = parse_u32(cols[1]);
            if (len > net->bit_width()) throw ParseError("", 0, "length", "prefix length out of range");
            table.add(Cidr(*net, len), parse_origins(cols[2]));
            return 0;
        });
    });
    return table;
}

const PrefixOrigin& map_prefix_asn(const IpAddress& ip, const PrefixTable& table) {
    const auto* hit = table.lookup(ip);
    if (!hit) throw ValidationError("unrouted: no covering prefix for " + ip.to_string());
    return *hit;
}

EnrichResult enrich(const CandidateSet& candidates, const std::vector<ProviderProfile>& profiles,
                    const PatternSet& patterns, std::span<const SharingVerdict> verdicts,
                    const std::unordered_map<IpAddress, std::vector<LocationHint>>& hints,
                    const PrefixTable& table) {
    std::map<std::pair<std::string, IpAddress>, const SharingVerdict*> verdict_of;
    for (const auto& v : verdicts) verdict_of[{v.provider_id, v.ip}] = &v;

    EnrichResult out;
    for (const auto& c : candidates) {
        const ProviderProfile* profile = find_profile(profiles, c.provider_id);
        const DomainPattern* pattern = patterns.find(c.provider_id);

        // region tokens carried by the names, reduced to the ones the provider documents
        std::set<std::string> tokens;
        if (pattern && profile)
            for (const auto& f : c.fqdns)
                if (auto m = match_fqdn(*pattern, f); m.region_token && profile->region_map.count(*m.region_token))
                    tokens.insert(*m.region_token);
        std::set<std::string> token_countries;
        for (const auto& t : tokens) token_countries.insert(profile->region_map.at(t).country);

        std::vector<LocationHint> ip_hints;
        if (auto it = hints.find(c.ip); it != hints.end()) ip_hints = it->second;
        std::optional<std::string> token;
        if (token_countries.size() == 1) {
            token = *tokens.begin();
        } else {
            for (const auto& t : tokens)
                ip_hints.push_back({c.ip, HintSource::region_token, profile->region_map.at(t)});
        }

        BackendServer s;
        s.ip = c.ip;
        s.provider_id = c.provider_id;
        s.sources = c.sources;
        try {
            const auto loc = locate(c.ip, token, profile ? &profile->region_map : nullptr, ip_hints);
            s.location = loc.location;
            s.location_confidence = loc.confidence;
        } catch (const ValidationError&) {
            out.failures.push_back({c.provider_id, c.ip, "unlocatable"});
            continue;
        }
        const auto* route = table.lookup(c.ip);
        if (!route) {
            out.failures.push_back({c.provider_id, c.ip, "unrouted"});
            continue;
        }
        s.prefix = route->prefix;
        s.asn = route->primary();
        s.origins = route->origins;
        if (auto it = verdict_of.find({c.provider_id, c.ip}); it != verdict_of.end()) {
            s.sharing = it->second->verdict;
        } else {
            s.sharing = Sharing::dedicated;
            s.sharing_evidence = false;
        }
        out.servers.push_back(std::move(s));
    }
    return out;
}

void write_servers(const std::filesystem::path& path, std::span<const BackendServer> servers) {
    std::ostringstream os;
    os << "# provider_id\tip\tcountry\tcity\tcontinent\tconfidence\tprefix\tasn\torigins\tsharing\tsources\n";
    for (const auto& s : servers) {
        std::string origins;
        for (auto o : s.origins) origins += (origins.empty() ? "" : "_") + std::to_string(o);
        std::string sharing(sharing_name(s.sharing));
        if (!s.sharing_evidence) sharing += "?";
        os << s.provider_id << '\t' << s.ip.to_string() << '\t' << s.location.country << '\t'
           << (s.location.city.empty() ? "-" : s.location.city) << '\t' << continent_code(s.location.continent)
           << '\t' << confidence_name(s.location_confidence) << '\t' << s.prefix.to_string() << '\t' << s.asn
           << '\t' << origins << '\t' << sharing << '\t' << format_sources(s.sources) << '\n';
    }
    write_file(path, os.str());
}

std::vector<BackendServer> read_servers(const std::filesystem::path& path) {
    std::vector<BackendServer> out;
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        with_locus(source, lineno, [&] {
            const auto cols = split(line, '\t');
            if (cols.size() != 11) throw ParseError("", 0, "", "expected 11 columns");
            BackendServer s;
            s.provider_id = std::string(cols[0]);
            s.ip = IpAddress::from_string(cols[1]);
            s.location = Location::make(std::string(cols[2]), cols[3] == "-" ? std::string() : std::string(cols[3]));
            auto conf = parse_confidence(cols[5]);
            if (!conf) throw ParseError("", 0, "confidence", "unknown value");
            s.location_confidence = *conf;
            s.prefix = Cidr::from_string(cols[6]);
            s.asn = parse_u32(cols[7]);
            s.origins = parse_origins(cols[8]);
            std::string_view sharing = cols[9];
            if (!sharing.empty() && sharing.back() == '?') {
                s.sharing_evidence = false;
                sharing.remove_suffix(1);
            }
            if (sharing == "shared") s.sharing = Sharing::shared;
            else if (sharing == "dedicated") s.sharing = Sharing::dedicated;
            else throw ParseError("", 0, "sharing", "unknown value");
            s.sources = parse_sources(cols[10]);
            if (!s.prefix.contains(s.ip)) throw ValidationError("prefix does not contain ip");
            if (s.asn == 0) throw ValidationError("asn must be positive");
            out.push_back(std::move(s));
            return 0;
        });
    });
    return out;
}

AsnClassMap AsnClassMap::load(const std::filesystem::path& path) {
    AsnClassMap map;
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        with_locus(source, lineno, [&] {
            const auto cols = split(line, '\t');
            if (cols.size() < 2) throw ParseError("", 0, "", "expected asn<TAB>class[<TAB>operator]");
            const auto asn = parse_u32(trim(cols[0]));
            const auto cls = trim(cols[1]);
            OperatorClass c;
            if (cls == "self") c = OperatorClass::self;
            else if (cls == "cloud" || cls == "cdn") c = OperatorClass::cloud;
            else if (cls == "other") c = OperatorClass::other;
            else throw ParseError("", 0, "class", "unknown class '" + std::string(cls) + "'");
            map.entries[asn] = {c, cols.size() > 2 ? std::string(trim(cols[2])) : std::string()};
            return 0;
        });
    });
    return map;
}

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::di: return "DI";
        case Strategy::pr: return "PR";
        case Strategy::di_pr: return "DI+PR";
        case Strategy::undetermined: return "undetermined";
    }
    return "?";
}

StrategyReport infer_strategy(const ProviderProfile& provider, std::span<const BackendServer> servers,
                              const AsnClassMap& org_map) {
    StrategyReport r;
    r.provider_id = provider.id;
    std::set<std::uint32_t> unmapped;
    for (const auto& s : servers) {
        if (s.provider_id != provider.id) continue;
        if (provider.org_asns.count(s.asn)) {
            ++r.self_servers;
            continue;
        }
        auto it = org_map.entries.find(s.asn);
        if (it != org_map.entries.end() && it->second.first == OperatorClass::cloud) {
            ++r.cloud_servers;
        } else {
            ++r.other_servers;
            if (it == org_map.entries.end()) unmapped.insert(s.asn);
        }
    }
    r.unmapped_asns.assign(unmapped.begin(), unmapped.end());
    if (r.self_servers && r.cloud_servers) r.strategy = Strategy::di_pr;
    else if (r.self_servers) r.strategy = Strategy::di;
    else if (r.cloud_servers) r.strategy = Strategy::pr;
    return r;
}

std::vector<StabilityDiff> diff_snapshots(const CandidateSet& a, const CandidateSet& b, Timestamp date_a,
                                          Timestamp date_b) {
    std::map<std::string, std::pair<std::set<IpAddress>, std::set<IpAddress>>> sets;
    for (const auto& c : a) sets[c.provider_id].first.insert(c.ip);
    for (const auto& c : b) sets[c.provider_id].second.insert(c.ip);
    std::vector<StabilityDiff> out;
    for (const auto& [provider, ab] : sets) {
        StabilityDiff d;
        d.provider_id = provider;
        d.date_a = date_a;
        d.date_b = date_b;
        const auto& [sa, sb] = ab;
        std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(d.in_both));
        std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(d.only_a));
        std::set_difference(sb.begin(), sb.end(), sa.begin(), sa.end(), std::back_inserter(d.only_b));
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<DiversityRow> diversity_report(std::span<const BackendServer> servers) {
    struct Acc {
        std::set<IpAddress> ips;
        std::set<std::uint32_t> asns;
        std::set<IpAddress> p24, p56;
        std::set<std::string> locations, countries;
        std::array<std::size_t, 3> confidence{};
    };
    std::map<std::string, Acc> by_provider;
    for (const auto& s : servers) {
        auto& a = by_provider[s.provider_id];
        if (!a.ips.insert(s.ip).second) continue;
        a.asns.insert(s.asn);
        (s.ip.is_v4() ? a.p24 : a.p56).insert(s.ip.masked(s.ip.is_v4() ? 24 : 56));
        a.locations.insert(s.location.key());
        a.countries.insert(s.location.country);
        ++a.confidence[static_cast<std::size_t>(s.location_confidence)];
    }
    std::vector<DiversityRow> out;
    for (const auto& [provider, a] : by_provider)
        out.push_back({provider, a.ips.size(), a.asns.size(), a.p24.size(), a.p56.size(), a.locations.size(),
                       a.countries.size(), a.confidence});
    return out;
}

}  // namespace iotmap

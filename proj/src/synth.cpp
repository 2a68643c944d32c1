#include "iotmap/synth.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "iotmap/error.hpp"
#include "iotmap/flows.hpp"
#include "iotmap/textio.hpp"
#include "json.hpp"

namespace iotmap {

using nlohmann::json;

namespace {

// ---- randomness -----------------------------------------------------------------------------

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Portable generator: results do not depend on the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t s = seed ^ (stream * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
        state_ = splitmix(s);
    }

    std::uint64_t next() { return splitmix(state_); }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }
    std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }
    bool chance(double p) { return uniform() < p; }
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }
    /// Index into weights, proportional to weight; weights must have a positive sum.
    template <class W>
    std::size_t pick(const W& weights) {
        double total = 0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (u < weights[i]) return i;
            u -= weights[i];
        }
        for (std::size_t i = weights.size(); i-- > 0;)
            if (weights[i] > 0) return i;
        return 0;
    }

private:
    std::uint64_t state_ = 0;
};

enum Stream : std::uint64_t {
    kStreamProvider = 1000,
    kStreamPopulation = 1,
    kStreamSessions = 2,
    kStreamScanners = 3,
    kStreamSampling = 4,
    kStreamBlocklists = 5,
    kStreamRouting = 6,
    kStreamExports = 7,
};

// ---- config parsing -------------------------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ValidationError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_unsigned()) throw ValidationError("");
        }
        return it->get<T>();
    } catch (const std::exception&) {
        throw ValidationError(where + "." + key + ": wrong type");
    }
}

std::vector<std::pair<std::string, double>> weight_map(const json& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object of weights");
    std::vector<std::pair<std::string, double>> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it->is_number()) throw ValidationError(where + "." + it.key() + ": expected a number");
        out.emplace_back(it.key(), it->get<double>());
    }
    return out;
}

std::string port_key(const PortWeight& p) {
    return std::to_string(p.port) + "/" + std::string(transport_name(p.transport));
}

PortWeight parse_port_key(const std::string& key, double weight, const std::string& where) {
    const auto slash = key.find('/');
    PortWeight p;
    p.weight = weight;
    unsigned long port = 0;
    try {
        port = std::stoul(key.substr(0, slash));
    } catch (const std::exception&) {
        throw ValidationError(where + ": bad port '" + key + "'");
    }
    if (port == 0 || port > 65535) throw ValidationError(where + ": port out of range '" + key + "'");
    p.port = static_cast<std::uint16_t>(port);
    if (slash != std::string::npos) {
        auto t = parse_transport(key.substr(slash + 1));
        if (!t) throw ValidationError(where + ": bad transport '" + key + "'");
        p.transport = *t;
    }
    return p;
}

constexpr std::array<const char*, 4> kRegionKeys{"eu", "us", "asia", "other"};

}  // namespace

UniverseConfig UniverseConfig::from_json(const std::string& text) {
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("universe config: not valid JSON");
    check_keys(j, {"seed", "window", "timezone", "sampling", "providers", "population", "outages", "blocklists",
                   "routing"},
               "config");
    UniverseConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", 1, "config");
    if (!j.contains("window") || !j["window"].is_string()) throw ValidationError("config.window: required string");
    c.window = StudyWindow::parse(j["window"].get<std::string>());
    c.tz = UtcOffset::parse(get_or<std::string>(j, "timezone", "UTC", "config"));
    if (auto it = j.find("sampling"); it != j.end()) {
        check_keys(*it, {"rate", "mode"}, "config.sampling");
        c.sampling_rate = get_or<std::uint32_t>(*it, "rate", 1, "config.sampling");
        const auto mode = get_or<std::string>(*it, "mode", "deterministic", "config.sampling");
        if (mode == "deterministic") c.sampling_mode = SamplingMode::deterministic;
        else if (mode == "random") c.sampling_mode = SamplingMode::random;
        else throw ValidationError("config.sampling.mode: expected deterministic or random");
    }
    if (auto it = j.find("providers"); it != j.end()) {
        if (!it->is_array()) throw ValidationError("config.providers: expected an array");
        for (const auto& pj : *it) {
            const std::string where = "config.providers[" + std::to_string(c.providers.size()) + "]";
            check_keys(pj, {"id", "servers", "ipv6_fraction", "regions", "cloud_fraction", "cloud_asn", "coverage",
                            "sni_only", "shared_fraction", "churn", "assigned_fraction", "missed_active",
                            "missed_traffic_scale", "ground_truth", "ports", "down_up_ratio"},
                       where);
            ProviderSpec p;
            p.id = get_or<std::string>(pj, "id", "", where);
            p.servers = get_or<std::size_t>(pj, "servers", 0, where);
            p.ipv6_fraction = get_or(pj, "ipv6_fraction", 0.0, where);
            if (pj.contains("regions")) p.regions = weight_map(pj["regions"], where + ".regions");
            p.cloud_fraction = get_or(pj, "cloud_fraction", 0.0, where);
            p.cloud_asn = get_or<std::uint32_t>(pj, "cloud_asn", 0, where);
            if (auto cov = pj.find("coverage"); cov != pj.end()) {
                check_keys(*cov, {"tls-cert", "passive-dns", "active-dns"}, where + ".coverage");
                p.tls_coverage = get_or(*cov, "tls-cert", 1.0, where + ".coverage");
                p.pdns_coverage = get_or(*cov, "passive-dns", 1.0, where + ".coverage");
                p.adns_coverage = get_or(*cov, "active-dns", 1.0, where + ".coverage");
            }
            p.sni_only = get_or(pj, "sni_only", false, where);
            p.shared_fraction = get_or(pj, "shared_fraction", 0.0, where);
            p.churn = get_or(pj, "churn", 0.0, where);
            p.assigned_fraction = get_or(pj, "assigned_fraction", 1.0, where);
            p.missed_active = get_or<std::size_t>(pj, "missed_active", 0, where);
            p.missed_traffic_scale = get_or(pj, "missed_traffic_scale", 0.05, where);
            p.ground_truth = get_or(pj, "ground_truth", false, where);
            if (pj.contains("ports"))
                for (const auto& [k, w] : weight_map(pj["ports"], where + ".ports"))
                    p.ports.push_back(parse_port_key(k, w, where + ".ports"));
            p.down_up_ratio = get_or(pj, "down_up_ratio", 1.0, where);
            c.providers.push_back(std::move(p));
        }
    }
    if (auto it = j.find("population"); it != j.end()) {
        const std::string where = "config.population";
        check_keys(*it, {"lines", "categories", "diurnal", "active_hours", "daily_bytes", "packet_size", "scanners",
                         "scanner_breadth", "traffic_regions"},
                   where);
        auto& pop = c.population;
        pop.lines = get_or<std::size_t>(*it, "lines", 0, where);
        if (auto cats = it->find("categories"); cats != it->end()) {
            if (!cats->is_array()) throw ValidationError(where + ".categories: expected an array");
            for (const auto& cj : *cats) {
                const std::string cw = where + ".categories[" + std::to_string(pop.categories.size()) + "]";
                check_keys(cj, {"weight", "draws", "adoption"}, cw);
                LineCategorySpec cat;
                cat.weight = get_or(cj, "weight", 1.0, cw);
                cat.draws = get_or<std::size_t>(cj, "draws", 1, cw);
                if (cj.contains("adoption")) cat.adoption = weight_map(cj["adoption"], cw + ".adoption");
                pop.categories.push_back(std::move(cat));
            }
        }
        if (auto d = it->find("diurnal"); d != it->end()) {
            if (!d->is_array() || d->size() != 24) throw ValidationError(where + ".diurnal: expected 24 numbers");
            for (std::size_t h = 0; h < 24; ++h) {
                if (!(*d)[h].is_number()) throw ValidationError(where + ".diurnal: expected 24 numbers");
                pop.diurnal[h] = (*d)[h].get<double>();
            }
        }
        pop.active_hours = get_or(*it, "active_hours", pop.active_hours, where);
        if (auto b = it->find("daily_bytes"); b != it->end()) {
            check_keys(*b, {"median", "sigma"}, where + ".daily_bytes");
            pop.daily_bytes_median = get_or(*b, "median", pop.daily_bytes_median, where + ".daily_bytes");
            pop.daily_bytes_sigma = get_or(*b, "sigma", pop.daily_bytes_sigma, where + ".daily_bytes");
        }
        if (auto s = it->find("packet_size"); s != it->end()) {
            check_keys(*s, {"min", "max"}, where + ".packet_size");
            pop.packet_size_min = get_or<std::uint32_t>(*s, "min", pop.packet_size_min, where + ".packet_size");
            pop.packet_size_max = get_or<std::uint32_t>(*s, "max", pop.packet_size_max, where + ".packet_size");
        }
        pop.scanners = get_or<std::size_t>(*it, "scanners", 0, where);
        pop.scanner_breadth = get_or<std::size_t>(*it, "scanner_breadth", 0, where);
        if (auto tr = it->find("traffic_regions"); tr != it->end()) {
            check_keys(*tr, {"eu", "us", "asia", "other"}, where + ".traffic_regions");
            std::array<double, 4> shares{};
            for (std::size_t r = 0; r < 4; ++r) shares[r] = get_or(*tr, kRegionKeys[r], 0.0, where + ".traffic_regions");
            pop.traffic_regions = shares;
        }
    }
    if (auto it = j.find("outages"); it != j.end()) {
        if (!it->is_array()) throw ValidationError("config.outages: expected an array");
        for (const auto& oj : *it) {
            const std::string where = "config.outages[" + std::to_string(c.outages.size()) + "]";
            check_keys(oj, {"provider", "location", "day", "start_hour", "hours", "drop"}, where);
            OutageSpec o;
            o.provider_id = get_or<std::string>(oj, "provider", "", where);
            o.location = get_or<std::string>(oj, "location", "", where);
            o.day = get_or<std::size_t>(oj, "day", 0, where);
            o.start_hour = get_or(oj, "start_hour", 0, where);
            o.hours = get_or(oj, "hours", 1, where);
            o.drop = get_or(oj, "drop", 0.0, where);
            c.outages.push_back(std::move(o));
        }
    }
    if (auto it = j.find("blocklists"); it != j.end()) {
        check_keys(*it, {"lists", "cidrs_per_list", "planted_hits"}, "config.blocklists");
        c.blocklists = get_or<std::size_t>(*it, "lists", 0, "config.blocklists");
        c.blocklist_cidrs = get_or<std::size_t>(*it, "cidrs_per_list", 0, "config.blocklists");
        c.blocklist_hits = get_or<std::size_t>(*it, "planted_hits", 0, "config.blocklists");
    }
    if (auto it = j.find("routing"); it != j.end()) {
        check_keys(*it, {"unrelated", "planted"}, "config.routing");
        c.routing_unrelated = get_or<std::size_t>(*it, "unrelated", 0, "config.routing");
        c.routing_planted = get_or<std::size_t>(*it, "planted", 0, "config.routing");
    }
    return c;
}

UniverseConfig UniverseConfig::load(const std::filesystem::path& path) {
    try {
        return from_json(read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string UniverseConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["window"] = window.to_string();
    j["timezone"] = tz.to_string();
    j["sampling"] = {{"rate", sampling_rate},
                     {"mode", sampling_mode == SamplingMode::deterministic ? "deterministic" : "random"}};
    j["providers"] = json::array();
    for (const auto& p : providers) {
        json pj;
        pj["id"] = p.id;
        pj["servers"] = p.servers;
        pj["ipv6_fraction"] = p.ipv6_fraction;
        pj["regions"] = json::object();
        for (const auto& [k, w] : p.regions) pj["regions"][k] = w;
        pj["cloud_fraction"] = p.cloud_fraction;
        pj["cloud_asn"] = p.cloud_asn;
        pj["coverage"] = {{"tls-cert", p.tls_coverage}, {"passive-dns", p.pdns_coverage}, {"active-dns", p.adns_coverage}};
        pj["sni_only"] = p.sni_only;
        pj["shared_fraction"] = p.shared_fraction;
        pj["churn"] = p.churn;
        pj["assigned_fraction"] = p.assigned_fraction;
        pj["missed_active"] = p.missed_active;
        pj["missed_traffic_scale"] = p.missed_traffic_scale;
        pj["ground_truth"] = p.ground_truth;
        pj["ports"] = json::object();
        for (const auto& pw : p.ports) pj["ports"][port_key(pw)] = pw.weight;
        pj["down_up_ratio"] = p.down_up_ratio;
        j["providers"].push_back(pj);
    }
    json pop;
    pop["lines"] = population.lines;
    pop["categories"] = json::array();
    for (const auto& cat : population.categories) {
        json cj{{"weight", cat.weight}, {"draws", cat.draws}, {"adoption", json::object()}};
        for (const auto& [k, w] : cat.adoption) cj["adoption"][k] = w;
        pop["categories"].push_back(cj);
    }
    pop["diurnal"] = population.diurnal;
    pop["active_hours"] = population.active_hours;
    pop["daily_bytes"] = {{"median", population.daily_bytes_median}, {"sigma", population.daily_bytes_sigma}};
    pop["packet_size"] = {{"min", population.packet_size_min}, {"max", population.packet_size_max}};
    pop["scanners"] = population.scanners;
    pop["scanner_breadth"] = population.scanner_breadth;
    if (population.traffic_regions) {
        json tr;
        for (std::size_t r = 0; r < 4; ++r) tr[kRegionKeys[r]] = (*population.traffic_regions)[r];
        pop["traffic_regions"] = tr;
    }
    j["population"] = pop;
    j["outages"] = json::array();
    for (const auto& o : outages)
        j["outages"].push_back({{"provider", o.provider_id}, {"location", o.location}, {"day", o.day},
                                {"start_hour", o.start_hour}, {"hours", o.hours}, {"drop", o.drop}});
    j["blocklists"] = {{"lists", blocklists}, {"cidrs_per_list", blocklist_cidrs}, {"planted_hits", blocklist_hits}};
    j["routing"] = {{"unrelated", routing_unrelated}, {"planted", routing_planted}};
    return j.dump(2) + "\n";
}

// ---- validation -----------------------------------------------------------------------------

namespace {

bool has_region_grammar(const ProviderProfile& p) { return !p.region.tokens.empty(); }

/// Region keys with weights, defaults filled in.
std::vector<std::pair<std::string, double>> effective_regions(const ProviderSpec& spec, const ProviderProfile& prof) {
    if (!spec.regions.empty()) return spec.regions;
    std::vector<std::pair<std::string, double>> out;
    if (has_region_grammar(prof)) {
        for (const auto& t : prof.region.tokens)
            if (prof.region_map.count(t)) out.emplace_back(t, 1.0);
    }
    if (out.empty()) out = {{"DE/Frankfurt", 1.0}, {"US/Ashburn", 1.0}};
    return out;
}

struct RegionChoice {
    std::optional<std::string> token;
    Location location;
};

RegionChoice resolve_region(const std::string& key, const ProviderProfile& prof) {
    if (has_region_grammar(prof) && key.find('/') == std::string::npos) {
        auto it = prof.region_map.find(key);
        if (it == prof.region_map.end() ||
            std::find(prof.region.tokens.begin(), prof.region.tokens.end(), key) == prof.region.tokens.end())
            throw ValidationError("provider '" + prof.id + "': region token '" + key +
                                  "' is not both in the grammar and in the region map");
        return {key, it->second};
    }
    const auto slash = key.find('/');
    if (has_region_grammar(prof) && prof.region.required)
        throw ValidationError("provider '" + prof.id + "' requires a region token, got location '" + key + "'");
    return {std::nullopt, Location::make(key.substr(0, slash), slash == std::string::npos ? "" : key.substr(slash + 1))};
}

std::vector<PortWeight> effective_ports(const ProviderSpec& spec, const ProviderProfile& prof) {
    if (!spec.ports.empty()) return spec.ports;
    std::vector<PortWeight> out;
    for (const auto& proto : prof.protocols) {
        if (!prof.dedicated_ports.empty() &&
            std::find(prof.dedicated_ports.begin(), prof.dedicated_ports.end(), proto.port) == prof.dedicated_ports.end())
            continue;
        const bool dup = std::any_of(out.begin(), out.end(), [&](const PortWeight& p) {
            return p.port == proto.port && p.transport == proto.transport;
        });
        if (!dup) out.push_back({proto.port, proto.transport, 1.0});
    }
    return out;
}

void check_fraction(double v, const std::string& what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(what + " must lie in [0, 1]");
}

}  // namespace

void validate_config(const UniverseConfig& c, const std::vector<ProviderProfile>& profiles) {
    const Timestamp span = c.window.end - c.window.start;
    if (span <= 0 || span % kDay != 0) throw ValidationError("window must span whole days");
    if (floor_div(c.tz.local(c.window.start), kDay) * kDay != c.tz.local(c.window.start))
        throw ValidationError("window must start at local midnight");
    if (c.sampling_rate < 1) throw ValidationError("sampling rate must be at least 1");
    std::set<std::string> ids;
    std::size_t dedicated_upper = 0;
    for (const auto& p : c.providers) {
        const ProviderProfile* prof = find_profile(profiles, p.id);
        if (!prof) throw ValidationError("provider '" + p.id + "' is not in the catalog");
        if (!ids.insert(p.id).second) throw ValidationError("provider '" + p.id + "' listed twice");
        if (p.servers == 0) throw ValidationError("provider '" + p.id + "' has no servers");
        const std::string w = "provider '" + p.id + "': ";
        check_fraction(p.ipv6_fraction, w + "ipv6_fraction");
        check_fraction(p.cloud_fraction, w + "cloud_fraction");
        check_fraction(p.tls_coverage, w + "tls-cert coverage");
        check_fraction(p.pdns_coverage, w + "passive-dns coverage");
        check_fraction(p.adns_coverage, w + "active-dns coverage");
        check_fraction(p.shared_fraction, w + "shared_fraction");
        check_fraction(p.assigned_fraction, w + "assigned_fraction");
        check_fraction(p.missed_traffic_scale, w + "missed_traffic_scale");
        if (!(p.churn >= 0.0 && p.churn < 1.0)) throw ValidationError(w + "churn must lie in [0, 1)");
        if (p.ipv6_fraction > 0 && !prof->ipv6_supported) throw ValidationError(w + "catalog profile has no IPv6");
        if (!(p.down_up_ratio > 0.0) || !std::isfinite(p.down_up_ratio))
            throw ValidationError(w + "down_up_ratio must be positive");
        if (p.missed_active > static_cast<std::size_t>(std::llround(p.assigned_fraction * double(p.servers))))
            throw ValidationError(w + "missed_active exceeds the assigned servers");
        double rw = 0;
        for (const auto& [key, weight] : effective_regions(p, *prof)) {
            if (!(weight >= 0)) throw ValidationError(w + "negative region weight");
            rw += weight;
            resolve_region(key, *prof);
        }
        if (!(rw > 0)) throw ValidationError(w + "region weights sum to zero");
        for (const auto& port : p.ports) {
            if (!(port.weight >= 0)) throw ValidationError(w + "negative port weight");
            if (!prof->dedicated_ports.empty() &&
                std::find(prof->dedicated_ports.begin(), prof->dedicated_ports.end(), port.port) ==
                    prof->dedicated_ports.end())
                throw ValidationError(w + "port " + std::to_string(port.port) + " is outside the dedicated ports");
        }
        dedicated_upper += p.servers;
    }
    const auto& pop = c.population;
    if (pop.lines > 0) {
        if (pop.categories.empty()) throw ValidationError("population has lines but no categories");
        double cw = 0;
        for (const auto& cat : pop.categories) {
            if (!(cat.weight >= 0)) throw ValidationError("negative category weight");
            cw += cat.weight;
            double sum = 0;
            for (const auto& [id, f] : cat.adoption) {
                if (!ids.count(id)) throw ValidationError("adoption names unknown provider '" + id + "'");
                check_fraction(f, "adoption of '" + id + "'");
                sum += f;
                const auto* spec = &*std::find_if(c.providers.begin(), c.providers.end(),
                                                  [&](const ProviderSpec& p) { return p.id == id; });
                if (f > 0 && effective_ports(*spec, *find_profile(profiles, id)).empty())
                    throw ValidationError("provider '" + id + "' is adopted but has no ports");
            }
            if (sum > 1.0 + 1e-9) throw ValidationError("adoption fractions of a line category sum above 1");
        }
        if (!(cw > 0)) throw ValidationError("category weights sum to zero");
        double dsum = 0;
        for (double d : pop.diurnal) {
            if (!(d >= 0)) throw ValidationError("diurnal multipliers must be non-negative");
            dsum += d;
        }
        if (!(dsum > 0)) throw ValidationError("diurnal multipliers sum to zero");
        if (!(pop.active_hours > 0 && pop.active_hours <= 24)) throw ValidationError("active_hours must lie in (0, 24]");
        if (!(pop.daily_bytes_median >= 1) || !(pop.daily_bytes_sigma >= 0))
            throw ValidationError("daily byte distribution needs median >= 1 and sigma >= 0");
        if (pop.packet_size_min < 1 || pop.packet_size_min > pop.packet_size_max)
            throw ValidationError("packet size range is empty");
        if (pop.traffic_regions) {
            double s = 0;
            for (double v : *pop.traffic_regions) {
                if (!(v >= 0)) throw ValidationError("negative traffic region share");
                s += v;
            }
            if (std::abs(s - 1.0) > 1e-6) throw ValidationError("traffic region shares must sum to 1");
        }
    }
    if (pop.scanners > 0) {
        if (pop.scanner_breadth == 0) throw ValidationError("scanners need a positive breadth");
        if (pop.scanner_breadth > dedicated_upper)
            throw ValidationError("scanner breadth " + std::to_string(pop.scanner_breadth) +
                                  " exceeds the server universe of " + std::to_string(dedicated_upper));
    }
    const std::size_t days = static_cast<std::size_t>(span / kDay);
    for (const auto& o : c.outages) {
        if (!ids.count(o.provider_id)) throw ValidationError("outage names unknown provider '" + o.provider_id + "'");
        if (o.day < 7 || o.day >= days) throw ValidationError("outage day needs 7 days of history inside the window");
        if (o.hours < 1 || o.start_hour < 0 || o.start_hour + o.hours > 24)
            throw ValidationError("outage hours must stay within one day");
        if (!(o.drop > 0 && o.drop < 1)) throw ValidationError("outage drop must lie in (0, 1)");
    }
}

// ---- generation -----------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kBlockHosts = 64;
constexpr std::uint32_t kScannerBytes = 64;
constexpr std::array<std::uint32_t, 4> kDefaultCloud{16509, 8075, 15169, 20940};
constexpr std::array<int, 24> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37,
                                      41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

std::string random_label(Rng& rng, std::size_t n) {
    static constexpr char kAlpha[] = "abcdefghijklmnopqrstuvwxyz";
    static constexpr char kAlnum[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string s;
    s.push_back(kAlpha[rng.below(26)]);
    while (s.size() < n) s.push_back(kAlnum[rng.below(36)]);
    return s;
}

std::string synth_fqdn(const ProviderProfile& p, const std::optional<std::string>& token, Rng& rng) {
    std::string name;
    switch (p.subdomain.rule) {
        case SubdomainRule::wildcard: name = random_label(rng, 10); break;
        case SubdomainRule::literal_set: name = p.subdomain.labels[rng.below(p.subdomain.labels.size())]; break;
        case SubdomainRule::protocol_prefixed:
            name = random_label(rng, 10) + "." + p.subdomain.labels[rng.below(p.subdomain.labels.size())];
            break;
    }
    for (const auto& l : p.service_labels) name += "." + l;
    if (token) name += "." + *token;
    return name + "." + p.parent_domain;
}

struct AddressPlan {
    std::uint32_t next_v4 = 0;
    std::uint32_t next_v6 = 0;
    struct Open {
        Cidr prefix;
        std::uint32_t used = kBlockHosts;
    };
    // per provider: (family, asn) -> open block
    std::map<std::pair<int, std::uint32_t>, Open> open;
    std::vector<std::pair<Cidr, std::uint32_t>> blocks;

    std::pair<IpAddress, Cidr> take(Family f, std::uint32_t asn) {
        auto& o = open[{static_cast<int>(f), asn}];
        if (o.used == kBlockHosts) {
            if (f == Family::v4) {
                if (next_v4 >= (1u << 16)) throw ValidationError("synthetic IPv4 space exhausted");
                o.prefix = Cidr(IpAddress::v4((10u << 24) | (next_v4++ << 8)), 24);
            } else {
                if (next_v6 >= (1u << 16)) throw ValidationError("synthetic IPv6 space exhausted");
                std::array<std::uint8_t, 16> b{0x20, 0x01, 0x0d, 0xb8};
                b[4] = static_cast<std::uint8_t>(next_v6 >> 8);
                b[5] = static_cast<std::uint8_t>(next_v6 & 0xff);
                ++next_v6;
                o.prefix = Cidr(IpAddress::v6(b), 48);
            }
            o.used = 0;
            blocks.emplace_back(o.prefix, asn);
        }
        const std::uint32_t host = ++o.used;
        if (f == Family::v4) return {IpAddress::v4(o.prefix.network().v4_value() | host), o.prefix};
        auto b = o.prefix.network().bytes();
        b[15] = static_cast<std::uint8_t>(host);
        return {IpAddress::v6(b), o.prefix};
    }
    void close_all() { open.clear(); }
};

struct Session {
    Timestamp ts = 0;
    Timestamp hour = 0;
    std::uint64_t line = 0;
    std::uint32_t server = 0;
    std::uint16_t port = 0;
    Transport transport = Transport::tcp;
    std::uint64_t up = 0, down = 0;
    std::uint32_t up_size = 1, down_size = 1;

    std::uint64_t up_packets() const { return (up + up_size - 1) / up_size; }
    std::uint64_t down_packets() const { return (down + down_size - 1) / down_size; }
};

struct RawFlow {
    Timestamp ts;
    std::uint64_t line;
    std::uint32_t server;
    std::uint16_t port;
    Transport transport;
    Direction direction;
    std::uint64_t bytes;
    std::uint64_t packets;
};

/// Bytes of the sampled packets of a flow whose packets carry floor(B/P) bytes, the first B mod P
/// one byte more. `first` is the in-flow index of the first sampled packet.
std::uint64_t sampled_bytes_of(std::uint64_t bytes, std::uint64_t packets, std::uint64_t first, std::uint64_t samples,
                               std::uint64_t n) {
    if (samples == 0 || packets == 0) return 0;
    const std::uint64_t base = bytes / packets, rem = bytes % packets;
    std::uint64_t heavy = 0;
    if (rem > first) heavy = std::min(samples, (rem - 1 - first) / n + 1);
    return samples * base + heavy;
}

}  // namespace

Universe generate(const UniverseConfig& config, const std::vector<ProviderProfile>& profiles) {
    validate_config(config, profiles);
    Universe u;
    auto& log = u.log;
    log.seed = config.seed;
    log.window = config.window;
    log.tz = config.tz;
    log.sampling_rate = config.sampling_rate;
    const std::size_t days = log.days();
    const PatternSet patterns(profiles);

    // -- servers, per provider with its own sub-seed
    AddressPlan plan;
    std::map<std::uint32_t, std::string> asn_class;
    std::vector<const ProviderProfile*> profs;
    for (std::size_t pi = 0; pi < config.providers.size(); ++pi) {
        const auto& spec = config.providers[pi];
        const ProviderProfile& prof = *find_profile(profiles, spec.id);
        profs.push_back(&prof);
        Rng rng(config.seed, kStreamProvider + pi);
        const auto regions = effective_regions(spec, prof);
        std::vector<double> region_w;
        std::vector<RegionChoice> region_c;
        for (const auto& [k, w] : regions) {
            region_w.push_back(w);
            region_c.push_back(resolve_region(k, prof));
        }
        const std::uint32_t self_asn =
            prof.org_asns.empty() ? 64512u + static_cast<std::uint32_t>(pi) : *prof.org_asns.begin();
        if (prof.org_asns.empty()) asn_class[self_asn] = "self";
        std::uint32_t cloud_asn = spec.cloud_asn;
        if (cloud_asn == 0)
            for (auto a : kDefaultCloud)
                if (!prof.org_asns.count(a)) {
                    cloud_asn = a;
                    break;
                }

        const std::size_t first_index = log.servers.size();
        auto make_server = [&](std::size_t first_day) {
            TruthServer s;
            s.provider_id = spec.id;
            const Family fam = rng.chance(spec.ipv6_fraction) ? Family::v6 : Family::v4;
            const bool cloud = rng.chance(spec.cloud_fraction);
            s.asn = cloud ? cloud_asn : self_asn;
            if (cloud && !prof.org_asns.count(s.asn)) asn_class[s.asn] = "cloud";
            std::tie(s.ip, s.prefix) = plan.take(fam, s.asn);
            const auto& region = region_c[rng.pick(region_w)];
            s.region_token = region.token;
            s.location = region.location;
            s.sharing = rng.chance(spec.shared_fraction) ? Sharing::shared : Sharing::dedicated;
            s.foreign_names = s.sharing == Sharing::shared ? 3 + rng.below(6) : rng.below(3);
            const std::size_t names = rng.chance(0.3) ? 2 : 1;
            for (std::size_t k = 0; k < names; ++k) {
                auto name = synth_fqdn(prof, s.region_token, rng);
                const auto matches = patterns.match_all(name);
                const bool ok = matches.size() == 1 && matches.front().provider_id == spec.id;
                if (!ok) throw ValidationError("synthesized name '" + name + "' is not matched by '" + spec.id + "' alone");
                if (std::find(s.fqdns.begin(), s.fqdns.end(), name) == s.fqdns.end()) s.fqdns.push_back(name);
            }
            if (!spec.sni_only && rng.chance(spec.tls_coverage)) s.visible |= source_bit(Source::tls_cert);
            if (rng.chance(spec.pdns_coverage)) s.visible |= source_bit(Source::passive_dns);
            if (rng.chance(spec.adns_coverage)) s.visible |= source_bit(Source::active_dns);
            s.first_day = first_day;
            s.last_day = days;
            log.servers.push_back(std::move(s));
        };
        for (std::size_t i = 0; i < spec.servers; ++i) make_server(0);
        if (spec.churn > 0) {
            const auto k = static_cast<std::size_t>(std::llround(spec.churn * double(spec.servers)));
            for (std::size_t d = 1; d < days; ++d) {
                ChurnDay cd;
                cd.provider_id = spec.id;
                cd.day = d;
                std::vector<std::size_t> active;
                for (std::size_t i = first_index; i < log.servers.size(); ++i)
                    if (log.servers[i].last_day == days) active.push_back(i);
                rng.shuffle(active);
                for (std::size_t r = 0; r < k && r < active.size(); ++r) {
                    log.servers[active[r]].last_day = d;
                    cd.removed.push_back(log.servers[active[r]].ip);
                }
                for (std::size_t a = 0; a < k; ++a) {
                    make_server(d);
                    cd.added.push_back(log.servers.back().ip);
                }
                std::sort(cd.added.begin(), cd.added.end());
                std::sort(cd.removed.begin(), cd.removed.end());
                log.churn.push_back(std::move(cd));
            }
        }
        // assignment to subscriber lines and servers hidden from discovery
        std::vector<std::size_t> eligible;
        for (std::size_t i = first_index; i < log.servers.size(); ++i) {
            const auto& s = log.servers[i];
            if (s.sharing == Sharing::dedicated && s.first_day == 0 && s.last_day == days) eligible.push_back(i);
        }
        rng.shuffle(eligible);
        const auto assigned = std::min<std::size_t>(
            eligible.size(), static_cast<std::size_t>(std::llround(spec.assigned_fraction * double(eligible.size()))));
        if (spec.missed_active > assigned) throw ValidationError("provider '" + spec.id + "': missed_active exceeds the assigned servers");
        for (std::size_t a = 0; a < assigned; ++a) {
            auto& s = log.servers[eligible[a]];
            s.assigned = true;
            if (a < spec.missed_active) {
                s.missed = true;
                s.visible = 0;
            }
        }
        plan.close_all();
        if (spec.ground_truth) {
            GroundTruthSet gt;
            gt.provider_id = spec.id;
            std::set<Cidr> seen;
            for (std::size_t i = first_index; i < log.servers.size(); ++i)
                if (seen.insert(log.servers[i].prefix).second) gt.prefixes.push_back(log.servers[i].prefix);
            u.ground_truth.push_back(std::move(gt));
        }
    }
    u.prefixes = plan.blocks;
    for (const auto& [asn, cls] : asn_class) u.asn_classes.emplace_back(asn, cls);

    // server ids are positions in generation order until the final sort
    const auto& servers = log.servers;
    std::unordered_map<std::string, std::size_t> provider_pos;
    for (std::size_t pi = 0; pi < config.providers.size(); ++pi) provider_pos[config.providers[pi].id] = pi;

    // -- population
    const auto& pop = config.population;
    std::vector<Session> sessions;
    std::vector<RawFlow> raw;
    if (pop.lines > 0) {
        Rng rng(config.seed, kStreamPopulation);
        struct Pair {
            std::uint64_t line;
            std::size_t provider;
            std::uint64_t daily;
            std::uint32_t hours = 0;
            std::uint32_t server = 0;
        };
        std::vector<Pair> pairs;
        std::vector<double> cat_w;
        for (const auto& c : pop.categories) cat_w.push_back(c.weight);
        for (std::size_t i = 0; i < pop.lines; ++i) {
            const auto& cat = pop.categories[rng.pick(cat_w)];
            std::set<std::size_t> adopted;
            for (std::size_t d = 0; d < cat.draws; ++d) {
                double x = rng.uniform();
                for (const auto& [id, f] : cat.adoption) {
                    if (x < f) {
                        adopted.insert(provider_pos.at(id));
                        break;
                    }
                    x -= f;
                }
            }
            for (auto p : adopted) {
                const double b = pop.daily_bytes_median * std::exp(pop.daily_bytes_sigma * rng.normal());
                pairs.push_back({i + 1, p, static_cast<std::uint64_t>(std::max(1.0, std::floor(b))), 0, 0});
            }
        }
        // active hours: Weyl sequences per hour make the hourly counts track the schedule closely
        const double dsum = std::accumulate(pop.diurnal.begin(), pop.diurnal.end(), 0.0);
        std::array<double, 24> p_h{}, alpha{}, beta{};
        for (std::size_t h = 0; h < 24; ++h) {
            p_h[h] = std::min(1.0, pop.active_hours * pop.diurnal[h] / dsum);
            alpha[h] = std::sqrt(double(kPrimes[h])) - std::floor(std::sqrt(double(kPrimes[h])));
            beta[h] = rng.uniform();
        }
        std::vector<std::size_t> ordinal(config.providers.size(), 0);
        for (auto& pr : pairs) {
            const std::size_t k = ordinal[pr.provider]++;
            for (std::size_t h = 0; h < 24; ++h) {
                const double v = double(k) * alpha[h] + beta[h];
                if (v - std::floor(v) < p_h[h]) pr.hours |= 1u << h;
            }
            if (pr.hours == 0) pr.hours = 1u << rng.pick(pop.diurnal);
            // the drawn volume belongs to a line with the mean number of active hours
            const auto active = static_cast<double>(std::popcount(pr.hours));
            pr.daily = std::max<std::uint64_t>(static_cast<std::uint64_t>(std::llround(double(pr.daily) * active / pop.active_hours)),
                                               4ull * std::popcount(pr.hours));
        }
        // home servers
        std::vector<std::vector<std::uint32_t>> assigned(config.providers.size());
        std::vector<std::array<std::vector<std::uint32_t>, 4>> assigned_by_region(config.providers.size());
        for (std::uint32_t i = 0; i < servers.size(); ++i) {
            if (!servers[i].assigned) continue;
            const auto p = provider_pos.at(servers[i].provider_id);
            assigned[p].push_back(i);
        }
        for (std::size_t p = 0; p < assigned.size(); ++p) {
            rng.shuffle(assigned[p]);
            for (auto i : assigned[p])
                assigned_by_region[p][static_cast<std::size_t>(traffic_region_of(servers[i].location))].push_back(i);
        }
        for (const auto& pr : pairs)
            if (assigned[pr.provider].empty())
                throw ValidationError("provider '" + config.providers[pr.provider].id +
                                      "' is adopted but has no servers assigned to subscriber lines");
        std::vector<std::size_t> rr(config.providers.size(), 0);
        if (pop.traffic_regions) {
            std::vector<std::size_t> order(pairs.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return pairs[a].daily > pairs[b].daily; });
            // balance every hour of the day, not only the daily totals
            std::array<std::array<double, 24>, 4> cur{};
            std::array<double, 24> total{};
            std::vector<std::array<std::size_t, 4>> rr_region(config.providers.size());
            for (auto idx : order) {
                auto& pr = pairs[idx];
                const double b = double(pr.daily) / double(std::popcount(pr.hours));
                std::optional<std::size_t> best;
                double best_deficit = 0;
                for (std::size_t r = 0; r < 4; ++r) {
                    if ((*pop.traffic_regions)[r] <= 0 || assigned_by_region[pr.provider][r].empty()) continue;
                    double deficit = 0;
                    for (std::size_t h = 0; h < 24; ++h)
                        if (pr.hours & (1u << h)) deficit += (*pop.traffic_regions)[r] * (total[h] + b) - cur[r][h];
                    if (!best || deficit > best_deficit) {
                        best = r;
                        best_deficit = deficit;
                    }
                }
                std::size_t region;
                if (best) {
                    const auto& list = assigned_by_region[pr.provider][*best];
                    pr.server = list[rr_region[pr.provider][*best]++ % list.size()];
                    region = *best;
                } else {
                    const auto& list = assigned[pr.provider];
                    pr.server = list[rr[pr.provider]++ % list.size()];
                    region = static_cast<std::size_t>(traffic_region_of(servers[pr.server].location));
                }
                for (std::size_t h = 0; h < 24; ++h) {
                    if (!(pr.hours & (1u << h))) continue;
                    cur[region][h] += b;
                    total[h] += b;
                }
            }
        } else {
            for (auto& pr : pairs) {
                const auto& list = assigned[pr.provider];
                pr.server = list[rr[pr.provider]++ % list.size()];
            }
        }
        for (auto& pr : pairs)
            if (servers[pr.server].missed)
                pr.daily = std::max<std::uint64_t>(
                    4ull * std::popcount(pr.hours),
                    static_cast<std::uint64_t>(double(pr.daily) * config.providers[pr.provider].missed_traffic_scale));

        // sessions: one per active hour and day, identical volumes every day
        Rng srng(config.seed, kStreamSessions);
        std::vector<std::vector<PortWeight>> ports(config.providers.size());
        std::vector<std::vector<double>> port_w(config.providers.size());
        for (std::size_t p = 0; p < config.providers.size(); ++p) {
            ports[p] = effective_ports(config.providers[p], *profs[p]);
            for (const auto& pw : ports[p]) port_w[p].push_back(pw.weight);
        }
        for (std::size_t d = 0; d < days; ++d) {
            for (const auto& pr : pairs) {
                const auto k = static_cast<std::uint64_t>(std::popcount(pr.hours));
                const double ratio = config.providers[pr.provider].down_up_ratio;
                const std::uint64_t per_session = pr.daily / k;
                for (std::size_t h = 0; h < 24; ++h) {
                    if (!(pr.hours & (1u << h))) continue;
                    Session s;
                    s.hour = config.window.start + static_cast<Timestamp>(d) * kDay + static_cast<Timestamp>(h) * kHour;
                    s.ts = s.hour + static_cast<Timestamp>(srng.below(kHour));
                    s.line = pr.line;
                    s.server = pr.server;
                    const auto& pw = ports[pr.provider][srng.pick(port_w[pr.provider])];
                    s.port = pw.port;
                    s.transport = pw.transport;
                    s.up = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(double(per_session) / (1.0 + ratio)));
                    s.down = static_cast<std::uint64_t>(std::llround(ratio * double(s.up)));
                    s.up_size = static_cast<std::uint32_t>(srng.between(pop.packet_size_min, pop.packet_size_max));
                    s.down_size = static_cast<std::uint32_t>(srng.between(pop.packet_size_min, pop.packet_size_max));
                    sessions.push_back(s);
                }
            }
        }

        // outages: scale the affected hours below the previous-week minimum
        for (const auto& o : config.outages) {
            std::vector<std::uint64_t> volume(days * 24, 0);
            auto affected = [&](const Session& s) {
                const auto& srv = servers[s.server];
                return srv.provider_id == o.provider_id && srv.location.key() == o.location;
            };
            for (const auto& s : sessions)
                if (affected(s)) volume[static_cast<std::size_t>((s.hour - config.window.start) / kHour)] += s.up + s.down;
            const std::size_t base_from = (o.day - 7) * 24, base_to = o.day * 24;
            const std::uint64_t baseline = *std::min_element(volume.begin() + base_from, volume.begin() + base_to);
            if (baseline == 0)
                throw ValidationError("outage on " + o.provider_id + " " + o.location + ": previous-week minimum is zero");
            const auto target = static_cast<std::uint64_t>(std::floor((1.0 - o.drop) * double(baseline)));
            const std::size_t h0 = o.day * 24 + static_cast<std::size_t>(o.start_hour);
            for (auto& s : sessions) {
                if (!affected(s)) continue;
                const auto hi = static_cast<std::size_t>((s.hour - config.window.start) / kHour);
                if (hi < h0 || hi >= h0 + static_cast<std::size_t>(o.hours) || volume[hi] <= target) continue;
                const double f = double(target) / double(volume[hi]);
                s.up = static_cast<std::uint64_t>(std::floor(double(s.up) * f));
                s.down = static_cast<std::uint64_t>(std::floor(double(s.down) * f));
            }
            OutageEvent ev;
            ev.provider_id = o.provider_id;
            ev.location = o.location;
            ev.window = StudyWindow(config.window.start + static_cast<Timestamp>(h0) * kHour,
                                    config.window.start + static_cast<Timestamp>(h0 + o.hours) * kHour);
            ev.drop = o.drop;
            ev.baseline_bytes = baseline;
            log.outages.push_back(ev);
        }

        for (const auto& s : sessions) {
            raw.push_back({s.ts, s.line, s.server, s.port, s.transport, Direction::upstream, s.up, s.up_packets()});
            raw.push_back({s.ts, s.line, s.server, s.port, s.transport, Direction::downstream, s.down, s.down_packets()});
        }
    }

    // -- scanners on dedicated lines of their own
    if (pop.scanners > 0) {
        Rng rng(config.seed, kStreamScanners);
        std::vector<std::uint32_t> targets;
        for (std::uint32_t i = 0; i < servers.size(); ++i) {
            const auto& s = servers[i];
            if (s.visible && s.sharing == Sharing::dedicated && s.first_day == 0 && s.last_day == days) targets.push_back(i);
        }
        if (pop.scanner_breadth > targets.size())
            throw ValidationError("scanner breadth " + std::to_string(pop.scanner_breadth) +
                                  " exceeds the discoverable dedicated servers (" + std::to_string(targets.size()) + ")");
        for (std::size_t k = 0; k < pop.scanners; ++k) {
            const std::uint64_t line = pop.lines + 1 + k;
            log.scanners.push_back(line);
            for (std::size_t d = 0; d < days; ++d) {
                auto pool = targets;
                for (std::size_t t = 0; t < pop.scanner_breadth; ++t) {
                    std::swap(pool[t], pool[t + rng.below(pool.size() - t)]);
                    const auto idx = pool[t];
                    const auto p = provider_pos.at(servers[idx].provider_id);
                    const auto ports = effective_ports(config.providers[p], *profs[p]);
                    const PortWeight pw = ports.empty() ? PortWeight{443, Transport::tcp, 1.0} : ports.front();
                    const Timestamp ts = config.window.start + static_cast<Timestamp>(d) * kDay +
                                         static_cast<Timestamp>(rng.below(kDay));
                    raw.push_back({ts, line, idx, pw.port, pw.transport, Direction::upstream, kScannerBytes, 1});
                }
            }
        }
    }

    // -- truth totals, keyed by (line, provider, server, port, hour)
    for (const auto& f : raw) {
        TruthFlowTotal t;
        t.line_id = f.line;
        t.provider_id = servers[f.server].provider_id;
        t.server_ip = servers[f.server].ip;
        t.port = f.port;
        t.transport = f.transport;
        t.hour = hour_start(local_hour(f.ts, config.tz), config.tz);
        if (f.direction == Direction::downstream) {
            t.down_bytes = f.bytes;
            t.down_packets = f.packets;
        } else {
            t.up_bytes = f.bytes;
            t.up_packets = f.packets;
        }
        log.flows.push_back(std::move(t));
    }
    auto key = [](const TruthFlowTotal& t) {
        return std::tie(t.line_id, t.hour, t.provider_id, t.server_ip, t.port, t.transport);
    };
    std::sort(log.flows.begin(), log.flows.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    std::vector<TruthFlowTotal> merged;
    for (auto& t : log.flows) {
        if (!merged.empty() && key(merged.back()) == key(t)) {
            auto& m = merged.back();
            m.down_bytes += t.down_bytes;
            m.up_bytes += t.up_bytes;
            m.down_packets += t.down_packets;
            m.up_packets += t.up_packets;
        } else {
            merged.push_back(std::move(t));
        }
    }
    log.flows = std::move(merged);

    // -- sampled trace in time order, 1-in-N by packet index
    std::sort(raw.begin(), raw.end(), [&](const RawFlow& a, const RawFlow& b) {
        return std::tie(a.ts, a.line, servers[a.server].ip, a.port, a.direction) <
               std::tie(b.ts, b.line, servers[b.server].ip, b.port, b.direction);
    });
    {
        const std::uint64_t n = config.sampling_rate;
        Rng rng(config.seed, kStreamSampling);
        std::uint64_t counter = 0;
        u.flows.reserve(raw.size());
        for (const auto& f : raw) {
            FlowRecord r;
            r.timestamp = f.ts;
            r.line_id = f.line;
            r.server_ip = servers[f.server].ip;
            r.server_port = f.port;
            r.transport = f.transport;
            r.direction = f.direction;
            r.sampling_rate = config.sampling_rate;
            std::uint64_t samples = 0, bytes = 0;
            if (config.sampling_mode == SamplingMode::deterministic) {
                samples = deterministic_samples(counter, f.packets, n);
                const std::uint64_t first = n - 1 - counter % n;
                bytes = sampled_bytes_of(f.bytes, f.packets, first, samples, n);
            } else {
                const double p = 1.0 / double(n);
                if (f.packets <= 256) {
                    for (std::uint64_t i = 0; i < f.packets; ++i) samples += rng.chance(p) ? 1 : 0;
                } else {
                    const double mean = double(f.packets) * p, sd = std::sqrt(mean * (1.0 - p));
                    const double x = std::llround(mean + sd * rng.normal());
                    samples = static_cast<std::uint64_t>(std::clamp(x, 0.0, double(f.packets)));
                }
                bytes = f.packets ? samples * (f.bytes / f.packets) +
                                        static_cast<std::uint64_t>(std::llround(double(samples) *
                                                                                double(f.bytes % f.packets) /
                                                                                double(f.packets)))
                                  : 0;
            }
            counter += f.packets;
            if (samples > 0xffffffffULL) throw ValidationError("sampled packet count overflows the flow record");
            r.sampled_packets = static_cast<std::uint32_t>(samples);
            r.sampled_bytes = bytes;
            u.flows.push_back(r);
        }
    }

    // -- discovery exports
    {
        Rng rng(config.seed, kStreamExports);
        const Timestamp ws = config.window.start;
        std::size_t noise = 0;
        for (const auto& s : servers) {
            const Timestamp from = ws + static_cast<Timestamp>(s.first_day) * kDay;
            const Timestamp span = static_cast<Timestamp>(s.last_day - s.first_day) * kDay;
            const std::string rrtype = s.ip.is_v4() ? "A" : "AAAA";
            if (s.visible & source_bit(Source::tls_cert)) {
                CertScanRecord c;
                c.ip = s.ip;
                c.names = s.fqdns;
                c.not_before = ws - 90 * kDay;
                c.not_after = config.window.end + 300 * kDay;
                c.observed_at = from + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(span)));
                u.certs.push_back(std::move(c));
            }
            if (s.visible & source_bit(Source::passive_dns)) {
                for (const auto& name : s.fqdns) {
                    PassiveDnsRecord r;
                    r.rrname = name;
                    r.rrtype = rrtype;
                    r.rdata = s.ip.to_string();
                    r.first_seen = from + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(span)));
                    r.last_seen = std::min(from + span - 1, r.first_seen + static_cast<Timestamp>(rng.below(kDay)));
                    u.pdns.push_back(std::move(r));
                }
            }
            if (s.visible & source_bit(Source::active_dns)) {
                for (const auto& name : s.fqdns) {
                    ResolutionResult r;
                    r.fqdn = name;
                    r.vantage_id = "synth-1";
                    r.answers = {s.ip};
                    r.resolved_at = from + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(span)));
                    r.status = ResolutionStatus::ok;
                    u.resolutions.push_back(std::move(r));
                }
            }
            for (const auto& name : s.fqdns)
                u.reverse.push_back({name, rrtype, s.ip.to_string(), ws, config.window.end - 1});
            for (std::size_t k = 0; k < s.foreign_names; ++k) {
                std::string name = random_label(rng, 8) + ".site" + std::to_string(noise++) + ".example";
                u.reverse.push_back({std::move(name), rrtype, s.ip.to_string(), ws, config.window.end - 1});
            }
            u.hints.push_back({s.ip, HintSource::scan_metadata, s.location});
        }
        // records that must not become observations
        for (std::size_t k = 0; k < servers.size() / 20; ++k) {
            const auto& s = servers[rng.below(servers.size())];
            u.pdns.push_back({"cdn" + std::to_string(k) + ".example", "A", "172.16.0." + std::to_string(1 + k % 250),
                              ws, ws + kDay});
            if (!s.fqdns.empty()) {
                u.pdns.push_back({s.fqdns.front(), "CNAME", "alias" + std::to_string(k) + ".example", ws, ws + kDay});
                ResolutionResult r;
                r.fqdn = "gone" + std::to_string(k) + "." + find_profile(profiles, s.provider_id)->parent_domain;
                r.vantage_id = "synth-1";
                r.resolved_at = ws + static_cast<Timestamp>(rng.below(kDay));
                r.status = ResolutionStatus::nxdomain;
                u.resolutions.push_back(std::move(r));
            }
        }
        bool churned = false;
        for (const auto& p : config.providers) churned = churned || p.churn > 0;
        if (churned) {
            for (std::size_t d = 0; d < days; ++d) {
                auto& day = u.daily_certs[d];
                for (const auto& s : servers) {
                    if (!(s.visible & source_bit(Source::tls_cert)) || d < s.first_day || d >= s.last_day) continue;
                    CertScanRecord c;
                    c.ip = s.ip;
                    c.names = s.fqdns;
                    c.not_before = ws - 90 * kDay;
                    c.not_after = config.window.end + 300 * kDay;
                    c.observed_at = ws + static_cast<Timestamp>(d) * kDay + static_cast<Timestamp>(rng.below(kDay));
                    day.push_back(std::move(c));
                }
            }
        }
    }

    // -- blocklists: random space outside the server blocks plus planted host entries
    std::vector<std::size_t> discovered;
    for (std::size_t i = 0; i < servers.size(); ++i)
        if (servers[i].visible) discovered.push_back(i);
    if (config.blocklists > 0) {
        Rng rng(config.seed, kStreamBlocklists);
        std::vector<std::string> names;
        for (std::size_t l = 0; l < config.blocklists; ++l) {
            names.push_back("synth-list-" + std::to_string(l + 1));
            auto& list = u.blocklists[names.back()];
            for (std::size_t k = 0; k < config.blocklist_cidrs; ++k) {
                const auto len = static_cast<unsigned>(rng.between(16, 32));
                const std::uint32_t addr = (172u << 24) | (16u << 16) | static_cast<std::uint32_t>(rng.below(1u << 20));
                list.push_back(Cidr(IpAddress::v4(addr).masked(len), len));
            }
        }
        if (config.blocklist_hits > discovered.size())
            throw ValidationError("more planted blocklist hits than discoverable servers");
        auto pool = discovered;
        for (std::size_t k = 0; k < config.blocklist_hits; ++k) {
            std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
            const auto& s = servers[pool[k]];
            const auto& list = names[rng.below(names.size())];
            u.blocklists[list].push_back(Cidr(s.ip, s.ip.is_v4() ? 32 : 128));
            log.blocklist_hits.push_back({list, s.provider_id, s.ip});
        }
    } else if (config.blocklist_hits > 0) {
        throw ValidationError("planted blocklist hits need at least one list");
    }

    // -- routing events
    if (config.routing_unrelated + config.routing_planted > 0) {
        Rng rng(config.seed, kStreamRouting);
        const Timestamp ws = config.window.start, we = config.window.end;
        std::size_t id = 0;
        auto next_id = [&] { return "synth-evt-" + std::to_string(++id); };
        for (std::size_t k = 0; k < config.routing_unrelated; ++k) {
            RoutingEvent e;
            e.id = next_id();
            const auto kind = rng.below(3);
            const Timestamp start = ws - kDay + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(we - ws + kDay)));
            e.window = StudyWindow(start, start + kHour + static_cast<Timestamp>(rng.below(6 * kHour)));
            if (kind == 2) {
                e.kind = RoutingEventKind::as_outage;
                e.asn = 4200000000u + static_cast<std::uint32_t>(k);
            } else {
                e.kind = kind == 0 ? RoutingEventKind::leak : RoutingEventKind::hijack;
                const std::uint32_t addr = (172u << 24) | (16u << 16) | static_cast<std::uint32_t>(rng.below(1u << 20));
                e.prefix = Cidr(IpAddress::v4(addr).masked(24), 24);
            }
            u.routing_events.push_back(std::move(e));
        }
        std::vector<Cidr> blocks;
        for (auto i : discovered)
            if (std::find(blocks.begin(), blocks.end(), servers[i].prefix) == blocks.end()) blocks.push_back(servers[i].prefix);
        if (config.routing_planted > blocks.size())
            throw ValidationError("more planted routing events than discoverable prefixes");
        for (std::size_t k = 0; k < config.routing_planted; ++k) {
            std::swap(blocks[k], blocks[k + rng.below(blocks.size() - k)]);
            RoutingEvent e;
            e.id = next_id();
            const Timestamp start = ws + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(we - ws - kHour)));
            e.window = StudyWindow(start, start + kHour);
            if (k % 3 == 2) {
                e.kind = RoutingEventKind::as_outage;
                for (const auto& [cidr, asn] : u.prefixes)
                    if (cidr == blocks[k]) e.asn = asn;
            } else {
                e.kind = k % 3 == 0 ? RoutingEventKind::hijack : RoutingEventKind::leak;
                e.prefix = blocks[k];
            }
            log.routing_planted.push_back(e.id);
            u.routing_events.push_back(std::move(e));
        }
    }

    std::sort(log.servers.begin(), log.servers.end(), [](const TruthServer& a, const TruthServer& b) {
        return std::tie(a.provider_id, a.ip) < std::tie(b.provider_id, b.ip);
    });
    std::sort(log.blocklist_hits.begin(), log.blocklist_hits.end(), [](const auto& a, const auto& b) {
        return std::tie(a.provider_id, a.ip, a.list_id) < std::tie(b.provider_id, b.ip, b.list_id);
    });
    return u;
}

// ---- files ----------------------------------------------------------------------------------

namespace {

template <class T, class F>
std::string lines_of(const std::vector<T>& rows, F fn) {
    std::string out;
    for (const auto& r : rows) {
        out += fn(r);
        out += '\n';
    }
    return out;
}

std::string routing_event_line(const RoutingEvent& e) {
    json j;
    j["id"] = e.id;
    j["kind"] = std::string(routing_event_kind_name(e.kind));
    if (e.prefix) j["prefix"] = e.prefix->to_string();
    if (e.asn) j["asn"] = *e.asn;
    j["start"] = format_timestamp(e.window.start);
    j["end"] = format_timestamp(e.window.end);
    return j.dump();
}

}  // namespace

void write_universe(const std::filesystem::path& dir, const Universe& u) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_file(dir / UniverseFiles::certs, lines_of(u.certs, cert_scan_line));
    write_file(dir / UniverseFiles::pdns, lines_of(u.pdns, passive_dns_line));
    write_file(dir / UniverseFiles::resolutions, lines_of(u.resolutions, resolution_line));
    write_file(dir / UniverseFiles::reverse, lines_of(u.reverse, passive_dns_line));
    write_file(dir / UniverseFiles::hints,
               "# ip\tsource\tcountry\tcity\n" + lines_of(u.hints, [](const LocationHint& h) {
                   return h.ip.to_string() + "\t" + std::string(hint_source_name(h.source)) + "\t" + h.location.country +
                          "\t" + (h.location.city.empty() ? "-" : h.location.city);
               }));
    write_file(dir / UniverseFiles::prefixes,
               "# prefix\tlength\tasn\n" + lines_of(u.prefixes, [](const std::pair<Cidr, std::uint32_t>& p) {
                   return p.first.network().to_string() + "\t" + std::to_string(p.first.length()) + "\t" +
                          std::to_string(p.second);
               }));
    write_file(dir / UniverseFiles::asn_classes,
               "# asn\tclass\toperator\n" + lines_of(u.asn_classes, [](const std::pair<std::uint32_t, std::string>& a) {
                   return std::to_string(a.first) + "\t" + a.second + "\tsynthetic";
               }));
    std::string gt = "# provider\tcidr\n";
    for (const auto& set : u.ground_truth)
        for (const auto& c : set.prefixes) gt += set.provider_id + "\t" + c.to_string() + "\n";
    write_file(dir / UniverseFiles::ground_truth, gt);
    write_flows(dir / UniverseFiles::flows, u.flows, FlowWriter::Format::binary);
    write_file(dir / UniverseFiles::routing, lines_of(u.routing_events, routing_event_line));
    if (!u.daily_certs.empty()) {
        std::filesystem::create_directories(dir / UniverseFiles::snapshots);
        for (const auto& [d, certs] : u.daily_certs)
            write_file(dir / UniverseFiles::snapshots /
                           ("certs-" + format_date(u.log.tz.local(u.log.window.start + static_cast<Timestamp>(d) * kDay)) + ".jsonl"),
                       lines_of(certs, cert_scan_line));
    }
    if (!u.blocklists.empty()) {
        std::filesystem::create_directories(dir / UniverseFiles::blocklists);
        for (const auto& [name, cidrs] : u.blocklists)
            write_file(dir / UniverseFiles::blocklists / (name + ".netset"),
                       "# synthetic list " + name + "\n" + lines_of(cidrs, [](const Cidr& c) { return c.to_string(); }));
    }
    write_truth_log(dir, u.log);
}

// ---- ground-truth log -----------------------------------------------------------------------

void write_truth_log(const std::filesystem::path& dir, const GroundTruthLog& log) {
    json j;
    j["format"] = "iotmap-truth/1";
    j["seed"] = log.seed;
    j["window"] = log.window.to_string();
    j["timezone"] = log.tz.to_string();
    j["sampling_rate"] = log.sampling_rate;
    j["flow_totals"] = "truth_flows.tsv";
    j["servers"] = json::array();
    for (const auto& s : log.servers) {
        json sj;
        sj["provider"] = s.provider_id;
        sj["ip"] = s.ip.to_string();
        sj["fqdns"] = s.fqdns;
        sj["region_token"] = s.region_token ? json(*s.region_token) : json(nullptr);
        sj["country"] = s.location.country;
        sj["city"] = s.location.city;
        sj["asn"] = s.asn;
        sj["prefix"] = s.prefix.to_string();
        sj["sharing"] = std::string(sharing_name(s.sharing));
        sj["foreign_names"] = s.foreign_names;
        sj["visible"] = format_sources(s.visible);
        sj["assigned"] = s.assigned;
        sj["missed"] = s.missed;
        sj["first_day"] = s.first_day;
        sj["last_day"] = s.last_day;
        j["servers"].push_back(std::move(sj));
    }
    j["scanners"] = log.scanners;
    j["outages"] = json::array();
    for (const auto& o : log.outages)
        j["outages"].push_back({{"provider", o.provider_id}, {"location", o.location},
                                {"start", format_timestamp(o.window.start)}, {"end", format_timestamp(o.window.end)},
                                {"drop", o.drop}, {"baseline_bytes", o.baseline_bytes}});
    j["churn"] = json::array();
    for (const auto& c : log.churn) {
        json cj{{"provider", c.provider_id}, {"day", c.day}, {"added", json::array()}, {"removed", json::array()}};
        for (const auto& ip : c.added) cj["added"].push_back(ip.to_string());
        for (const auto& ip : c.removed) cj["removed"].push_back(ip.to_string());
        j["churn"].push_back(std::move(cj));
    }
    j["blocklist_hits"] = json::array();
    for (const auto& h : log.blocklist_hits)
        j["blocklist_hits"].push_back({{"list", h.list_id}, {"provider", h.provider_id}, {"ip", h.ip.to_string()}});
    j["routing_planted"] = log.routing_planted;
    write_file(dir / "truth.json", j.dump(1) + "\n");

    std::string tsv = "# line_id\tprovider\tserver_ip\tport\ttransport\thour\tdown_bytes\tup_bytes\tdown_packets\tup_packets\n";
    for (const auto& f : log.flows) {
        tsv += std::to_string(f.line_id);
        tsv += '\t' + f.provider_id + '\t' + f.server_ip.to_string() + '\t' + std::to_string(f.port) + '\t' +
               std::string(transport_name(f.transport)) + '\t' + std::to_string(f.hour) + '\t' +
               std::to_string(f.down_bytes) + '\t' + std::to_string(f.up_bytes) + '\t' +
               std::to_string(f.down_packets) + '\t' + std::to_string(f.up_packets) + '\n';
    }
    write_file(dir / "truth_flows.tsv", tsv);
}

GroundTruthLog read_truth_log(const std::filesystem::path& dir) {
    const auto path = dir / "truth.json";
    const json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("format", "") != "iotmap-truth/1")
        throw ParseError(path.string(), 0, "", "not a ground-truth log");
    GroundTruthLog log;
    try {
        log.seed = j.at("seed").get<std::uint64_t>();
        log.window = StudyWindow::parse(j.at("window").get<std::string>());
        log.tz = UtcOffset::parse(j.at("timezone").get<std::string>());
        log.sampling_rate = j.at("sampling_rate").get<std::uint32_t>();
        for (const auto& sj : j.at("servers")) {
            TruthServer s;
            s.provider_id = sj.at("provider").get<std::string>();
            s.ip = IpAddress::from_string(sj.at("ip").get<std::string>());
            s.fqdns = sj.at("fqdns").get<std::vector<std::string>>();
            if (!sj.at("region_token").is_null()) s.region_token = sj.at("region_token").get<std::string>();
            s.location = Location::make(sj.at("country").get<std::string>(), sj.at("city").get<std::string>());
            s.asn = sj.at("asn").get<std::uint32_t>();
            s.prefix = Cidr::from_string(sj.at("prefix").get<std::string>());
            s.sharing = sj.at("sharing").get<std::string>() == "shared" ? Sharing::shared : Sharing::dedicated;
            s.foreign_names = sj.at("foreign_names").get<std::size_t>();
            const auto visible = sj.at("visible").get<std::string>();
            s.visible = visible.empty() ? 0 : parse_sources(visible);
            s.assigned = sj.at("assigned").get<bool>();
            s.missed = sj.at("missed").get<bool>();
            s.first_day = sj.at("first_day").get<std::size_t>();
            s.last_day = sj.at("last_day").get<std::size_t>();
            log.servers.push_back(std::move(s));
        }
        log.scanners = j.at("scanners").get<std::vector<std::uint64_t>>();
        for (const auto& oj : j.at("outages")) {
            OutageEvent o;
            o.provider_id = oj.at("provider").get<std::string>();
            o.location = oj.at("location").get<std::string>();
            o.window = StudyWindow(parse_timestamp(oj.at("start").get<std::string>()),
                                   parse_timestamp(oj.at("end").get<std::string>()));
            o.drop = oj.at("drop").get<double>();
            o.baseline_bytes = oj.at("baseline_bytes").get<std::uint64_t>();
            log.outages.push_back(std::move(o));
        }
        for (const auto& cj : j.at("churn")) {
            ChurnDay c;
            c.provider_id = cj.at("provider").get<std::string>();
            c.day = cj.at("day").get<std::size_t>();
            for (const auto& ip : cj.at("added")) c.added.push_back(IpAddress::from_string(ip.get<std::string>()));
            for (const auto& ip : cj.at("removed")) c.removed.push_back(IpAddress::from_string(ip.get<std::string>()));
            log.churn.push_back(std::move(c));
        }
        for (const auto& hj : j.at("blocklist_hits"))
            log.blocklist_hits.push_back({hj.at("list").get<std::string>(), hj.at("provider").get<std::string>(),
                                          IpAddress::from_string(hj.at("ip").get<std::string>())});
        log.routing_planted = j.at("routing_planted").get<std::vector<std::string>>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(path.string(), 0, "", e.what());
    }

    const auto tsv = dir / "truth_flows.tsv";
    const std::string src = tsv.string();
    for_each_data_line(tsv, [&](std::size_t lineno, std::string_view line) {
        const auto cols = split(line, '\t');
        if (cols.size() != 10) throw ParseError(src, lineno, "", "expected 10 columns");
        auto num = [&](std::size_t i, const char* field) {
            std::uint64_t v = 0;
            const auto* b = cols[i].data();
            const auto [p, ec] = std::from_chars(b, b + cols[i].size(), v);
            if (ec != std::errc() || p != b + cols[i].size()) throw ParseError(src, lineno, field, "expected integer");
            return v;
        };
        TruthFlowTotal t;
        t.line_id = num(0, "line_id");
        t.provider_id = std::string(cols[1]);
        auto ip = IpAddress::parse(cols[2]);
        if (!ip) throw ParseError(src, lineno, "server_ip", "invalid address");
        t.server_ip = *ip;
        t.port = static_cast<std::uint16_t>(num(3, "port"));
        auto tr = parse_transport(cols[4]);
        if (!tr) throw ParseError(src, lineno, "transport", "expected tcp or udp");
        t.transport = *tr;
        t.hour = static_cast<Timestamp>(num(5, "hour"));
        t.down_bytes = num(6, "down_bytes");
        t.up_bytes = num(7, "up_bytes");
        t.down_packets = num(8, "down_packets");
        t.up_packets = num(9, "up_packets");
        log.flows.push_back(std::move(t));
    });
    return log;
}

}  // namespace iotmap

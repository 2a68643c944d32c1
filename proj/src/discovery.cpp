#include "iotmap/discovery.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "iotmap/error.hpp"
#include "iotmap/textio.hpp"

namespace iotmap {

using nlohmann::json;

namespace {

struct LineCtx {
    const std::string& source;
    std::size_t line;
};

[[noreturn]] void fail(const LineCtx& c, const std::string& field, const std::string& what) {
    throw ParseError(c.source, c.line, field, what);
}

const json& need(const LineCtx& c, const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(c, key, "missing");
    return *it;
}

Timestamp time_field(const LineCtx& c, const json& v, const char* key) {
    if (v.is_number_integer()) return v.get<Timestamp>();
    if (v.is_string()) {
        try {
            return parse_timestamp(v.get<std::string>());
        } catch (const ParseError& e) {
            fail(c, key, e.what());
        }
    }
    fail(c, key, "expected timestamp");
}

std::string string_field(const LineCtx& c, const json& v, const char* key) {
    if (!v.is_string()) fail(c, key, "expected string");
    return v.get<std::string>();
}

IpAddress ip_field(const LineCtx& c, const json& v, const char* key) {
    auto ip = IpAddress::parse(string_field(c, v, key));
    if (!ip) fail(c, key, "invalid address '" + v.get<std::string>() + "'");
    return *ip;
}

json parse_object(const LineCtx& c, std::string_view line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(c, "", "not a JSON object");
    return j;
}

CertScanRecord parse_cert(const LineCtx& c, std::string_view line) {
    const json j = parse_object(c, line);
    CertScanRecord r;
    r.ip = ip_field(c, need(c, j, "ip"), "ip");
    if (auto it = j.find("port"); it != j.end()) {
        if (!it->is_number_unsigned() || it->get<std::uint64_t>() == 0 || it->get<std::uint64_t>() > 65535)
            fail(c, "port", "expected 1..65535");
        r.port = static_cast<std::uint16_t>(it->get<std::uint64_t>());
    }
    const json& names = need(c, j, "names");
    if (!names.is_array()) fail(c, "names", "expected array");
    for (const auto& n : names) {
        if (!n.is_string()) fail(c, "names", "expected strings");
        r.names.push_back(normalize_fqdn(n.get<std::string>()));
    }
    const json& validity = need(c, j, "validity");
    if (!validity.is_object()) fail(c, "validity", "expected object");
    r.not_before = time_field(c, need(c, validity, "start"), "validity.start");
    r.not_after = time_field(c, need(c, validity, "end"), "validity.end");
    if (r.not_before > r.not_after) fail(c, "validity", "start after end");
    r.observed_at = time_field(c, need(c, j, "observed_at"), "observed_at");
    return r;
}

void parse_pdns(const LineCtx& c, std::string_view line, std::vector<PassiveDnsRecord>& out) {
    const json j = parse_object(c, line);
    PassiveDnsRecord base;
    base.rrname = normalize_fqdn(string_field(c, need(c, j, "rrname"), "rrname"));
    base.rrtype = string_field(c, need(c, j, "rrtype"), "rrtype");
    base.first_seen = time_field(c, need(c, j, "time_first"), "time_first");
    base.last_seen = time_field(c, need(c, j, "time_last"), "time_last");
    if (base.first_seen > base.last_seen) fail(c, "time_first", "after time_last");
    const json& rdata = need(c, j, "rdata");
    std::vector<std::string> values;
    if (rdata.is_string()) {
        values.push_back(rdata.get<std::string>());
    } else if (rdata.is_array()) {
        for (const auto& v : rdata) values.push_back(string_field(c, v, "rdata"));
    } else {
        fail(c, "rdata", "expected string or array");
    }
    for (auto& v : values) {
        PassiveDnsRecord r = base;
        r.rdata = std::move(v);
        if (r.rrtype == "A" || r.rrtype == "AAAA") {
            auto ip = IpAddress::parse(r.rdata);
            if (!ip || (ip->is_v4() != (r.rrtype == "A"))) fail(c, "rdata", "not an address of type " + r.rrtype);
        }
        out.push_back(std::move(r));
    }
}

ResolutionResult parse_resolution(const LineCtx& c, std::string_view line) {
    const json j = parse_object(c, line);
    ResolutionResult r;
    r.fqdn = normalize_fqdn(string_field(c, need(c, j, "fqdn"), "fqdn"));
    r.vantage_id = string_field(c, need(c, j, "vantage"), "vantage");
    r.resolved_at = time_field(c, need(c, j, "resolved_at"), "resolved_at");
    auto status = parse_resolution_status(string_field(c, need(c, j, "status"), "status"));
    if (!status) fail(c, "status", "unknown status");
    r.status = *status;
    const json& answers = need(c, j, "answers");
    if (!answers.is_array()) fail(c, "answers", "expected array");
    for (const auto& a : answers) r.answers.push_back(ip_field(c, a, "answers"));
    if (r.answers.empty() != (r.status != ResolutionStatus::ok))
        fail(c, "answers", "must be non-empty exactly when status is ok");
    return r;
}

template <typename Fn>
void read_lines(const std::filesystem::path& path, IngestStats& stats, ReadOptions opts, Fn&& fn) {
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        ++stats.records;
        try {
            fn(LineCtx{source, lineno}, line);
        } catch (const ParseError&) {
            if (opts.strict) throw;
            ++stats.malformed;
        }
    });
}

bool is_wildcard(std::string_view name) { return name.size() > 2 && name[0] == '*' && name[1] == '.'; }

// Matches one name against every pattern, appending one observation per provider.
void emit(const PatternSet& patterns, const std::string& name, const IpAddress& ip, Source source,
          Timestamp seen_at, std::vector<Observation>& out, IngestStats& stats) {
    const auto matches = patterns.match_all(name);
    if (matches.empty()) {
        ++stats.unmatched_names;
        return;
    }
    if (matches.size() > 1) ++stats.multi_match_names;
    for (const auto& m : matches) {
        out.push_back({m.provider_id, m.normalized_fqdn, ip, source, seen_at, is_wildcard(m.normalized_fqdn)});
        ++stats.emitted;
    }
}

json time_json(Timestamp t) { return t; }

}  // namespace

std::string_view source_name(Source s) {
    switch (s) {
        case Source::tls_cert: return "tls-cert";
        case Source::passive_dns: return "passive-dns";
        case Source::active_dns: return "active-dns";
    }
    return "?";
}

std::optional<Source> parse_source(std::string_view s) {
    if (s == "tls-cert") return Source::tls_cert;
    if (s == "passive-dns") return Source::passive_dns;
    if (s == "active-dns") return Source::active_dns;
    return std::nullopt;
}

std::string_view resolution_status_name(ResolutionStatus s) {
    switch (s) {
        case ResolutionStatus::ok: return "ok";
        case ResolutionStatus::nxdomain: return "nxdomain";
        case ResolutionStatus::timeout: return "timeout";
        case ResolutionStatus::servfail: return "servfail";
    }
    return "?";
}

std::optional<ResolutionStatus> parse_resolution_status(std::string_view s) {
    for (auto st : {ResolutionStatus::ok, ResolutionStatus::nxdomain, ResolutionStatus::timeout,
                    ResolutionStatus::servfail})
        if (resolution_status_name(st) == s) return st;
    return std::nullopt;
}

IngestStats& IngestStats::operator+=(const IngestStats& o) {
    records += o.records;
    malformed += o.malformed;
    outside_window += o.outside_window;
    skipped_rrtype += o.skipped_rrtype;
    unmatched_names += o.unmatched_names;
    multi_match_names += o.multi_match_names;
    not_ok += o.not_ok;
    emitted += o.emitted;
    return *this;
}

std::string IngestStats::summary() const {
    std::ostringstream os;
    os << "records=" << records << " malformed=" << malformed << " outside_window=" << outside_window
       << " skipped_rrtype=" << skipped_rrtype << " unmatched_names=" << unmatched_names
       << " multi_match_names=" << multi_match_names << " not_ok=" << not_ok << " emitted=" << emitted;
    return os.str();
}

std::vector<CertScanRecord> read_cert_scan(const std::filesystem::path& path, IngestStats& stats,
                                           ReadOptions opts) {
    std::vector<CertScanRecord> out;
    read_lines(path, stats, opts, [&](const LineCtx& c, std::string_view line) { out.push_back(parse_cert(c, line)); });
    return out;
}

std::vector<PassiveDnsRecord> read_passive_dns(const std::filesystem::path& path, IngestStats& stats,
                                               ReadOptions opts) {
    std::vector<PassiveDnsRecord> out;
    read_lines(path, stats, opts, [&](const LineCtx& c, std::string_view line) { parse_pdns(c, line, out); });
    return out;
}

std::vector<PassiveDnsRecord> parse_passive_dns_lines(std::string_view body, const std::string& source,
                                                      IngestStats& stats, ReadOptions opts) {
    std::vector<PassiveDnsRecord> out;
    std::size_t lineno = 0;
    for (auto raw : split(body, '\n')) {
        ++lineno;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        ++stats.records;
        try {
            parse_pdns(LineCtx{source, lineno}, line, out);
        } catch (const ParseError&) {
            if (opts.strict) throw;
            ++stats.malformed;
        }
    }
    return out;
}

std::vector<ResolutionResult> read_resolutions(const std::filesystem::path& path, IngestStats& stats,
                                               ReadOptions opts) {
    std::vector<ResolutionResult> out;
    read_lines(path, stats, opts,
               [&](const LineCtx& c, std::string_view line) { out.push_back(parse_resolution(c, line)); });
    return out;
}

std::string cert_scan_line(const CertScanRecord& r) {
    json j = {{"ip", r.ip.to_string()},
              {"port", r.port},
              {"names", r.names},
              {"validity", {{"start", time_json(r.not_before)}, {"end", time_json(r.not_after)}}},
              {"observed_at", time_json(r.observed_at)}};
    return j.dump();
}

std::string passive_dns_line(const PassiveDnsRecord& r) {
    json j = {{"rrname", r.rrname},
              {"rrtype", r.rrtype},
              {"rdata", r.rdata},
              {"time_first", time_json(r.first_seen)},
              {"time_last", time_json(r.last_seen)}};
    return j.dump();
}

std::string resolution_line(const ResolutionResult& r) {
    json answers = json::array();
    for (const auto& a : r.answers) answers.push_back(a.to_string());
    json j = {{"fqdn", r.fqdn},
              {"vantage", r.vantage_id},
              {"resolved_at", time_json(r.resolved_at)},
              {"status", resolution_status_name(r.status)},
              {"answers", answers}};
    return j.dump();
}

std::vector<Observation> ingest_cert_scan(std::span<const CertScanRecord> records, const PatternSet& patterns,
                                          const StudyWindow& window, IngestStats* stats) {
    IngestStats local;
    std::vector<Observation> out;
    for (const auto& r : records) {
        if (!window.overlaps(r.not_before, r.not_after) || !window.contains(r.observed_at)) {
            ++local.outside_window;
            continue;
        }
        std::vector<std::string> names = r.names;
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        for (const auto& name : names) emit(patterns, name, r.ip, Source::tls_cert, r.observed_at, out, local);
    }
    if (stats) *stats += local;
    return out;
}

std::vector<Observation> ingest_passive_dns(std::span<const PassiveDnsRecord> records, const PatternSet& patterns,
                                            const StudyWindow& window, IngestStats* stats) {
    IngestStats local;
    std::vector<Observation> out;
    for (const auto& r : records) {
        if (r.rrtype != "A" && r.rrtype != "AAAA") {
            ++local.skipped_rrtype;
            continue;
        }
        if (!window.overlaps(r.first_seen, r.last_seen)) {
            ++local.outside_window;
            continue;
        }
        const auto ip = IpAddress::parse(r.rdata);
        if (!ip || ip->is_v4() != (r.rrtype == "A")) {
            ++local.malformed;
            continue;
        }
        emit(patterns, r.rrname, *ip, Source::passive_dns, std::max(r.first_seen, window.start), out, local);
    }
    if (stats) *stats += local;
    return out;
}

std::vector<Observation> ingest_resolutions(std::span<const ResolutionResult> results, const PatternSet& patterns,
                                            const StudyWindow& window, IngestStats* stats) {
    IngestStats local;
    std::vector<Observation> out;
    for (const auto& r : results) {
        if (r.status != ResolutionStatus::ok || r.answers.empty()) {
            ++local.not_ok;
            continue;
        }
        if (!window.contains(r.resolved_at)) {
            ++local.outside_window;
            continue;
        }
        for (const auto& ip : r.answers) emit(patterns, r.fqdn, ip, Source::active_dns, r.resolved_at, out, local);
    }
    if (stats) *stats += local;
    return out;
}

void canonicalize(std::vector<Observation>& obs) {
    std::sort(obs.begin(), obs.end());
    obs.erase(std::unique(obs.begin(), obs.end()), obs.end());
}

void write_observations(std::ostream& out, std::span<const Observation> obs) {
    out << "# provider_id\tfqdn\tip\tsource\tseen_at\tflags\n";
    for (const auto& o : obs)
        out << o.provider_id << '\t' << o.fqdn << '\t' << o.ip.to_string() << '\t' << source_name(o.source) << '\t'
            << format_timestamp(o.seen_at) << '\t' << (o.wildcard_name ? "wildcard-name" : "-") << '\n';
}

void write_observations(const std::filesystem::path& path, std::span<const Observation> obs) {
    std::ostringstream os;
    write_observations(os, obs);
    write_file(path, os.str());
}

std::vector<Observation> read_observations(const std::filesystem::path& path) {
    std::vector<Observation> out;
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        const auto cols = split(line, '\t');
        if (cols.size() != 6) throw ParseError(source, lineno, "", "expected 6 columns");
        Observation o;
        o.provider_id = std::string(cols[0]);
        o.fqdn = std::string(cols[1]);
        auto ip = IpAddress::parse(cols[2]);
        if (!ip) throw ParseError(source, lineno, "ip", "invalid address");
        o.ip = *ip;
        auto src = parse_source(cols[3]);
        if (!src) throw ParseError(source, lineno, "source", "unknown source '" + std::string(cols[3]) + "'");
        o.source = *src;
        try {
            o.seen_at = parse_timestamp(cols[4]);
        } catch (const ParseError& e) {
            throw ParseError(source, lineno, "seen_at", e.what());
        }
        if (cols[5] != "-" && cols[5] != "wildcard-name")
            throw ParseError(source, lineno, "flags", "unknown flag '" + std::string(cols[5]) + "'");
        o.wildcard_name = cols[5] == "wildcard-name";
        out.push_back(std::move(o));
    });
    return out;
}

std::vector<std::string> distinct_fqdns(std::span<const Observation> obs) {
    std::vector<std::string> out;
    for (const auto& o : obs)
        if (!o.wildcard_name) out.push_back(o.fqdn);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace iotmap

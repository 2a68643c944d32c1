#include "iotmap/fusion.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "iotmap/error.hpp"
#include "iotmap/textio.hpp"

namespace iotmap {

namespace {

constexpr std::array<Source, 3> kSources{Source::tls_cert, Source::passive_dns, Source::active_dns};

bool candidate_less(const CandidateAddress& a, const CandidateAddress& b) {
    return std::tie(a.provider_id, a.ip) < std::tie(b.provider_id, b.ip);
}

std::string join_set(const std::set<std::string>& s) {
    if (s.empty()) return "-";
    std::string out;
    for (const auto& x : s) {
        if (!out.empty()) out += ',';
        out += x;
    }
    return out;
}

SharingVerdict verdict_from(const IpAddress& ip, const std::string& provider, std::size_t total,
                            std::size_t non_matching, std::size_t threshold) {
    SharingVerdict v;
    v.ip = ip;
    v.provider_id = provider;
    v.non_matching_domain_count = non_matching;
    v.matching_domain_count = total - non_matching;
    v.threshold = threshold;
    v.verdict = non_matching > threshold ? Sharing::shared : Sharing::dedicated;
    return v;
}

}  // namespace

std::string format_sources(SourceMask m) {
    std::vector<std::string> names;
    for (auto s : kSources)
        if (m & source_bit(s)) names.emplace_back(source_name(s));
    std::sort(names.begin(), names.end());
    return join(names, ",");
}

SourceMask parse_sources(std::string_view text) {
    SourceMask m = 0;
    for (auto part : split(text, ',')) {
        auto s = parse_source(trim(part));
        if (!s) throw ParseError("", 0, "sources", "unknown source '" + std::string(part) + "'");
        m |= source_bit(*s);
    }
    return m;
}

CandidateSet fuse(std::span<const Observation> observations) {
    std::map<std::pair<std::string, IpAddress>, CandidateAddress> by_key;
    for (const auto& o : observations) {
        auto [it, fresh] = by_key.try_emplace({o.provider_id, o.ip});
        CandidateAddress& c = it->second;
        if (fresh) {
            c.provider_id = o.provider_id;
            c.ip = o.ip;
            c.first_seen = c.last_seen = o.seen_at;
        }
        c.sources |= source_bit(o.source);
        c.first_seen = std::min(c.first_seen, o.seen_at);
        c.last_seen = std::max(c.last_seen, o.seen_at);
        c.fqdns.insert(o.fqdn);
    }
    CandidateSet out;
    out.reserve(by_key.size());
    for (auto& [key, c] : by_key) out.push_back(std::move(c));
    return out;
}

std::span<const CandidateAddress> provider_slice(const CandidateSet& set, std::string_view provider_id) {
    auto lo = std::lower_bound(set.begin(), set.end(), provider_id,
                               [](const CandidateAddress& c, std::string_view id) { return c.provider_id < id; });
    auto hi = std::upper_bound(lo, set.end(), provider_id,
                               [](std::string_view id, const CandidateAddress& c) { return id < c.provider_id; });
    return {lo, hi};
}

std::string_view source_class_name(SourceClass c) {
    switch (c) {
        case SourceClass::tls_only: return "tls-only";
        case SourceClass::pdns_only: return "pdns-only";
        case SourceClass::adns_only: return "adns-only";
        case SourceClass::multiple: return "multiple";
    }
    return "?";
}

SourceClass classify_sources(SourceMask m) {
    switch (m) {
        case source_bit(Source::tls_cert): return SourceClass::tls_only;
        case source_bit(Source::passive_dns): return SourceClass::pdns_only;
        case source_bit(Source::active_dns): return SourceClass::adns_only;
        default:
            if (m == 0) throw ValidationError("candidate without sources");
            return SourceClass::multiple;
    }
}

std::vector<SourceShare> source_contribution(const CandidateSet& candidates) {
    std::map<std::pair<std::string, Family>, SourceShare> shares;
    for (const auto& c : candidates) {
        auto& s = shares[{c.provider_id, c.ip.family()}];
        s.provider_id = c.provider_id;
        s.family = c.ip.family();
        ++s.counts[static_cast<std::size_t>(classify_sources(c.sources))];
        ++s.total;
    }
    std::vector<SourceShare> out;
    for (auto& [k, s] : shares) out.push_back(std::move(s));
    return out;
}

void ReverseIndex::add(const IpAddress& ip, std::string fqdn) { map_[ip].push_back(std::move(fqdn)); }

const std::vector<std::string>* ReverseIndex::find(const IpAddress& ip) const {
    auto it = map_.find(ip);
    return it == map_.end() ? nullptr : &it->second;
}

void ReverseIndex::finalize() {
    for (auto& [ip, names] : map_) {
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
    }
}

ReverseIndex build_reverse_index(std::span<const PassiveDnsRecord> rows, const std::optional<StudyWindow>& window) {
    ReverseIndex index;
    for (const auto& r : rows) {
        if (r.rrtype != "A" && r.rrtype != "AAAA") continue;
        if (window && !window->overlaps(r.first_seen, r.last_seen)) continue;
        if (auto ip = IpAddress::parse(r.rdata)) index.add(*ip, r.rrname);
    }
    index.finalize();
    return index;
}

std::string_view sharing_name(Sharing s) { return s == Sharing::shared ? "shared" : "dedicated"; }

SharingVerdict classify_sharing(const IpAddress& ip, const std::string& provider_id, const ReverseIndex& index,
                                const PatternSet& patterns, std::size_t threshold) {
    const auto* names = index.find(ip);
    if (!names) throw ValidationError("no reverse data for " + ip.to_string());
    std::size_t non_matching = 0;
    for (const auto& n : *names) non_matching += !patterns.any_match(n);
    return verdict_from(ip, provider_id, names->size(), non_matching, threshold);
}

SharingReport classify_candidates_serial(const CandidateSet& candidates, const ReverseIndex& index,
                                         const PatternSet& patterns, std::size_t threshold) {
    SharingReport report;
    report.threshold = threshold;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!index.find(candidates[i].ip)) {
            report.no_reverse_data.push_back(i);
            continue;
        }
        report.verdicts.push_back(
            classify_sharing(candidates[i].ip, candidates[i].provider_id, index, patterns, threshold));
    }
    return report;
}

SharingReport classify_candidates(const CandidateSet& candidates, const ReverseIndex& index,
                                  const PatternSet& patterns, std::size_t threshold) {
    // Distinct names across the entries that will be looked at.
    std::vector<const std::vector<std::string>*> lists(candidates.size());
    std::unordered_map<std::string_view, std::size_t> name_ids;
    std::vector<std::string_view> names;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        lists[i] = index.find(candidates[i].ip);
        if (!lists[i]) continue;
        for (const auto& n : *lists[i])
            if (name_ids.try_emplace(n, names.size()).second) names.push_back(n);
    }

    std::vector<char> matches(names.size());
    const auto n_names = static_cast<std::int64_t>(names.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t k = 0; k < n_names; ++k) matches[k] = patterns.any_match(names[k]);

    std::vector<std::size_t> counts(candidates.size());
    const auto n_cand = static_cast<std::int64_t>(candidates.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n_cand; ++i) {
        if (!lists[i]) continue;
        std::size_t non_matching = 0;
        for (const auto& n : *lists[i]) non_matching += !matches[name_ids.at(n)];
        counts[i] = non_matching;
    }

    SharingReport report;
    report.threshold = threshold;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!lists[i]) {
            report.no_reverse_data.push_back(i);
            continue;
        }
        report.verdicts.push_back(
            verdict_from(candidates[i].ip, candidates[i].provider_id, lists[i]->size(), counts[i], threshold));
    }
    return report;
}

void validate_ground_truth(const GroundTruthSet& truth) {
    auto sorted = truth.prefixes;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        for (std::size_t j = i + 1; j < sorted.size(); ++j)
            if (sorted[i].overlaps(sorted[j]))
                throw ValidationError("ground truth for " + truth.provider_id + ": " + sorted[i].to_string() +
                                      " overlaps " + sorted[j].to_string());
}

std::vector<GroundTruthSet> load_ground_truth(const std::filesystem::path& path) {
    std::map<std::string, GroundTruthSet> by_provider;
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        const auto cols = split(line, '\t');
        if (cols.size() != 2) throw ParseError(source, lineno, "", "expected provider<TAB>cidr");
        auto cidr = Cidr::parse(trim(cols[1]));
        if (!cidr) throw ParseError(source, lineno, "cidr", "invalid prefix '" + std::string(cols[1]) + "'");
        auto& set = by_provider[std::string(trim(cols[0]))];
        set.provider_id = std::string(trim(cols[0]));
        set.prefixes.push_back(*cidr);
    });
    std::vector<GroundTruthSet> out;
    for (auto& [id, set] : by_provider) {
        validate_ground_truth(set);
        out.push_back(std::move(set));
    }
    return out;
}

CoverageReport validate_against_ground_truth(const CandidateSet& candidates, const GroundTruthSet& truth,
                                             const std::vector<IpAddress>* active_ips) {
    auto in_truth = [&](const IpAddress& ip) {
        return std::any_of(truth.prefixes.begin(), truth.prefixes.end(),
                           [&](const Cidr& c) { return c.contains(ip); });
    };
    CoverageReport report;
    report.provider_id = truth.provider_id;
    std::set<IpAddress> identified;
    for (const auto& c : provider_slice(candidates, truth.provider_id)) {
        identified.insert(c.ip);
        (in_truth(c.ip) ? report.identified_in_truth : report.identified_outside_truth).push_back(c.ip);
    }
    if (active_ips) {
        std::set<IpAddress> active(active_ips->begin(), active_ips->end());
        for (const auto& ip : active) {
            if (!in_truth(ip)) continue;
            report.truth_active.push_back(ip);
            if (!identified.count(ip)) report.missed_active.push_back(ip);
        }
    }
    return report;
}

std::string snapshot_filename(Timestamp day) { return "candidates-" + format_date(day) + ".tsv"; }

std::optional<Timestamp> snapshot_date(const std::filesystem::path& path) {
    const std::string name = path.filename().string();
    const std::string prefix = "candidates-";
    if (name.rfind(prefix, 0) != 0 || name.size() < prefix.size() + 10) return std::nullopt;
    try {
        return parse_timestamp(name.substr(prefix.size(), 10));
    } catch (const ParseError&) {
        return std::nullopt;
    }
}

void write_candidates(const std::filesystem::path& path, const CandidateSet& candidates) {
    std::ostringstream os;
    os << "# provider_id\tip\tsources\tfirst_seen\tlast_seen\tfqdns\n";
    for (const auto& c : candidates)
        os << c.provider_id << '\t' << c.ip.to_string() << '\t' << format_sources(c.sources) << '\t'
           << format_timestamp(c.first_seen) << '\t' << format_timestamp(c.last_seen) << '\t' << join_set(c.fqdns)
           << '\n';
    write_file(path, os.str());
}

CandidateSet read_candidates(const std::filesystem::path& path) {
    CandidateSet out;
    const std::string source = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        const auto cols = split(line, '\t');
        if (cols.size() != 6) throw ParseError(source, lineno, "", "expected 6 columns");
        CandidateAddress c;
        c.provider_id = std::string(cols[0]);
        auto ip = IpAddress::parse(cols[1]);
        if (!ip) throw ParseError(source, lineno, "ip", "invalid address");
        c.ip = *ip;
        try {
            c.sources = parse_sources(cols[2]);
            c.first_seen = parse_timestamp(cols[3]);
            c.last_seen = parse_timestamp(cols[4]);
        } catch (const ParseError& e) {
            throw ParseError(source, lineno, "", e.what());
        }
        if (c.sources == 0) throw ParseError(source, lineno, "sources", "empty");
        if (c.first_seen > c.last_seen) throw ParseError(source, lineno, "first_seen", "after last_seen");
        if (cols[5] != "-")
            for (auto f : split(cols[5], ',')) c.fqdns.insert(std::string(f));
        out.push_back(std::move(c));
    });
    if (!std::is_sorted(out.begin(), out.end(), candidate_less)) std::sort(out.begin(), out.end(), candidate_less);
    return out;
}

void write_sharing(const std::filesystem::path& path, const SharingReport& report, const CandidateSet& candidates) {
    std::ostringstream os;
    os << "# threshold=" << report.threshold << "\n";
    os << "# provider_id\tip\tnon_matching\tmatching\tverdict\n";
    std::vector<std::string> lines;
    for (const auto& v : report.verdicts)
        lines.push_back(v.provider_id + '\t' + v.ip.to_string() + '\t' + std::to_string(v.non_matching_domain_count) +
                        '\t' + std::to_string(v.matching_domain_count) + '\t' + std::string(sharing_name(v.verdict)));
    for (auto i : report.no_reverse_data)
        lines.push_back(candidates.at(i).provider_id + '\t' + candidates[i].ip.to_string() + "\t-\t-\tno-reverse-data");
    std::sort(lines.begin(), lines.end());
    for (const auto& l : lines) os << l << '\n';
    write_file(path, os.str());
}

std::vector<SharingVerdict> read_sharing(const std::filesystem::path& path) {
    std::vector<SharingVerdict> out;
    const std::string source = path.string();
    std::size_t threshold = 0;
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        const auto cols = split(line, '\t');
        if (cols.size() != 5) throw ParseError(source, lineno, "", "expected 5 columns");
        if (cols[4] == "no-reverse-data") return;
        SharingVerdict v;
        v.provider_id = std::string(cols[0]);
        auto ip = IpAddress::parse(cols[1]);
        if (!ip) throw ParseError(source, lineno, "ip", "invalid address");
        v.ip = *ip;
        try {
            v.non_matching_domain_count = std::stoul(std::string(cols[2]));
            v.matching_domain_count = std::stoul(std::string(cols[3]));
        } catch (const std::exception&) {
            throw ParseError(source, lineno, "non_matching", "expected counts");
        }
        if (cols[4] == "shared") v.verdict = Sharing::shared;
        else if (cols[4] == "dedicated") v.verdict = Sharing::dedicated;
        else throw ParseError(source, lineno, "verdict", "unknown verdict");
        v.threshold = threshold;
        out.push_back(std::move(v));
    });
    // the threshold is recorded in the header comment
    const std::string text = read_file(path);
    if (auto pos = text.find("# threshold="); pos != std::string::npos) {
        threshold = std::stoul(text.substr(pos + 12));
        for (auto& v : out) v.threshold = threshold;
    }
    return out;
}

}  // namespace iotmap

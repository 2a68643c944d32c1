#pragma once

// Runs the discovery and footprint stages over an in-memory synthetic universe.

#include <unordered_map>
#include <vector>

#include "iotmap/discovery.hpp"
#include "iotmap/flows.hpp"
#include "iotmap/footprint.hpp"
#include "iotmap/fusion.hpp"
#include "iotmap/synth.hpp"

namespace iotmap::testing {

struct Discovered {
    std::vector<Observation> observations;
    CandidateSet candidates;
    SharingReport sharing;
    EnrichResult enriched;
};

inline std::vector<Observation> observe(const Universe& u, const PatternSet& patterns, SourceMask sources = 7) {
    std::vector<Observation> obs;
    auto add = [&](std::vector<Observation> more) { obs.insert(obs.end(), more.begin(), more.end()); };
    const auto& w = u.log.window;
    if (sources & source_bit(Source::tls_cert)) add(ingest_cert_scan(u.certs, patterns, w));
    if (sources & source_bit(Source::passive_dns)) add(ingest_passive_dns(u.pdns, patterns, w));
    if (sources & source_bit(Source::active_dns)) add(ingest_resolutions(u.resolutions, patterns, w));
    canonicalize(obs);
    return obs;
}

inline Discovered discover(const Universe& u, const std::vector<ProviderProfile>& profiles, const PatternSet& patterns,
                           SourceMask sources = 7) {
    Discovered d;
    d.observations = observe(u, patterns, sources);
    d.candidates = fuse(d.observations);
    const auto reverse = build_reverse_index(u.reverse, u.log.window);
    d.sharing = classify_candidates(d.candidates, reverse, patterns);
    std::unordered_map<IpAddress, std::vector<LocationHint>> hints;
    for (const auto& h : u.hints) hints[h.ip].push_back(h);
    PrefixTable table;
    for (const auto& [cidr, asn] : u.prefixes) table.add(cidr, {asn});
    d.enriched = enrich(d.candidates, profiles, patterns, d.sharing.verdicts, hints, table);
    return d;
}

struct FlowRun {
    ContactTable contacts;
    FlowAggregate aggregate;
};

inline FlowRun analyze(const Universe& u, const ServerIndex& index, std::size_t threshold = kDefaultScannerThreshold,
                       bool parallel = true) {
    FlowOptions opts;
    opts.tz = u.log.tz;
    opts.window = u.log.window;
    opts.parallel = parallel;
    FlowRun r;
    r.contacts = count_contacts(u.flows, index, opts);
    r.aggregate = aggregate_flows(u.flows, index, scanner_set(r.contacts, threshold), opts);
    return r;
}

}  // namespace iotmap::testing

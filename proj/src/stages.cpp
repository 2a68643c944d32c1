#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "iotmap/disruption.hpp"
#include "iotmap/error.hpp"
#include "iotmap/flows.hpp"
#include "iotmap/footprint.hpp"
#include "iotmap/fusion.hpp"
#include "iotmap/pdns_client.hpp"
#include "iotmap/pipeline.hpp"
#include "iotmap/resolver.hpp"
#include "iotmap/textio.hpp"
#include "iotmap/tls_collect.hpp"

namespace iotmap {

namespace {

namespace fs = std::filesystem;

std::string pct(double fraction) { return fmt::format("{:.4f}", 100.0 * fraction); }
std::string num(double v) { return fmt::format("{:.6g}", v); }

std::string observation_file(Source s) {
    return std::string(run_files::observations) + "/" + std::string(source_name(s)) + ".tsv";
}

void record_stats(Run& run, const IngestStats& st) {
    run.count("records", st.records);
    run.count("malformed", st.malformed);
    run.count("outside_window", st.outside_window);
    run.count("skipped_rrtype", st.skipped_rrtype);
    run.count("unmatched_names", st.unmatched_names);
    run.count("multi_match_names", st.multi_match_names);
    run.count("not_ok", st.not_ok);
    run.count("observations", st.emitted);
}

void write_obs(Run& run, Source source, std::vector<Observation> obs) {
    canonicalize(obs);
    const auto rel = observation_file(source);
    fs::create_directories(run.path(run_files::observations));
    write_observations(run.path(rel), obs);
    run.track(rel);
}

/// Every observation file present in the run directory.
std::vector<Observation> load_observations(const Run& run) {
    std::vector<Observation> all;
    for (Source s : {Source::tls_cert, Source::passive_dns, Source::active_dns}) {
        const auto p = run.path(observation_file(s));
        if (!fs::exists(p)) continue;
        auto more = read_observations(p);
        all.insert(all.end(), more.begin(), more.end());
    }
    return all;
}

bool any_observations(const Run& run) {
    for (Source s : {Source::tls_cert, Source::passive_dns, Source::active_dns})
        if (fs::exists(run.path(observation_file(s)))) return true;
    return false;
}

std::vector<BackendServer> load_servers(const Run& run) {
    return read_servers(run.require(run_files::servers, "footprint"));
}

std::vector<FlowRecord> load_flows(Run& run) {
    const auto p = run.input(run.config().inputs.flows, "--flows");
    run.note_input("flows", p);
    return read_flows(p);
}

FlowOptions flow_options(const Run& run) {
    FlowOptions o;
    o.tz = run.config().tz;
    o.window = run.config().require_window();
    o.parallel = true;
    return o;
}

std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    CsvTable t{header, rows};
    return t.to_string();
}

// -- flow metric tables

std::string visibility_csv(const FlowAggregate& agg, const ServerIndex& index) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : visibility_per_provider(agg, index))
        rows.push_back({r.provider_id, r.family == Family::v4 ? "ipv4" : "ipv6", std::to_string(r.servers),
                        std::to_string(r.contacted), pct(r.fraction)});
    return csv({"provider_id", "family", "servers", "contacted", "visibility_pct"}, rows);
}

std::string ablation_csv(const FlowAggregate& agg, const ServerIndex& index) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : source_ablation(agg, index))
        rows.push_back({r.provider_id, std::to_string(r.lines_all), std::to_string(r.lines_tls_only), pct(r.decrease)});
    return csv({"provider_id", "lines_all", "lines_tls_only", "decrease_pct"}, rows);
}

void sweep_metric(Run& run, const ContactTable& contacts, const ServerIndex& index) {
    std::vector<std::vector<std::string>> rows;
    const auto points = threshold_sweep(contacts, index, run.config().sweep_thresholds);
    for (const auto& p : points)
        rows.push_back({std::to_string(p.threshold), pct(p.visible_fraction_v4), std::to_string(p.scanner_lines),
                        std::to_string(p.scanner_line_days), std::to_string(p.visible_ips), pct(p.visible_fraction)});
    run.emit("metrics/sweep.csv", csv({"threshold", "visibility_pct", "scanner_lines", "scanner_line_days",
                                       "visible_ips", "visibility_all_pct"},
                                      rows));
    run.count("sweep_points", points.size());
}

std::vector<fs::path> netset_files(const std::vector<fs::path>& inputs) {
    std::vector<fs::path> files;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".netset") files.push_back(e.path());
        } else {
            if (!fs::exists(p)) throw IoError("blocklist not found: " + p.string());
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

namespace stage {

// ---- discovery ------------------------------------------------------------------------------

void discover_file(Run& run, Source source, const fs::path& input) {
    const auto& cfg = run.config();
    const std::string flag = source == Source::tls_cert    ? "--certs"
                             : source == Source::passive_dns ? "--pdns"
                                                             : "--resolutions";
    const auto path = run.input(input, flag);
    const auto& window = cfg.require_window();
    run.begin("discover-" + std::string(source_name(source)));
    run.note_input(std::string(source_name(source)), path);
    IngestStats st;
    ReadOptions ro{cfg.strict};
    std::vector<Observation> obs;
    if (source == Source::tls_cert) {
        obs = ingest_cert_scan(read_cert_scan(path, st, ro), run.patterns(), window, &st);
    } else if (source == Source::passive_dns) {
        obs = ingest_passive_dns(read_passive_dns(path, st, ro), run.patterns(), window, &st);
    } else {
        obs = ingest_resolutions(read_resolutions(path, st, ro), run.patterns(), window, &st);
    }
    record_stats(run, st);
    write_obs(run, source, std::move(obs));
    run.commit();
}

void discover_pdns_endpoint(Run& run) {
    const auto& cfg = run.config();
    if (!cfg.pdns_endpoint || cfg.pdns_endpoint->url.empty())
        throw ValidationError("no passive-DNS endpoint configured (--endpoint)");
    const auto& window = cfg.require_window();
    PdnsEndpoint ep;
    ep.base_url = cfg.pdns_endpoint->url;
    if (const char* tok = std::getenv(cfg.pdns_endpoint->token_env.c_str())) ep.token = tok;
    ep.min_interval = std::chrono::milliseconds(cfg.pdns_endpoint->min_interval_ms);
    ep.page_size = cfg.pdns_endpoint->page_size;
    run.begin("discover-passive-dns");
    IngestStats st;
    std::vector<PassiveDnsRecord> rows;
    std::set<std::string> globs;
    for (const auto& p : run.profiles()) globs.insert("*." + p.parent_domain);
    for (const auto& g : globs) {
        auto more = fetch_passive_dns(ep, g, window, st, ReadOptions{cfg.strict});
        rows.insert(rows.end(), more.begin(), more.end());
    }
    std::string raw;
    for (const auto& r : rows) raw += passive_dns_line(r) + "\n";
    run.emit("raw/passive-dns.jsonl", raw);
    auto obs = ingest_passive_dns(rows, run.patterns(), window, &st);
    record_stats(run, st);
    write_obs(run, Source::passive_dns, std::move(obs));
    run.commit();
}

void discover_resolve(Run& run, bool unsafe_fast) {
    const auto& cfg = run.config();
    const auto& window = cfg.require_window();
    if (cfg.vantages.empty()) throw ValidationError("no resolver vantages configured (--vantage id=address)");
    std::vector<Observation> seeds;
    for (Source s : {Source::tls_cert, Source::passive_dns}) {
        const auto p = run.path(observation_file(s));
        if (!fs::exists(p)) continue;
        auto more = read_observations(p);
        seeds.insert(seeds.end(), more.begin(), more.end());
    }
    if (seeds.empty())
        throw UpstreamMissingError("discover certs", "active resolution needs names from certificate or passive-DNS "
                                                     "observations; run `iotmap discover certs` or `iotmap discover "
                                                     "pdns` first");
    run.begin("discover-active-dns");
    std::vector<Vantage> vantages;
    for (const auto& v : cfg.vantages) vantages.push_back(Vantage::parse(v));
    ResolveOptions ro;
    ro.pacing = std::chrono::milliseconds(cfg.resolve_pacing_ms);
    ro.unsafe_fast = unsafe_fast;
    const auto results = resolve_active(distinct_fqdns(seeds), vantages, ro);
    std::string raw;
    for (const auto& r : results) raw += resolution_line(r) + "\n";
    run.emit("raw/active-dns.jsonl", raw);
    IngestStats st;
    st.records = results.size();
    auto obs = ingest_resolutions(results, run.patterns(), window, &st);
    record_stats(run, st);
    write_obs(run, Source::active_dns, std::move(obs));
    run.commit();
}

void discover_tls(Run& run, const fs::path& targets_file) {
    const auto& cfg = run.config();
    const auto& window = cfg.require_window();
    const auto path = run.input(targets_file, "--targets");
    run.begin("discover-tls");
    run.note_input("targets", path);
    std::vector<TlsTarget> targets;
    for_each_data_line(path, [&](std::size_t line, std::string_view text) {
        try {
            targets.push_back(TlsTarget::parse(trim(text)));
        } catch (const Error& e) {
            throw ParseError(path.string(), line, "target", e.what());
        }
    });
    TlsOptions to;
    to.timeout = std::chrono::milliseconds(cfg.tls_timeout_ms);
    const auto results = collect_tls(targets, to);
    std::vector<CertScanRecord> records;
    std::map<std::string, std::uint64_t> failures;
    for (const auto& r : results) {
        if (r.record) records.push_back(*r.record);
        else ++failures[std::string(tls_failure_name(r.failure))];
    }
    std::string raw;
    for (const auto& r : records) raw += cert_scan_line(r) + "\n";
    run.emit("raw/tls-cert.jsonl", raw);
    IngestStats st;
    auto obs = ingest_cert_scan(records, run.patterns(), window, &st);
    record_stats(run, st);
    run.count("targets", targets.size());
    for (const auto& [k, v] : failures) run.count("failed_" + k, v);
    write_obs(run, Source::tls_cert, std::move(obs));
    run.commit();
}

// ---- fusion ---------------------------------------------------------------------------------

void fuse(Run& run) {
    if (!any_observations(run))
        throw UpstreamMissingError("discover", "no observations in " + run.dir().string() +
                                                   "; run `iotmap discover certs|pdns|resolve|tls` first");
    const auto& cfg = run.config();
    run.begin("fuse");
    for (Source s : {Source::tls_cert, Source::passive_dns, Source::active_dns})
        if (fs::exists(run.path(observation_file(s)))) run.note_input(std::string(source_name(s)), run.path(observation_file(s)));
    const auto obs = load_observations(run);
    const auto candidates = fuse(obs);
    write_candidates(run.path(run_files::candidates), candidates);
    run.track(run_files::candidates);
    run.count("observations", obs.size());
    run.count("candidates", candidates.size());

    std::vector<std::vector<std::string>> rows;
    for (const auto& s : source_contribution(candidates)) {
        std::vector<std::string> row{s.provider_id, s.family == Family::v4 ? "ipv4" : "ipv6"};
        for (auto c : kSourceClasses) row.push_back(std::to_string(s.count(c)));
        row.push_back(std::to_string(s.total));
        for (auto c : kSourceClasses) row.push_back(pct(s.fraction(c)));
        rows.push_back(std::move(row));
    }
    run.emit("metrics/sources.csv",
             csv({"provider_id", "family", "tls_only", "pdns_only", "adns_only", "multiple", "total", "tls_only_pct",
                  "pdns_only_pct", "adns_only_pct", "multiple_pct"},
                 rows));

    // dated snapshot store: external daily certificate exports when given, else this run's set
    fs::create_directories(run.path(run_files::snapshots));
    if (!cfg.inputs.snapshots.empty()) {
        const auto dir = run.input(cfg.inputs.snapshots, "--snapshots");
        run.note_input("snapshots", dir);
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const auto name = f.filename().string();
            if (name.rfind("certs-", 0) == 0 && f.extension() == ".jsonl") {
                const auto day = parse_timestamp(name.substr(6, 10));
                IngestStats st;
                const auto snap = fuse(ingest_cert_scan(read_cert_scan(f, st, ReadOptions{cfg.strict}), run.patterns(),
                                                        cfg.require_window(), &st));
                const auto rel = std::string(run_files::snapshots) + "/" + snapshot_filename(day);
                write_candidates(run.path(rel), snap);
                run.track(rel);
            } else if (snapshot_date(f)) {
                const auto rel = std::string(run_files::snapshots) + "/" + f.filename().string();
                fs::copy_file(f, run.path(rel), fs::copy_options::overwrite_existing);
                run.track(rel);
            }
        }
    } else {
        const auto day = cfg.tz.local(cfg.require_window().start);
        const auto rel = std::string(run_files::snapshots) + "/" + snapshot_filename(day);
        write_candidates(run.path(rel), candidates);
        run.track(rel);
    }
    std::vector<fs::path> snaps;
    for (const auto& e : fs::directory_iterator(run.path(run_files::snapshots)))
        if (snapshot_date(e.path())) snaps.push_back(e.path());
    std::sort(snaps.begin(), snaps.end());
    std::string index = "# date\tfile\tsha256\n";
    for (const auto& s : snaps)
        index += format_date(*snapshot_date(s)) + "\t" + s.filename().string() + "\t" + sha256_file(s) + "\n";
    run.emit(run_files::snapshot_index, index);
    run.count("snapshots", snaps.size());
    run.commit();
}

void classify(Run& run) {
    const auto cand_path = run.require(run_files::candidates, "fuse");
    const auto& cfg = run.config();
    const auto reverse_path = run.input(cfg.inputs.reverse, "--reverse");
    run.begin("classify");
    run.note_input("candidates", cand_path);
    run.note_input("reverse", reverse_path);
    const auto candidates = read_candidates(cand_path);
    IngestStats st;
    const auto rows = read_passive_dns(reverse_path, st, ReadOptions{cfg.strict});
    const auto index = build_reverse_index(rows, cfg.window);
    const auto report = classify_candidates(candidates, index, run.patterns(), cfg.sharing_threshold);
    write_sharing(run.path(run_files::sharing), report, candidates);
    run.track(run_files::sharing);
    std::size_t shared = 0;
    for (const auto& v : report.verdicts) shared += v.verdict == Sharing::shared;
    run.count("candidates", candidates.size());
    run.count("shared", shared);
    run.count("no_reverse_data", report.no_reverse_data.size());
    run.commit();
}

// ---- footprint ------------------------------------------------------------------------------

void footprint(Run& run) {
    const auto cand_path = run.require(run_files::candidates, "fuse");
    const auto sharing_path = run.require(run_files::sharing, "classify");
    const auto& cfg = run.config();
    const auto hints_path = run.input(cfg.inputs.hints, "--hints");
    const auto prefixes_path = run.input(cfg.inputs.prefixes, "--prefixes");
    run.begin("footprint");
    run.note_input("candidates", cand_path);
    run.note_input("sharing", sharing_path);
    run.note_input("hints", hints_path);
    run.note_input("prefixes", prefixes_path);
    const auto candidates = read_candidates(cand_path);
    const auto verdicts = read_sharing(sharing_path);
    const auto table = PrefixTable::load(prefixes_path);
    const auto enriched = enrich(candidates, run.profiles(), run.patterns(), verdicts, load_hints(hints_path), table);
    write_servers(run.path(run_files::servers), enriched.servers);
    run.track(run_files::servers);
    std::string failures = "# provider_id\tip\treason\n";
    for (const auto& f : enriched.failures) failures += f.provider_id + "\t" + f.ip.to_string() + "\t" + f.reason + "\n";
    run.emit(run_files::enrich_failures, failures);
    run.count("servers", enriched.servers.size());
    run.count("failures", enriched.failures.size());

    // hosting strategy
    AsnClassMap classes;
    if (!cfg.inputs.asn_classes.empty()) {
        run.note_input("asn_classes", run.input(cfg.inputs.asn_classes, "--asn-classes"));
        classes = AsnClassMap::load(cfg.inputs.asn_classes);
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : run.profiles()) {
        std::vector<BackendServer> mine;
        for (const auto& s : enriched.servers)
            if (s.provider_id == p.id) mine.push_back(s);
        if (mine.empty()) continue;
        const auto r = infer_strategy(p, mine, classes);
        rows.push_back({r.provider_id, std::string(strategy_name(r.strategy)), std::to_string(r.self_servers),
                        std::to_string(r.cloud_servers), std::to_string(r.other_servers)});
    }
    run.emit("metrics/strategy.csv", csv({"provider_id", "strategy", "self", "cloud", "other"}, rows));

    rows.clear();
    for (const auto& d : diversity_report(enriched.servers))
        rows.push_back({d.provider_id, std::to_string(d.servers), std::to_string(d.asns), std::to_string(d.v4_slash24),
                        std::to_string(d.v6_slash56), std::to_string(d.locations), std::to_string(d.countries),
                        std::to_string(d.confidence[0]), std::to_string(d.confidence[1]),
                        std::to_string(d.confidence[2])});
    run.emit("metrics/diversity.csv",
             csv({"provider_id", "servers", "asns", "v4_slash24", "v6_slash56", "locations", "countries", "unanimous",
                  "majority", "tiebreak"},
                 rows));

    // stability between consecutive snapshots of the store
    std::vector<fs::path> snaps;
    if (fs::is_directory(run.path(run_files::snapshots)))
        for (const auto& e : fs::directory_iterator(run.path(run_files::snapshots)))
            if (snapshot_date(e.path())) snaps.push_back(e.path());
    std::sort(snaps.begin(), snaps.end());
    rows.clear();
    for (std::size_t i = 1; i < snaps.size(); ++i) {
        const auto da = *snapshot_date(snaps[i - 1]), db = *snapshot_date(snaps[i]);
        for (const auto& d : diff_snapshots(read_candidates(snaps[i - 1]), read_candidates(snaps[i]), da, db))
            rows.push_back({d.provider_id, format_date(da), format_date(db), std::to_string(d.in_both.size()),
                            std::to_string(d.only_a.size()), std::to_string(d.only_b.size())});
    }
    run.emit("metrics/stability.csv", csv({"provider_id", "date_a", "date_b", "in_both", "only_a", "only_b"}, rows));

    // ground-truth coverage
    rows.clear();
    if (!cfg.inputs.ground_truth.empty()) {
        run.note_input("ground_truth", run.input(cfg.inputs.ground_truth, "--ground-truth"));
        std::vector<IpAddress> active;
        const std::vector<IpAddress>* active_ptr = nullptr;
        if (!cfg.inputs.flows.empty() && fs::exists(cfg.inputs.flows)) {
            run.note_input("flows", cfg.inputs.flows);
            for_each_flow_batch(cfg.inputs.flows, 1 << 16, [&](std::span<const FlowRecord> batch) {
                for (const auto& f : batch) active.push_back(f.server_ip);
                std::sort(active.begin(), active.end());
                active.erase(std::unique(active.begin(), active.end()), active.end());
            });
            active_ptr = &active;
        }
        for (const auto& truth : load_ground_truth(cfg.inputs.ground_truth)) {
            const auto cov = validate_against_ground_truth(candidates, truth, active_ptr);
            rows.push_back({cov.provider_id, std::to_string(cov.identified_in_truth.size()),
                            std::to_string(cov.identified_outside_truth.size()),
                            active_ptr ? std::to_string(cov.truth_active.size()) : "",
                            active_ptr ? std::to_string(cov.missed_active.size()) : ""});
        }
    }
    run.emit("metrics/coverage.csv", csv({"provider_id", "identified_in_truth", "identified_outside_truth",
                                          "truth_active", "missed_active"},
                                         rows));
    run.commit();
}

// ---- flows ----------------------------------------------------------------------------------

void flows_analyze(Run& run) {
    const auto servers = load_servers(run);
    const auto& cfg = run.config();
    const auto opts = flow_options(run);
    run.begin("flows-analyze");
    run.note_input("servers", run.path(run_files::servers));
    const auto flows = load_flows(run);
    const ServerIndex index(servers, run.profiles(), cfg.include_shared);
    const auto contacts = count_contacts(flows, index, opts);
    const auto scanners = scanner_set(contacts, cfg.scanner_threshold);
    const auto agg = aggregate_flows(flows, index, scanners, opts);
    const auto& window = *opts.window;

    run.count("flows", agg.flows_seen);
    run.count("flows_outside_window", agg.flows_outside_window);
    run.count("flows_scanner", agg.flows_scanner);
    run.count("flows_attributed", agg.flows_attributed);

    std::string sc = "# day\tline_id\tdistinct_backend_ips\n";
    std::size_t scanner_days = 0;
    for (const auto& v : detect_scanners(contacts, cfg.scanner_threshold)) {
        if (!v.is_scanner) continue;
        ++scanner_days;
        sc += format_date(v.day * kDay) + "\t" + std::to_string(v.line_id) + "\t" +
              std::to_string(v.distinct_backend_ips) + "\n";
    }
    run.emit(run_files::scanners, sc);
    run.count("scanner_line_days", scanner_days);

    run.emit("metrics/visibility.csv", visibility_csv(agg, index));
    run.emit("metrics/ablation.csv", ablation_csv(agg, index));

    std::vector<std::vector<std::string>> rows;
    for (const auto& p : activity_series(agg, index, window, cfg.tz))
        rows.push_back({p.provider_id, format_timestamp(p.hour_start), std::to_string(p.active_lines)});
    run.emit("metrics/activity.csv", csv({"provider_id", "hour_start", "active_lines"}, rows));

    rows.clear();
    std::vector<std::vector<std::string>> ratio_rows;
    for (const auto& t : traffic_series_and_ratio(agg, index, window, cfg.tz)) {
        for (const auto& p : t.points)
            rows.push_back({t.provider_id, format_timestamp(p.hour_start), std::to_string(p.down), std::to_string(p.up),
                            num(p.normalized_down)});
        ratio_rows.push_back({t.provider_id, std::to_string(t.total_down), std::to_string(t.total_up),
                              t.ratio_infinite ? "inf" : num(t.ratio)});
    }
    run.emit("metrics/traffic.csv", csv({"provider_id", "hour_start", "down_bytes", "up_bytes", "normalized_down"}, rows));
    run.emit("metrics/ratio.csv", csv({"provider_id", "total_down", "total_up", "ratio"}, ratio_rows));

    rows.clear();
    for (const auto& p : port_mix(agg, index)) rows.push_back({p.provider_id, p.label, std::to_string(p.bytes), pct(p.share)});
    run.emit("metrics/ports.csv", csv({"provider_id", "port", "bytes", "share_pct"}, rows));

    rows.clear();
    const auto profiles = line_day_profiles(agg, contacts, index);
    for (auto [group_by, name] : {std::pair{GroupBy::all, "all"}, {GroupBy::provider, "provider"}, {GroupBy::port, "port"}}) {
        for (const auto& [key, ecdf] : per_line_distribution(profiles, group_by, &run.profiles())) {
            for (const auto& [value, frac] : ecdf.steps())
                rows.push_back({name, group_by == GroupBy::provider ? key : "", group_by == GroupBy::port ? key : "",
                                std::to_string(value), num(frac)});
        }
    }
    run.emit("metrics/line_ecdf.csv", csv({"group_by", "provider_id", "port", "bytes", "fraction"}, rows));

    rows.clear();
    const auto cont = continent_attribution(agg, index);
    for (std::size_t k = 0; k < kLineCategories.size(); ++k)
        rows.push_back({"lines", std::string(line_category_name(kLineCategories[k])), std::to_string(cont.line_counts[k]),
                        pct(cont.line_shares[k])});
    for (std::size_t r = 0; r < kTrafficRegions.size(); ++r)
        rows.push_back({"traffic", std::string(traffic_region_name(kTrafficRegions[r])),
                        std::to_string(cont.traffic_bytes[r]), pct(cont.traffic_shares[r])});
    for (std::size_t r = 0; r < kTrafficRegions.size(); ++r)
        rows.push_back({"servers", std::string(traffic_region_name(kTrafficRegions[r])),
                        std::to_string(cont.server_counts[r]), pct(cont.server_shares[r])});
    run.emit("metrics/continent.csv", csv({"kind", "category", "count", "share_pct"}, rows));

    const auto series = regional_series(agg, index, window, cfg.tz);
    write_series(run.path(run_files::series), series);
    run.track(run_files::series);
    rows.clear();
    for (const auto& s : series)
        for (std::size_t h = 0; h < s.values.size(); ++h)
            rows.push_back({s.provider_id, s.region, format_timestamp(s.start + static_cast<Timestamp>(h) * kHour),
                            num(s.values[h])});
    run.emit("metrics/series.csv", csv({"provider_id", "region", "hour_start", "normalized_volume"}, rows));

    sweep_metric(run, contacts, index);
    run.commit();
}

void flows_sweep(Run& run) {
    const auto servers = load_servers(run);
    const auto opts = flow_options(run);
    run.begin("flows-sweep");
    run.note_input("servers", run.path(run_files::servers));
    const auto flows = load_flows(run);
    const ServerIndex index(servers, run.profiles(), run.config().include_shared);
    sweep_metric(run, count_contacts(flows, index, opts), index);
    run.commit();
}

void flows_ablate(Run& run) {
    const auto servers = load_servers(run);
    const auto opts = flow_options(run);
    run.begin("flows-ablate");
    run.note_input("servers", run.path(run_files::servers));
    const auto flows = load_flows(run);
    const ServerIndex index(servers, run.profiles(), run.config().include_shared);
    const auto contacts = count_contacts(flows, index, opts);
    const auto agg = aggregate_flows(flows, index, scanner_set(contacts, run.config().scanner_threshold), opts);
    run.emit("metrics/ablation.csv", ablation_csv(agg, index));
    run.commit();
}

// ---- disruption -----------------------------------------------------------------------------

void disrupt_outage(Run& run) {
    const auto series_path = run.require(run_files::series, "flows analyze");
    const auto& cfg = run.config();
    const auto& window = cfg.require_window();
    const Timestamp scan_start = window.start + static_cast<Timestamp>(cfg.baseline_days) * kDay;
    if (scan_start >= window.end)
        throw ValidationError("the study window holds no day after the " + std::to_string(cfg.baseline_days) +
                              " baseline days");
    run.begin("disrupt-outage");
    run.note_input("series", series_path);
    OutageOptions oo;
    oo.baseline_days = cfg.baseline_days;
    oo.sustain_hours = cfg.sustain_hours;
    oo.per_hour = cfg.per_hour_baseline;
    std::string lines;
    std::vector<std::vector<std::string>> rows;
    std::size_t n = 0;
    for (const auto& s : read_series(series_path)) {
        for (const auto& f : outage_scan(s, StudyWindow(scan_start, window.end), oo)) {
            lines += outage_finding_json(f) + "\n";
            rows.push_back({f.provider_id, f.region, format_timestamp(f.window.start), format_timestamp(f.window.end),
                            num(f.min_baseline), pct(f.max_drop_fraction)});
            ++n;
        }
    }
    run.emit(run_files::outages, lines);
    run.emit("metrics/outages.csv",
             csv({"provider_id", "region", "start", "end", "min_baseline", "max_drop_pct"}, rows));
    run.count("findings", n);
    run.commit();
}

void disrupt_blocklist(Run& run) {
    const auto servers = load_servers(run);
    const auto& cfg = run.config();
    if (cfg.inputs.blocklists.empty()) throw ValidationError("no blocklists configured (--list)");
    run.begin("disrupt-blocklist");
    run.note_input("servers", run.path(run_files::servers));
    BlocklistIndex index;
    for (const auto& f : netset_files(cfg.inputs.blocklists)) {
        run.note_input("list:" + f.stem().string(), f);
        index.load_netset(f);
    }
    const auto report = blocklist_check(servers, index, cfg.exclude_lists);
    std::string lines;
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : report.matches) {
        lines += blocklist_match_json(m) + "\n";
        rows.push_back({m.provider_id, m.ip.to_string(), join(m.lists, ";")});
    }
    run.emit(run_files::blocklist, lines);
    run.emit("metrics/blocklist.csv", csv({"provider_id", "ip", "lists"}, rows));
    run.count("lists", index.lists().size());
    run.count("entries", index.entries());
    run.count("matched_ips", report.distinct_ips);
    run.count("excluded_hits", report.excluded_hits);
    run.commit();
}

void disrupt_routing(Run& run) {
    const auto servers = load_servers(run);
    const auto& cfg = run.config();
    const auto path = run.input(cfg.inputs.routing_events, "--events");
    run.begin("disrupt-routing");
    run.note_input("servers", run.path(run_files::servers));
    run.note_input("events", path);
    const auto events = load_routing_events(path);
    std::string lines;
    std::vector<std::vector<std::string>> rows;
    std::size_t hits = 0;
    for (const auto& o : routing_event_overlap(servers, events, cfg.require_window())) {
        lines += routing_overlap_json(o) + "\n";
        rows.push_back({o.event_id, std::string(routing_event_kind_name(o.kind)), o.in_window ? "1" : "0",
                        std::to_string(o.servers.size())});
        hits += !o.servers.empty();
    }
    run.emit(run_files::routing, lines);
    run.emit("metrics/routing.csv", csv({"event_id", "kind", "in_window", "servers"}, rows));
    run.count("events", events.size());
    run.count("overlapping_events", hits);
    run.commit();
}

}  // namespace stage

// ---- whole pipeline -------------------------------------------------------------------------

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages = {
        "discover-certs", "discover-pdns",   "discover-resolve",  "fuse",           "classify", "footprint",
        "flows-analyze",  "disrupt-outage", "disrupt-blocklist", "disrupt-routing", "report"};
    return stages;
}

void run_pipeline(Run& run, const std::vector<std::string>& requested) {
    const auto& cfg = run.config();
    const auto& all = pipeline_stages();
    for (const auto& s : requested)
        if (std::find(all.begin(), all.end(), s) == all.end()) throw ValidationError("unknown stage '" + s + "'");
    const bool explicit_stages = !requested.empty();
    auto wanted = [&](const std::string& s) {
        return !explicit_stages || std::find(requested.begin(), requested.end(), s) != requested.end();
    };
    // without an explicit list, stages whose inputs are not configured are skipped
    auto configured = [&](const fs::path& p) { return explicit_stages || !p.empty(); };

    if (wanted("discover-certs") && configured(cfg.inputs.certs)) stage::discover_file(run, Source::tls_cert, cfg.inputs.certs);
    if (wanted("discover-pdns") && configured(cfg.inputs.pdns)) stage::discover_file(run, Source::passive_dns, cfg.inputs.pdns);
    if (wanted("discover-resolve") && configured(cfg.inputs.resolutions))
        stage::discover_file(run, Source::active_dns, cfg.inputs.resolutions);
    if (wanted("fuse")) stage::fuse(run);
    if (wanted("classify")) stage::classify(run);
    if (wanted("footprint")) stage::footprint(run);
    const bool have_flows = configured(cfg.inputs.flows);
    if (wanted("flows-analyze") && have_flows) stage::flows_analyze(run);
    if (wanted("disrupt-outage") && have_flows) {
        const auto& w = cfg.require_window();
        if (explicit_stages || w.start + static_cast<Timestamp>(cfg.baseline_days) * kDay < w.end)
            stage::disrupt_outage(run);
    }
    if (wanted("disrupt-blocklist") && (explicit_stages || !cfg.inputs.blocklists.empty())) stage::disrupt_blocklist(run);
    if (wanted("disrupt-routing") && configured(cfg.inputs.routing_events)) stage::disrupt_routing(run);
    if (wanted("report")) stage::report(run, "all");
}

}  // namespace iotmap

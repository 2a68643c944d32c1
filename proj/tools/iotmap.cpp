// iotmap: command-line front end of the backend mapping pipeline.
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "iotmap/catalog.hpp"
#include "iotmap/error.hpp"
#include "iotmap/flows.hpp"
#include "iotmap/pipeline.hpp"
#include "iotmap/synth.hpp"
#include "iotmap/textio.hpp"

using namespace iotmap;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kUpstream = 3 };

/// Flag values; only the ones the user actually gave override the config file.
struct Flags {
    std::string config, catalog, out, window, timezone, universe, endpoint, token_env, salt;
    std::size_t scanner_threshold = 0, sharing_threshold = 0, baseline_days = 0, sustain_hours = 0;
    std::vector<std::string> vantages, exclude_lists, lists;
    std::vector<std::size_t> sweep;
    bool per_hour = false, include_shared = false, anonymize = false, strict = false;
    std::int64_t pacing_ms = 0;
    std::map<std::string, std::string> inputs;  // role -> path
};

struct Options {
    CLI::App* app = nullptr;
    std::map<std::string, CLI::Option*> opt;

    bool given(const std::string& name) const {
        auto it = opt.find(name);
        return it != opt.end() && it->second->count() > 0;
    }
};

std::string default_catalog() {
    if (const char* env = std::getenv("IOTMAP_CATALOG")) return env;
    return IOTMAP_DEFAULT_CATALOG;
}

RunConfig build_config(const Flags& f, const Options& o) {
    RunConfig c = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
    if (o.given("catalog")) c.catalog = f.catalog;
    if (c.catalog.empty()) c.catalog = default_catalog();
    if (o.given("out")) c.out = f.out;
    if (o.given("window")) c.window = StudyWindow::parse(f.window);
    if (o.given("timezone")) c.tz = UtcOffset::parse(f.timezone);
    if (o.given("scanner-threshold")) c.scanner_threshold = f.scanner_threshold;
    if (o.given("sharing-threshold")) c.sharing_threshold = f.sharing_threshold;
    if (o.given("vantage")) c.vantages = f.vantages;
    if (o.given("endpoint")) {
        if (!c.pdns_endpoint) c.pdns_endpoint = PdnsEndpointConfig{};
        c.pdns_endpoint->url = f.endpoint;
    }
    if (o.given("token-env")) {
        if (!c.pdns_endpoint) c.pdns_endpoint = PdnsEndpointConfig{};
        c.pdns_endpoint->token_env = f.token_env;
    }
    if (o.given("sweep")) c.sweep_thresholds = f.sweep;
    if (o.given("baseline-days")) c.baseline_days = f.baseline_days;
    if (o.given("sustain-hours")) c.sustain_hours = f.sustain_hours;
    if (o.given("per-hour-baseline")) c.per_hour_baseline = f.per_hour;
    if (o.given("exclude-list")) c.exclude_lists = {f.exclude_lists.begin(), f.exclude_lists.end()};
    if (o.given("include-shared")) c.include_shared = f.include_shared;
    if (o.given("anonymize")) c.anonymize = f.anonymize;
    if (o.given("salt")) c.salt = f.salt;
    if (o.given("strict")) c.strict = f.strict;
    if (o.given("pacing-ms")) c.resolve_pacing_ms = f.pacing_ms;
    auto& in = c.inputs;
    const std::map<std::string, fs::path*> slots = {
        {"certs", &in.certs},     {"pdns", &in.pdns},           {"resolutions", &in.resolutions},
        {"reverse", &in.reverse}, {"hints", &in.hints},         {"prefixes", &in.prefixes},
        {"asn-classes", &in.asn_classes}, {"ground-truth", &in.ground_truth}, {"flows", &in.flows},
        {"events", &in.routing_events},   {"snapshots", &in.snapshots},       {"targets", &in.tls_targets}};
    for (const auto& [role, slot] : slots)
        if (o.given(role)) *slot = f.inputs.at(role);
    if (o.given("list")) in.blocklists = {f.lists.begin(), f.lists.end()};
    if (o.given("universe")) c.use_universe(f.universe);
    c.validate();
    return c;
}

void print_stage(const Run& run, const std::string& stage) {
    auto it = run.manifest().stages.find(stage);
    if (it == run.manifest().stages.end()) return;
    std::cout << stage << ":";
    for (const auto& [k, v] : it->second.counts) std::cout << " " << k << "=" << v;
    std::cout << "\n";
    for (const auto& [path, sha] : it->second.outputs) std::cout << "  " << (run.dir() / path).string() << "\n";
}

int fail(int code, const std::string& what) {
    std::cerr << "iotmap: " << what << "\n";
    return code;
}

UniverseConfig scenario_by_name(const std::string& name) {
    static const std::map<std::string, std::function<UniverseConfig()>> named = {
        {"discovery", [] { return scenario::discovery(); }},
        {"sni-only", [] { return scenario::sni_only(); }},
        {"scanner-day", [] { return scenario::scanner_day(); }},
        {"sampling", [] { return scenario::sampling(); }},
        {"continent", [] { return scenario::continent(); }},
        {"outage", [] { return scenario::outage(); }},
        {"churn", [] { return scenario::churn(); }},
        {"ground-truth", [] { return scenario::ground_truth(); }},
        {"visibility", [] { return scenario::visibility(); }}};
    auto it = named.find(name);
    if (it == named.end()) throw ValidationError("unknown scenario '" + name + "'");
    return it->second();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Maps IoT backend servers from certificate, passive-DNS and active-DNS data and attributes "
                 "sampled flow records to them."};
    app.require_subcommand(1);
    app.fallthrough();
    Flags f;
    Options o{&app, {}};
    auto add = [&](const std::string& name, auto& target, const std::string& help) {
        o.opt[name] = app.add_option("--" + name, target, help);
        return o.opt[name];
    };
    auto add_flag = [&](const std::string& name, bool& target, const std::string& help) {
        o.opt[name] = app.add_flag("--" + name, target, help);
    };
    add("config", f.config, "Run configuration (JSON); flags override its values")->check(CLI::ExistingFile);
    add("catalog", f.catalog, "Provider catalog (JSON lines)");
    o.opt["out"] = app.add_option("-o,--out", f.out, "Run directory");
    add("window", f.window, "Study window START/END");
    add("timezone", f.timezone, "Vantage UTC offset, e.g. +01:00");
    add("universe", f.universe, "Generated synthetic universe supplying unset inputs");
    add("scanner-threshold", f.scanner_threshold, "Distinct backend IPs per line and day above which a line is a scanner");
    add("sharing-threshold", f.sharing_threshold, "Non-matching names above which an address counts as shared");
    add("vantage", f.vantages, "Resolver vantage id=address[:port] (repeatable)");
    add("endpoint", f.endpoint, "Passive-DNS lookup service base URL");
    add("token-env", f.token_env, "Environment variable holding the passive-DNS token");
    add("sweep", f.sweep, "Scanner thresholds for the sweep")->delimiter(',');
    add("baseline-days", f.baseline_days, "Days of history for the outage baseline");
    add("sustain-hours", f.sustain_hours, "Consecutive hours below baseline needed for a finding");
    add_flag("per-hour-baseline", f.per_hour, "Baseline per hour of day");
    add("exclude-list", f.exclude_lists, "Blocklist id to exclude (repeatable)");
    add_flag("include-shared", f.include_shared, "Count shared servers in the visibility denominator");
    add_flag("anonymize", f.anonymize, "Replace provider ids with pseudonyms in figures");
    add("salt", f.salt, "Pseudonym salt");
    add_flag("strict", f.strict, "Abort on the first malformed record");
    add("pacing-ms", f.pacing_ms, "Minimum spacing of queries to one resolver");
    for (const auto& role : {"certs", "pdns", "resolutions", "reverse", "hints", "prefixes", "asn-classes",
                             "ground-truth", "flows", "events", "snapshots", "targets"})
        add(role, f.inputs[role], std::string("Input: ") + role);
    add("list", f.lists, "Blocklist file or directory of .netset files (repeatable)");

    // stage subcommands; each runs against a Run built from config and flags
    std::function<int()> action;
    auto with_run = [&](std::function<void(Run&)> body) {
        return [&, body] {
            action = [&, body] {
                Run run(build_config(f, o));
                body(run);
                return 0;
            };
        };
    };

    auto* catalog = app.add_subcommand("catalog", "Catalog maintenance")->require_subcommand(1);
    catalog->add_subcommand("validate", "Report every catalog violation")->callback([&] {
        action = [&] {
            const fs::path path = o.given("catalog") ? fs::path(f.catalog)
                                  : !f.config.empty() && !RunConfig::load(f.config).catalog.empty()
                                      ? RunConfig::load(f.config).catalog
                                      : fs::path(default_catalog());
            const auto problems = validate_catalog(path);
            for (const auto& p : problems) std::cerr << p << "\n";
            if (!problems.empty()) return fail(kValidation, std::to_string(problems.size()) + " catalog violation(s)");
            const auto profiles = load_catalog(path);
            std::cout << path.string() << ": " << profiles.size() << " providers, ok\n";
            return 0;
        };
    });

    auto* discover = app.add_subcommand("discover", "Turn one data source into observations")->require_subcommand(1);
    std::string input;
    bool unsafe_fast = false;
    auto* d_certs = discover->add_subcommand("certs", "Certificate-scan export");
    d_certs->add_option("--input", input, "Certificate-scan export (overrides --certs)");
    d_certs->callback(with_run([&](Run& run) {
        stage::discover_file(run, Source::tls_cert, input.empty() ? run.config().inputs.certs : fs::path(input));
        print_stage(run, "discover-tls-cert");
    }));
    auto* d_pdns = discover->add_subcommand("pdns", "Passive-DNS export file or lookup service");
    d_pdns->add_option("--input", input, "Passive-DNS export (overrides --pdns)");
    d_pdns->callback(with_run([&](Run& run) {
        const auto& cfg = run.config();
        if (input.empty() && cfg.inputs.pdns.empty() && cfg.pdns_endpoint) stage::discover_pdns_endpoint(run);
        else stage::discover_file(run, Source::passive_dns, input.empty() ? cfg.inputs.pdns : fs::path(input));
        print_stage(run, "discover-passive-dns");
    }));
    auto* d_resolve = discover->add_subcommand("resolve", "Active resolution, or a recorded resolution export");
    d_resolve->add_option("--input", input, "Recorded resolutions (overrides --resolutions)");
    d_resolve->add_flag("--unsafe-fast", unsafe_fast, "Allow pacing below the default (local fixtures only)");
    d_resolve->callback(with_run([&](Run& run) {
        const auto& cfg = run.config();
        if (input.empty() && cfg.inputs.resolutions.empty()) stage::discover_resolve(run, unsafe_fast);
        else stage::discover_file(run, Source::active_dns, input.empty() ? cfg.inputs.resolutions : fs::path(input));
        print_stage(run, "discover-active-dns");
    }));
    auto* d_tls = discover->add_subcommand("tls", "Handshake with targets and collect certificates");
    d_tls->add_option("--input", input, "Targets file, one address:port[,sni] per line (overrides --targets)");
    d_tls->callback(with_run([&](Run& run) {
        stage::discover_tls(run, input.empty() ? run.config().inputs.tls_targets : fs::path(input));
        print_stage(run, "discover-tls");
    }));

    app.add_subcommand("fuse", "Merge observations into candidate addresses")->callback(with_run([&](Run& run) {
        stage::fuse(run);
        print_stage(run, "fuse");
    }));
    app.add_subcommand("classify", "Shared versus dedicated verdicts")->callback(with_run([&](Run& run) {
        stage::classify(run);
        print_stage(run, "classify");
    }));
    app.add_subcommand("footprint", "Locate, route and characterize servers")->callback(with_run([&](Run& run) {
        stage::footprint(run);
        print_stage(run, "footprint");
    }));

    auto* flows = app.add_subcommand("flows", "Attribute sampled flows to backend servers")->require_subcommand(1);
    flows->add_subcommand("analyze", "All flow metrics")->callback(with_run([&](Run& run) {
        stage::flows_analyze(run);
        print_stage(run, "flows-analyze");
    }));
    flows->add_subcommand("sweep", "Scanner threshold sweep")->callback(with_run([&](Run& run) {
        stage::flows_sweep(run);
        print_stage(run, "flows-sweep");
    }));
    flows->add_subcommand("ablate", "Certificate-only source ablation")->callback(with_run([&](Run& run) {
        stage::flows_ablate(run);
        print_stage(run, "flows-ablate");
    }));

    auto* disrupt = app.add_subcommand("disrupt", "Disruption checks")->require_subcommand(1);
    disrupt->add_subcommand("outage", "Drops below the previous-week minimum")->callback(with_run([&](Run& run) {
        stage::disrupt_outage(run);
        print_stage(run, "disrupt-outage");
    }));
    disrupt->add_subcommand("blocklist", "Servers on IP blocklists")->callback(with_run([&](Run& run) {
        stage::disrupt_blocklist(run);
        print_stage(run, "disrupt-blocklist");
    }));
    disrupt->add_subcommand("routing", "Servers affected by routing events")->callback(with_run([&](Run& run) {
        stage::disrupt_routing(run);
        print_stage(run, "disrupt-routing");
    }));

    std::string figure;
    auto* report = app.add_subcommand("report", "Write a figure table from the run metrics");
    report->add_option("figure_id", figure, "Figure id (fig3 .. fig14, fig10_ratio, fig10_ports) or all")->required();
    report->callback(with_run([&](Run& run) {
        for (const auto& p : stage::report(run, figure)) std::cout << (run.dir() / p).string() << "\n";
    }));

    std::vector<std::string> stages;
    auto* runall = app.add_subcommand("run", "Run the file-based stages in order");
    runall->add_option("--stages", stages, "Subset of stages")->delimiter(',');
    runall->callback(with_run([&](Run& run) {
        run_pipeline(run, stages);
        for (const auto& [name, st] : run.manifest().stages) print_stage(run, name);
    }));

    auto* synth = app.add_subcommand("synth", "Synthetic universes and their oracle")->require_subcommand(1);
    std::string spec, scenario_name, truth_dir, oracle_out;
    std::uint64_t seed = 0;
    bool dump = false;
    auto* gen = synth->add_subcommand("generate", "Generate a universe with ground truth");
    gen->add_option("--spec", spec, "Universe configuration (JSON)")->check(CLI::ExistingFile);
    gen->add_option("--scenario", scenario_name,
                    "Built-in scenario: discovery sni-only scanner-day sampling continent outage churn ground-truth "
                    "visibility");
    auto* seed_opt = gen->add_option("--seed", seed, "Seed override");
    gen->add_flag("--dump-config", dump, "Print the universe configuration and stop");
    gen->callback([&] {
        action = [&] {
            if (spec.empty() == scenario_name.empty()) throw ValidationError("give exactly one of --spec and --scenario");
            UniverseConfig uc = spec.empty() ? scenario_by_name(scenario_name) : UniverseConfig::load(spec);
            if (seed_opt->count()) uc.seed = seed;
            if (dump) {
                std::cout << uc.to_json();
                return 0;
            }
            if (!o.given("out")) throw ValidationError("synth generate needs --out");
            const fs::path cat = o.given("catalog") ? fs::path(f.catalog) : fs::path(default_catalog());
            const auto profiles = load_catalog(cat);
            const auto u = generate(uc, profiles);
            write_universe(f.out, u);
            std::cout << f.out << ": servers=" << u.log.servers.size() << " flows=" << u.flows.size()
                      << " truth_flow_totals=" << u.log.flows.size() << "\n";
            return 0;
        };
    });
    std::size_t oracle_threshold = kDefaultScannerThreshold;
    auto* orc = synth->add_subcommand("oracle", "Reference metrics from a truth log");
    orc->add_option("--truth", truth_dir, "Universe directory holding truth.json")->required();
    orc->add_option("--threshold", oracle_threshold, "Scanner threshold");
    orc->add_option("--output", oracle_out, "Write the metrics here instead of stdout");
    orc->callback([&] {
        action = [&] {
            OracleParams params;
            params.scanner_threshold = oracle_threshold;
            if (o.given("sweep")) params.sweep_thresholds = f.sweep;
            const auto text = oracle_json(oracle_metrics(read_truth_log(truth_dir), params));
            if (oracle_out.empty()) std::cout << text;
            else write_file(oracle_out, text);
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }
    try {
        return action ? action() : kOk;
    } catch (const UpstreamMissingError& e) {
        return fail(kUpstream, std::string(e.what()) + " [upstream stage: " + e.stage() + "]");
    } catch (const IoError& e) {
        return fail(kIo, e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(kIo, e.what());
    } catch (const ParseError& e) {
        return fail(kValidation, e.what());
    } catch (const ValidationError& e) {
        return fail(kValidation, e.what());
    } catch (const std::exception& e) {
        return fail(kValidation, e.what());
    }
}

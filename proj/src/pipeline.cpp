#include "iotmap/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "iotmap/error.hpp"
#include "iotmap/synth.hpp"
#include "iotmap/textio.hpp"
#include "json.hpp"

namespace iotmap {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ValidationError(where + ": unknown key '" + k + "'");
}

template <typename T>
T get(const json& j, const char* key, const T& fallback, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + "." + key + ": wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

// ---- configuration --------------------------------------------------------------------------

RunConfig RunConfig::from_json(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("run config: ") + e.what());
    }
    const std::string where = "run config";
    check_keys(j,
               {"catalog", "window", "timezone", "scanner_threshold", "sharing_threshold", "vantages", "out", "inputs",
                "universe", "pdns_endpoint", "sweep_thresholds", "baseline_days", "sustain_hours", "per_hour_baseline",
                "exclude_lists", "include_shared", "anonymize", "salt", "strict", "resolve_pacing_ms",
                "tls_timeout_ms"},
               where);
    RunConfig c;
    c.catalog = resolve(base_dir, get<std::string>(j, "catalog", "", where));
    if (auto w = get<std::string>(j, "window", "", where); !w.empty()) c.window = StudyWindow::parse(w);
    if (auto tz = get<std::string>(j, "timezone", "", where); !tz.empty()) c.tz = UtcOffset::parse(tz);
    c.scanner_threshold = get<std::size_t>(j, "scanner_threshold", c.scanner_threshold, where);
    c.sharing_threshold = get<std::size_t>(j, "sharing_threshold", c.sharing_threshold, where);
    c.vantages = get<std::vector<std::string>>(j, "vantages", {}, where);
    if (auto out = get<std::string>(j, "out", "", where); !out.empty()) c.out = resolve(base_dir, out);
    if (auto it = j.find("inputs"); it != j.end()) {
        const std::string w = where + ".inputs";
        check_keys(*it,
                   {"certs", "pdns", "resolutions", "reverse", "hints", "prefixes", "asn_classes", "ground_truth",
                    "flows", "routing_events", "snapshots", "tls_targets", "blocklists"},
                   w);
        auto& in = c.inputs;
        auto path = [&](const char* key) { return resolve(base_dir, get<std::string>(*it, key, "", w)); };
        in.certs = path("certs");
        in.pdns = path("pdns");
        in.resolutions = path("resolutions");
        in.reverse = path("reverse");
        in.hints = path("hints");
        in.prefixes = path("prefixes");
        in.asn_classes = path("asn_classes");
        in.ground_truth = path("ground_truth");
        in.flows = path("flows");
        in.routing_events = path("routing_events");
        in.snapshots = path("snapshots");
        in.tls_targets = path("tls_targets");
        for (const auto& b : get<std::vector<std::string>>(*it, "blocklists", {}, w))
            in.blocklists.push_back(resolve(base_dir, b));
    }
    if (auto it = j.find("pdns_endpoint"); it != j.end() && !it->is_null()) {
        const std::string w = where + ".pdns_endpoint";
        check_keys(*it, {"url", "token_env", "min_interval_ms", "page_size"}, w);
        PdnsEndpointConfig e;
        e.url = get<std::string>(*it, "url", "", w);
        e.token_env = get<std::string>(*it, "token_env", e.token_env, w);
        e.min_interval_ms = get<std::int64_t>(*it, "min_interval_ms", e.min_interval_ms, w);
        e.page_size = get<std::size_t>(*it, "page_size", e.page_size, w);
        c.pdns_endpoint = e;
    }
    c.sweep_thresholds = get<std::vector<std::size_t>>(j, "sweep_thresholds", c.sweep_thresholds, where);
    c.baseline_days = get<std::size_t>(j, "baseline_days", c.baseline_days, where);
    c.sustain_hours = get<std::size_t>(j, "sustain_hours", c.sustain_hours, where);
    c.per_hour_baseline = get<bool>(j, "per_hour_baseline", false, where);
    for (const auto& l : get<std::vector<std::string>>(j, "exclude_lists", {}, where)) c.exclude_lists.insert(l);
    c.include_shared = get<bool>(j, "include_shared", false, where);
    c.anonymize = get<bool>(j, "anonymize", false, where);
    c.salt = get<std::string>(j, "salt", "", where);
    c.strict = get<bool>(j, "strict", false, where);
    c.resolve_pacing_ms = get<std::int64_t>(j, "resolve_pacing_ms", c.resolve_pacing_ms, where);
    c.tls_timeout_ms = get<std::int64_t>(j, "tls_timeout_ms", c.tls_timeout_ms, where);
    if (auto u = get<std::string>(j, "universe", "", where); !u.empty()) c.use_universe(resolve(base_dir, u));
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    return from_json(read_file(path), path.parent_path());
}

void RunConfig::use_universe(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("universe directory not found: " + dir.string());
    auto fill = [&](std::filesystem::path& slot, const char* name) {
        if (slot.empty() && std::filesystem::exists(dir / name)) slot = dir / name;
    };
    fill(inputs.certs, UniverseFiles::certs);
    fill(inputs.pdns, UniverseFiles::pdns);
    fill(inputs.resolutions, UniverseFiles::resolutions);
    fill(inputs.reverse, UniverseFiles::reverse);
    fill(inputs.hints, UniverseFiles::hints);
    fill(inputs.prefixes, UniverseFiles::prefixes);
    fill(inputs.asn_classes, UniverseFiles::asn_classes);
    fill(inputs.ground_truth, UniverseFiles::ground_truth);
    fill(inputs.flows, UniverseFiles::flows);
    fill(inputs.routing_events, UniverseFiles::routing);
    fill(inputs.snapshots, UniverseFiles::snapshots);
    if (inputs.blocklists.empty() && std::filesystem::is_directory(dir / UniverseFiles::blocklists))
        inputs.blocklists.push_back(dir / UniverseFiles::blocklists);
    if (!window || tz.seconds == 0) {
        const auto truth = dir / "truth.json";
        if (std::filesystem::exists(truth)) {
            json j;
            try {
                j = json::parse(read_file(truth));
            } catch (const json::parse_error& e) {
                throw ParseError(truth.string(), 0, "", e.what());
            }
            if (!window) window = StudyWindow::parse(j.at("window").get<std::string>());
            if (tz.seconds == 0) tz = UtcOffset::parse(j.at("timezone").get<std::string>());
        }
    }
}

void RunConfig::validate() const {
    if (catalog.empty()) throw ValidationError("no catalog configured (--catalog)");
    if (sweep_thresholds.empty()) throw ValidationError("sweep thresholds must not be empty");
    if (baseline_days == 0) throw ValidationError("baseline days must be at least 1");
    if (sustain_hours == 0) throw ValidationError("sustain hours must be at least 1");
    if (resolve_pacing_ms < 0 || tls_timeout_ms <= 0) throw ValidationError("timeouts must be positive");
    if (out.empty()) throw ValidationError("no output directory configured (--out)");
}

std::string RunConfig::parameters_json() const {
    json j;
    j["window"] = window ? json(window->to_string()) : json(nullptr);
    j["timezone"] = tz.to_string();
    j["scanner_threshold"] = scanner_threshold;
    j["sharing_threshold"] = sharing_threshold;
    j["vantages"] = vantages;
    j["sweep_thresholds"] = sweep_thresholds;
    j["baseline_days"] = baseline_days;
    j["sustain_hours"] = sustain_hours;
    j["per_hour_baseline"] = per_hour_baseline;
    j["exclude_lists"] = exclude_lists;
    j["include_shared"] = include_shared;
    j["anonymize"] = anonymize;
    j["salt_sha256"] = salt.empty() ? std::string() : sha256_hex(salt);
    j["strict"] = strict;
    return j.dump();
}

const StudyWindow& RunConfig::require_window() const {
    if (!window) throw ValidationError("no study window configured (--window START/END)");
    return *window;
}

// ---- manifest -------------------------------------------------------------------------------

std::string Manifest::to_json() const {
    json j;
    j["format"] = "iotmap-manifest/1";
    j["config_hash"] = config_hash;
    j["parameters"] = parameters.empty() ? json(nullptr) : json::parse(parameters);
    j["stages"] = json::object();
    for (const auto& [name, st] : stages) {
        json sj;
        sj["version"] = st.version;
        sj["inputs"] = st.inputs;
        sj["outputs"] = st.outputs;
        sj["counts"] = st.counts;
        j["stages"][name] = sj;
    }
    return j.dump(2) + "\n";
}

Manifest Manifest::load(const std::filesystem::path& run_dir) {
    Manifest m;
    const auto path = run_dir / run_files::manifest;
    if (!std::filesystem::exists(path)) return m;
    json j;
    try {
        j = json::parse(read_file(path));
        m.config_hash = j.at("config_hash").get<std::string>();
        if (!j.at("parameters").is_null()) m.parameters = j.at("parameters").dump();
        for (const auto& [name, sj] : j.at("stages").items()) {
            StageRecord st;
            st.version = sj.at("version").get<std::string>();
            st.inputs = sj.at("inputs").get<std::map<std::string, std::string>>();
            st.outputs = sj.at("outputs").get<std::map<std::string, std::string>>();
            st.counts = sj.at("counts").get<std::map<std::string, std::uint64_t>>();
            m.stages[name] = std::move(st);
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, "", std::string("unreadable manifest: ") + e.what());
    }
    return m;
}

void Manifest::save(const std::filesystem::path& run_dir) const { write_file(run_dir / run_files::manifest, to_json()); }

// ---- run context ----------------------------------------------------------------------------

Run::Run(RunConfig config) : config_(std::move(config)) {
    config_.validate();
    profiles_ = load_catalog(config_.catalog);
    patterns_ = PatternSet(profiles_);
    std::error_code ec;
    std::filesystem::create_directories(config_.out, ec);
    if (ec) throw IoError("cannot create run directory " + config_.out.string() + ": " + ec.message());
    manifest_ = Manifest::load(config_.out);
    manifest_.parameters = config_.parameters_json();
    manifest_.config_hash = sha256_hex(manifest_.parameters + "\n" + sha256_file(config_.catalog));
}

std::filesystem::path Run::require(const std::string& relative, const std::string& stage) const {
    const auto p = config_.out / relative;
    if (!std::filesystem::exists(p))
        throw UpstreamMissingError(stage, "missing " + relative + " in " + config_.out.string() + "; run `iotmap " +
                                              stage + "` first");
    return p;
}

std::filesystem::path Run::input(const std::filesystem::path& path, const std::string& flag) const {
    if (path.empty()) throw ValidationError("no input configured for " + flag);
    if (!std::filesystem::exists(path)) throw IoError("input not found for " + flag + ": " + path.string());
    return path;
}

void Run::begin(const std::string& stage) {
    stage_ = stage;
    current_ = StageRecord{};
}

void Run::emit(const std::string& relative, const std::string& content) {
    const auto p = config_.out / relative;
    std::filesystem::create_directories(p.parent_path());
    write_file(p, content);
    current_.outputs[relative] = sha256_hex(content);
}

void Run::track(const std::string& relative) { current_.outputs[relative] = sha256_file(config_.out / relative); }

void Run::note_input(const std::string& role, const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::recursive_directory_iterator(path))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::string all;
        for (const auto& f : files)
            all += std::filesystem::relative(f, path).generic_string() + "\t" + sha256_file(f) + "\n";
        current_.inputs[role] = sha256_hex(all);
    } else {
        current_.inputs[role] = sha256_file(path);
    }
}

void Run::count(const std::string& key, std::uint64_t value) { current_.counts[key] = value; }

void Run::commit() {
    current_.inputs["catalog"] = sha256_file(config_.catalog);
    manifest_.stages[stage_] = current_;
    manifest_.save(config_.out);
}

}  // namespace iotmap

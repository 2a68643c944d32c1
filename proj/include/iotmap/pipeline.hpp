#pragma once

// Stage wiring for the command-line tool: run configuration, the on-disk run layout, the manifest and
// the figure tables.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotmap/catalog.hpp"
#include "iotmap/discovery.hpp"
#include "iotmap/time.hpp"

namespace iotmap {

struct PdnsEndpointConfig {
    std::string url;
    /// Name of the environment variable holding the bearer token; tokens never live in configs.
    std::string token_env = "IOTMAP_PDNS_TOKEN";
    std::int64_t min_interval_ms = 1000;
    std::size_t page_size = 1000;
};

/// Input files by role. Empty paths are unset.
struct RunInputs {
    std::filesystem::path certs, pdns, resolutions, reverse, hints, prefixes, asn_classes, ground_truth, flows,
        routing_events, snapshots, tls_targets;
    std::vector<std::filesystem::path> blocklists;  // files or directories of *.netset
};

struct RunConfig {
    std::filesystem::path catalog;
    std::optional<StudyWindow> window;
    UtcOffset tz;
    std::size_t scanner_threshold = 100;
    std::size_t sharing_threshold = 2;
    std::vector<std::string> vantages;  // "id=address[:port]"
    std::filesystem::path out = "iotmap-run";
    RunInputs inputs;
    std::optional<PdnsEndpointConfig> pdns_endpoint;
    std::vector<std::size_t> sweep_thresholds = {10, 20, 50, 100, 150, 200, 300, 500, 1000};
    std::size_t baseline_days = 7;
    std::size_t sustain_hours = 2;
    bool per_hour_baseline = false;
    std::set<std::string> exclude_lists;
    /// Count shared servers in the visibility denominator as well.
    bool include_shared = false;
    bool anonymize = false;
    std::string salt;
    bool strict = false;
    std::int64_t resolve_pacing_ms = 10'000;
    std::int64_t tls_timeout_ms = 5000;

    /// Keys mirror the long flag names; relative paths resolve against `base_dir`.
    static RunConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);
    /// Fills unset inputs from a generated synthetic universe directory, and the window and
    /// timezone from its truth log when unset.
    void use_universe(const std::filesystem::path& dir);
    /// Throws ValidationError on invalid settings.
    void validate() const;
    /// Canonical JSON of the analysis parameters (no paths).
    std::string parameters_json() const;
    const StudyWindow& require_window() const;
};

// ---- manifest -------------------------------------------------------------------------------

inline constexpr const char* kStageVersion = "1";

struct StageRecord {
    std::string version = kStageVersion;
    std::map<std::string, std::string> inputs;   // role -> sha256
    std::map<std::string, std::string> outputs;  // path relative to the run dir -> sha256
    std::map<std::string, std::uint64_t> counts;
};

/// `manifest.json` of a run directory. Holds no timestamps or absolute paths, so identical inputs
/// give identical manifests wherever the run lives.
struct Manifest {
    std::string config_hash;
    std::string parameters;  // canonical parameters JSON
    std::map<std::string, StageRecord> stages;

    static Manifest load(const std::filesystem::path& run_dir);  // empty manifest if absent
    void save(const std::filesystem::path& run_dir) const;
    std::string to_json() const;
};

// ---- stages ---------------------------------------------------------------------------------

/// Run-directory layout.
namespace run_files {
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* observations = "observations";
inline constexpr const char* candidates = "candidates.tsv";
inline constexpr const char* snapshots = "snapshots";
inline constexpr const char* snapshot_index = "snapshots/index.tsv";
inline constexpr const char* sharing = "sharing.tsv";
inline constexpr const char* servers = "servers.tsv";
inline constexpr const char* enrich_failures = "enrich_failures.tsv";
inline constexpr const char* series = "series.tsv";
inline constexpr const char* scanners = "scanners.tsv";
inline constexpr const char* outages = "outages.jsonl";
inline constexpr const char* blocklist = "blocklist.jsonl";
inline constexpr const char* routing = "routing.jsonl";
inline constexpr const char* metrics = "metrics";
inline constexpr const char* figures = "figures";
}  // namespace run_files

/// Loaded catalog plus the run directory and its manifest. Every stage records itself in the
/// manifest before returning.
class Run {
public:
    explicit Run(RunConfig config);

    const RunConfig& config() const { return config_; }
    const std::vector<ProviderProfile>& profiles() const { return profiles_; }
    const PatternSet& patterns() const { return patterns_; }
    const std::filesystem::path& dir() const { return config_.out; }
    const Manifest& manifest() const { return manifest_; }

    /// Path inside the run directory; throws UpstreamMissingError naming `stage` when absent.
    std::filesystem::path require(const std::string& relative, const std::string& stage) const;
    /// Configured input of a role; throws ValidationError naming the flag when unset or missing.
    std::filesystem::path input(const std::filesystem::path& path, const std::string& flag) const;

    /// Writes a file below the run directory and remembers it as an output of the current stage.
    void emit(const std::string& relative, const std::string& content);
    /// Records a file some writer already placed below the run directory.
    void track(const std::string& relative);
    std::filesystem::path path(const std::string& relative) const { return config_.out / relative; }
    void begin(const std::string& stage);
    void note_input(const std::string& role, const std::filesystem::path& path);
    void count(const std::string& key, std::uint64_t value);
    void commit();

private:
    RunConfig config_;
    std::vector<ProviderProfile> profiles_;
    PatternSet patterns_;
    Manifest manifest_;
    std::string stage_;
    StageRecord current_;
};

namespace stage {
/// Ingests an export file of one source into `observations/<source>.tsv`.
void discover_file(Run& run, Source source, const std::filesystem::path& input);
/// Queries the configured passive-DNS endpoint with one glob per provider parent domain.
void discover_pdns_endpoint(Run& run);
/// Resolves the names observed so far from every vantage.
void discover_resolve(Run& run, bool unsafe_fast = false);
/// Handshakes with the targets file and ingests the presented certificates.
void discover_tls(Run& run, const std::filesystem::path& targets);
void fuse(Run& run);
void classify(Run& run);
void footprint(Run& run);
void flows_analyze(Run& run);
void flows_sweep(Run& run);
void flows_ablate(Run& run);
void disrupt_outage(Run& run);
void disrupt_blocklist(Run& run);
void disrupt_routing(Run& run);
/// Writes `figures/<file>` for one figure id, or every available figure for "all".
std::vector<std::string> report(Run& run, const std::string& figure_id);
}  // namespace stage

/// Stage names in pipeline order, as accepted by run_pipeline.
const std::vector<std::string>& pipeline_stages();

/// Runs the requested stages from files in order (all when empty).
void run_pipeline(Run& run, const std::vector<std::string>& stages = {});

// ---- figures --------------------------------------------------------------------------------

struct FigureSpec {
    std::string id;      // fig5
    std::string file;    // fig5_sweep.csv
    std::string metric;  // metrics/sweep.csv
    std::string stage;   // stage producing the metric
    std::vector<std::string> columns;
};

const std::vector<FigureSpec>& figure_specs();
const FigureSpec& figure_spec(const std::string& id);

/// Stable pseudonyms T1.., D1.., O1.. by catalog group; the order inside a group follows
/// sha256(salt + ":" + id), so the mapping depends only on the salt and the provider id.
std::map<std::string, std::string> provider_pseudonyms(const std::vector<ProviderProfile>& profiles,
                                                       const std::string& salt);

/// Minimal CSV table with a header row; values are written as given (no quoting needed for the
/// figure schemas, fields never contain commas).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const;
    static CsvTable parse(const std::string& text);
    std::size_t column(const std::string& name) const;  // throws ValidationError when absent
};

}  // namespace iotmap

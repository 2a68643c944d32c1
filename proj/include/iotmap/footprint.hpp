#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iotmap/catalog.hpp"
#include "iotmap/fusion.hpp"
#include "iotmap/geo.hpp"
#include "iotmap/net.hpp"

namespace iotmap {

// ---- location -------------------------------------------------------------------------------

/// Ordered by tie-break priority, highest first.
enum class HintSource { region_token, prefix_announcement, scan_metadata, latency_probe };

std::string_view hint_source_name(HintSource s);
std::optional<HintSource> parse_hint_source(std::string_view s);

struct LocationHint {
    IpAddress ip;
    HintSource source = HintSource::scan_metadata;
    Location location;
};

enum class Confidence { unanimous, majority, tiebreak };
std::string_view confidence_name(Confidence c);
std::optional<Confidence> parse_confidence(std::string_view s);

struct Located {
    Location location;
    Confidence confidence = Confidence::unanimous;
};

/// A region token known to `region_map` decides the location outright. Otherwise the hints vote by
/// country; ties go to the country backed by the highest-priority source, then the smaller code.
/// City survives only when every hint for the winning country names the same one.
/// Throws ValidationError("unlocatable ...") without a usable token and without hints.
Located locate(const IpAddress& ip, const std::optional<std::string>& region_token,
               const std::map<std::string, Location>* region_map, std::span<const LocationHint> hints);

/// Lines `ip<TAB>source<TAB>country<TAB>city` (city `-` when unknown).
std::unordered_map<IpAddress, std::vector<LocationHint>> load_hints(const std::filesystem::path& path);

// ---- routing --------------------------------------------------------------------------------

struct PrefixOrigin {
    Cidr prefix;
    std::vector<std::uint32_t> origins;  // ascending, non-empty

    std::uint32_t primary() const { return origins.front(); }
};

/// Immutable-after-load longest-prefix-match table, one hash map per prefix length.
class PrefixTable {
public:
    void add(const Cidr& prefix, std::vector<std::uint32_t> origins);
    const PrefixOrigin* lookup(const IpAddress& ip) const;
    std::size_t size() const { return entries_.size(); }
    const std::vector<PrefixOrigin>& entries() const { return entries_; }

    /// Rows `prefix<TAB>length<TAB>asn`, multi-origin ASNs joined by `_` (or `,` for AS sets).
    static PrefixTable load(const std::filesystem::path& path);

private:
    struct PerFamily {
        std::array<std::unordered_map<IpAddress, std::size_t>, 129> by_length;
        std::vector<unsigned> lengths;  // present lengths, longest first
    };
    PerFamily& family(Family f) { return f == Family::v4 ? v4_ : v6_; }
    const PerFamily& family(Family f) const { return f == Family::v4 ? v4_ : v6_; }

    std::vector<PrefixOrigin> entries_;
    PerFamily v4_, v6_;
};

std::vector<std::uint32_t> parse_origins(std::string_view text);

/// Longest covering prefix. Throws ValidationError("unrouted ...") when nothing covers ip.
const PrefixOrigin& map_prefix_asn(const IpAddress& ip, const PrefixTable& table);

// ---- servers --------------------------------------------------------------------------------

struct BackendServer {
    IpAddress ip;
    std::string provider_id;
    Location location;
    Confidence location_confidence = Confidence::unanimous;
    Cidr prefix;
    std::uint32_t asn = 0;
    std::vector<std::uint32_t> origins;
    Sharing sharing = Sharing::dedicated;
    /// False when the reverse index had no entry; such servers count as dedicated.
    bool sharing_evidence = true;
    SourceMask sources = 0;

    bool operator==(const BackendServer&) const = default;
};

struct EnrichFailure {
    std::string provider_id;
    IpAddress ip;
    std::string reason;  // unlocatable | unrouted
};

struct EnrichResult {
    std::vector<BackendServer> servers;  // candidate order
    std::vector<EnrichFailure> failures;
};

/// Builds BackendServer records. Region tokens come from the candidate's FQDNs; sharing from the
/// verdicts (keyed by provider and ip).
EnrichResult enrich(const CandidateSet& candidates, const std::vector<ProviderProfile>& profiles,
                    const PatternSet& patterns, std::span<const SharingVerdict> verdicts,
                    const std::unordered_map<IpAddress, std::vector<LocationHint>>& hints,
                    const PrefixTable& table);

void write_servers(const std::filesystem::path& path, std::span<const BackendServer> servers);
std::vector<BackendServer> read_servers(const std::filesystem::path& path);

// ---- strategy -------------------------------------------------------------------------------

enum class OperatorClass { self, cloud, other };

/// ASN -> operator class and name. Rows `asn<TAB>class<TAB>operator`, class self|cloud|cdn|other.
struct AsnClassMap {
    std::unordered_map<std::uint32_t, std::pair<OperatorClass, std::string>> entries;
    static AsnClassMap load(const std::filesystem::path& path);
};

enum class Strategy { di, pr, di_pr, undetermined };
std::string_view strategy_name(Strategy s);  // DI | PR | DI+PR | undetermined

struct StrategyReport {
    std::string provider_id;
    Strategy strategy = Strategy::undetermined;
    std::size_t self_servers = 0;
    std::size_t cloud_servers = 0;
    std::size_t other_servers = 0;
    std::vector<std::uint32_t> unmapped_asns;
};

/// Servers in the profile's own ASNs count as self, then the class map decides; unknown ASNs are
/// "other" and listed. DI: only self; PR: only cloud; DI+PR: both; other servers do not vote.
StrategyReport infer_strategy(const ProviderProfile& provider, std::span<const BackendServer> servers,
                              const AsnClassMap& org_map);

// ---- stability and diversity ----------------------------------------------------------------

struct StabilityDiff {
    std::string provider_id;
    Timestamp date_a = 0;
    Timestamp date_b = 0;
    std::vector<IpAddress> in_both;
    std::vector<IpAddress> only_a;
    std::vector<IpAddress> only_b;
};

/// One diff per provider present in either snapshot, ordered by provider.
std::vector<StabilityDiff> diff_snapshots(const CandidateSet& a, const CandidateSet& b, Timestamp date_a = 0,
                                          Timestamp date_b = 0);

struct DiversityRow {
    std::string provider_id;
    std::size_t servers = 0;
    std::size_t asns = 0;
    std::size_t v4_slash24 = 0;
    std::size_t v6_slash56 = 0;
    std::size_t locations = 0;
    std::size_t countries = 0;
    std::array<std::size_t, 3> confidence{};  // unanimous, majority, tiebreak
};

std::vector<DiversityRow> diversity_report(std::span<const BackendServer> servers);

}  // namespace iotmap

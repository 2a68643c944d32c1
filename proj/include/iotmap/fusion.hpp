#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iotmap/catalog.hpp"
#include "iotmap/discovery.hpp"

namespace iotmap {

/// Bit set over Source values.
using SourceMask = std::uint8_t;

inline constexpr SourceMask source_bit(Source s) { return static_cast<SourceMask>(s); }
std::string format_sources(SourceMask m);  // e.g. "passive-dns,tls-cert"
SourceMask parse_sources(std::string_view text);

struct CandidateAddress {
    std::string provider_id;
    IpAddress ip;
    SourceMask sources = 0;
    Timestamp first_seen = 0;
    Timestamp last_seen = 0;
    std::set<std::string> fqdns;

    bool has(Source s) const { return (sources & source_bit(s)) != 0; }
    bool operator==(const CandidateAddress&) const = default;
};

/// Candidates ordered by (provider_id, ip).
using CandidateSet = std::vector<CandidateAddress>;

CandidateSet fuse(std::span<const Observation> observations);

/// Candidates of one provider; `set` must be ordered as produced by fuse().
std::span<const CandidateAddress> provider_slice(const CandidateSet& set, std::string_view provider_id);

enum class SourceClass { tls_only, pdns_only, adns_only, multiple };
inline constexpr std::array<SourceClass, 4> kSourceClasses{SourceClass::tls_only, SourceClass::pdns_only,
                                                           SourceClass::adns_only, SourceClass::multiple};
std::string_view source_class_name(SourceClass c);
SourceClass classify_sources(SourceMask m);

struct SourceShare {
    std::string provider_id;
    Family family = Family::v4;
    std::array<std::size_t, 4> counts{};
    std::size_t total = 0;

    std::size_t count(SourceClass c) const { return counts[static_cast<std::size_t>(c)]; }
    double fraction(SourceClass c) const { return total ? static_cast<double>(count(c)) / total : 0.0; }
};

/// One entry per (provider, family) that has at least one candidate.
std::vector<SourceShare> source_contribution(const CandidateSet& candidates);

/// ip -> distinct FQDNs that resolved to it.
class ReverseIndex {
public:
    void add(const IpAddress& ip, std::string fqdn);
    const std::vector<std::string>* find(const IpAddress& ip) const;
    std::size_t size() const { return map_.size(); }
    /// Sorts and de-duplicates the name lists. Called by the builders; call again after add().
    void finalize();

    const std::unordered_map<IpAddress, std::vector<std::string>>& entries() const { return map_; }

private:
    std::unordered_map<IpAddress, std::vector<std::string>> map_;
};

/// Inverts A/AAAA rows (rdata -> rrname). With a window, only rows overlapping it are used.
ReverseIndex build_reverse_index(std::span<const PassiveDnsRecord> rows,
                                 const std::optional<StudyWindow>& window = std::nullopt);

enum class Sharing { dedicated, shared };
std::string_view sharing_name(Sharing s);

struct SharingVerdict {
    IpAddress ip;
    std::string provider_id;
    std::size_t non_matching_domain_count = 0;
    std::size_t matching_domain_count = 0;
    std::size_t threshold = 0;
    Sharing verdict = Sharing::dedicated;

    bool operator==(const SharingVerdict&) const = default;
};

inline constexpr std::size_t kDefaultSharingThreshold = 2;

/// Throws ValidationError("no reverse data ...") when the index has no entry for ip.
SharingVerdict classify_sharing(const IpAddress& ip, const std::string& provider_id, const ReverseIndex& index,
                                const PatternSet& patterns, std::size_t threshold = kDefaultSharingThreshold);

struct SharingReport {
    std::vector<SharingVerdict> verdicts;  // candidate order
    std::vector<std::size_t> no_reverse_data;  // indices into the candidate set
    std::size_t threshold = 0;
};

/// Classifies every candidate. The parallel kernel evaluates each distinct name once and shares
/// the result between addresses; the serial reference matches name by name.
SharingReport classify_candidates(const CandidateSet& candidates, const ReverseIndex& index,
                                  const PatternSet& patterns, std::size_t threshold = kDefaultSharingThreshold);
SharingReport classify_candidates_serial(const CandidateSet& candidates, const ReverseIndex& index,
                                         const PatternSet& patterns,
                                         std::size_t threshold = kDefaultSharingThreshold);

struct GroundTruthSet {
    std::string provider_id;
    std::vector<Cidr> prefixes;
};

/// Lines `provider<TAB>cidr`. Overlapping prefixes of one provider are rejected.
std::vector<GroundTruthSet> load_ground_truth(const std::filesystem::path& path);
void validate_ground_truth(const GroundTruthSet& truth);

struct CoverageReport {
    std::string provider_id;
    std::vector<IpAddress> identified_in_truth;
    std::vector<IpAddress> identified_outside_truth;
    std::vector<IpAddress> truth_active;   // active ∩ truth, when active addresses were given
    std::vector<IpAddress> missed_active;  // truth_active − identified
};

CoverageReport validate_against_ground_truth(const CandidateSet& candidates, const GroundTruthSet& truth,
                                             const std::vector<IpAddress>* active_ips = nullptr);

/// Dated snapshot file name, `candidates-YYYY-MM-DD.tsv`.
std::string snapshot_filename(Timestamp day);
std::optional<Timestamp> snapshot_date(const std::filesystem::path& path);

void write_candidates(const std::filesystem::path& path, const CandidateSet& candidates);
CandidateSet read_candidates(const std::filesystem::path& path);

void write_sharing(const std::filesystem::path& path, const SharingReport& report, const CandidateSet& candidates);
/// Reads verdict lines back; `no-reverse-data` lines are skipped.
std::vector<SharingVerdict> read_sharing(const std::filesystem::path& path);

}  // namespace iotmap

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "iotmap/geo.hpp"

namespace iotmap {

enum class Transport : std::uint8_t { tcp = 6, udp = 17 };

std::string_view transport_name(Transport t);
std::optional<Transport> parse_transport(std::string_view s);

struct DocumentedProtocol {
    std::string name;
    std::uint16_t port = 0;
    Transport transport = Transport::tcp;
};

enum class SubdomainRule { wildcard, literal_set, protocol_prefixed };

std::string_view subdomain_rule_name(SubdomainRule r);

/// Leftmost part of a backend FQDN.
///  - wildcard: one or more arbitrary labels (customer id, hash, ...)
///  - literal_set: exactly one label out of `labels`
///  - protocol_prefixed: wildcard labels followed by one label out of `labels` (e.g. iot-as-mqtt)
struct SubdomainSpec {
    SubdomainRule rule = SubdomainRule::wildcard;
    bool optional = false;
    std::vector<std::string> labels;
};

/// Region slot between the service labels and the parent domain.
/// `tokens` enumerate known regions; `token_pattern`, when set, admits any token matching it.
struct RegionGrammar {
    std::vector<std::string> tokens;
    std::string token_pattern;
    bool required = false;

    bool empty() const noexcept { return tokens.empty() && token_pattern.empty(); }
};

enum class ProviderGroup { top, cloud_dependent, other };

std::string_view provider_group_name(ProviderGroup g);

struct ProviderProfile {
    std::string id;
    std::string display_name;
    ProviderGroup group = ProviderGroup::other;
    SubdomainSpec subdomain;
    std::vector<std::string> service_labels;
    RegionGrammar region;
    std::string parent_domain;
    std::vector<DocumentedProtocol> protocols;
    std::set<std::uint32_t> org_asns;
    bool anycast = false;
    bool ipv6_supported = false;
    /// When non-empty, only flows on these ports count as IoT traffic for this provider.
    std::vector<std::uint16_t> dedicated_ports;
    std::map<std::string, Location> region_map;
};

/// Compiled, immutable matcher for one provider.
struct DomainPattern {
    std::string provider_id;
    std::string expression;
    /// Index of the capture group that yields the region token.
    std::optional<std::size_t> region_group;
    std::string parent_domain;
    std::shared_ptr<const std::regex> compiled;
};

struct MatchResult {
    std::string provider_id;
    bool matched = false;
    std::optional<std::string> region_token;
    std::string normalized_fqdn;
};

/// Lowercase and strip one trailing dot.
std::string normalize_fqdn(std::string_view fqdn);

/// Reads a JSON-lines catalog. Region map files are resolved relative to the catalog's directory.
std::vector<ProviderProfile> load_catalog(const std::filesystem::path& path);
/// Same parser, but collects every violation instead of stopping at the first.
std::vector<std::string> validate_catalog(const std::filesystem::path& path);

/// Checks the profile invariants; throws ValidationError naming the violated one.
void validate_profile(const ProviderProfile& profile);

DomainPattern compile_pattern(const ProviderProfile& profile);
MatchResult match_fqdn(const DomainPattern& pattern, std::string_view fqdn);

/// All compiled patterns of a catalog; matching reports every provider that accepts a name.
class PatternSet {
public:
    PatternSet() = default;
    explicit PatternSet(const std::vector<ProviderProfile>& profiles);

    std::vector<MatchResult> match_all(std::string_view fqdn) const;
    bool any_match(std::string_view fqdn) const;
    const DomainPattern* find(std::string_view provider_id) const;
    const std::vector<DomainPattern>& patterns() const noexcept { return patterns_; }

private:
    std::vector<DomainPattern> patterns_;
};

const ProviderProfile* find_profile(const std::vector<ProviderProfile>& profiles, std::string_view id);

}  // namespace iotmap

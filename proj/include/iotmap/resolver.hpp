#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include "iotmap/discovery.hpp"
#include "iotmap/net.hpp"

namespace iotmap {

/// Default minimum spacing between two queries sent to the same resolver.
inline constexpr std::chrono::milliseconds kDefaultPacing{10'000};

struct Vantage {
    std::string id;
    IpAddress server;
    std::uint16_t port = 53;

    /// "id=address" or "id=address:port"; IPv6 addresses with a port use brackets.
    static Vantage parse(std::string_view spec);
};

struct ResolveOptions {
    std::chrono::milliseconds pacing = kDefaultPacing;
    /// Allows pacing below the default. Only meant for local fixtures.
    bool unsafe_fast = false;
    std::chrono::milliseconds query_timeout{2000};
    bool query_aaaa = true;
};

/// Queries every fqdn against every vantage (A, then AAAA). One worker per vantage sends queries
/// strictly one at a time, at least `pacing` apart. Results are ordered by (fqdn, vantage order).
std::vector<ResolutionResult> resolve_active(const std::vector<std::string>& fqdns,
                                             const std::vector<Vantage>& vantages, const ResolveOptions& opts = {});

namespace dns {

// Minimal wire-format helpers, shared with the fixture server in the tests.
inline constexpr std::uint16_t kTypeA = 1;
inline constexpr std::uint16_t kTypeAAAA = 28;

std::vector<std::uint8_t> build_query(std::uint16_t id, std::string_view name, std::uint16_t qtype);

struct Question {
    std::uint16_t id = 0;
    std::string name;
    std::uint16_t qtype = 0;
};
bool parse_question(const std::uint8_t* data, std::size_t size, Question& out);

/// Response echoing the question, rcode in the low bits, one answer record per address of `qtype`.
std::vector<std::uint8_t> build_response(const Question& q, int rcode, const std::vector<IpAddress>& answers);

struct Response {
    std::uint16_t id = 0;
    int rcode = 0;
    std::vector<IpAddress> addresses;
};
bool parse_response(const std::uint8_t* data, std::size_t size, Response& out);

}  // namespace dns

}  // namespace iotmap

#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iotmap/discovery.hpp"

namespace iotmap {

struct TlsTarget {
    IpAddress ip;
    std::uint16_t port = 443;
    std::string sni;  // empty: no SNI extension

    /// "address:port[,sni]"; IPv6 addresses in brackets.
    static TlsTarget parse(std::string_view spec);
};

enum class TlsFailure { none, refused, timeout, handshake_failure, unreachable };

std::string_view tls_failure_name(TlsFailure f);

struct TlsProbeResult {
    TlsTarget target;
    std::optional<CertScanRecord> record;
    TlsFailure failure = TlsFailure::none;
    std::string detail;
};

struct TlsOptions {
    std::chrono::milliseconds timeout{5000};
    /// Upper bound on simultaneous connections.
    std::size_t max_in_flight = 16;
    /// How long to wait after the handshake for a late alert (TLS 1.3 servers reject a missing
    /// client certificate only after the client finished).
    std::chrono::milliseconds alert_grace{250};
};

/// Handshakes with every distinct (ip, port) once and extracts the presented leaf certificate.
/// Network problems are per-target results. Output follows the input order of first occurrence.
std::vector<TlsProbeResult> collect_tls(const std::vector<TlsTarget>& targets, const TlsOptions& opts = {});

}  // namespace iotmap

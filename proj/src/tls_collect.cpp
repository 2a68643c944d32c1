#include "iotmap/tls_collect.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/err.h>
#include <openssl/ssl.h>
#include <openssl/x509v3.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <csignal>
#include <charconv>
#include <cstring>
#include <ctime>
#include <memory>
#include <set>
#include <thread>

#include "iotmap/error.hpp"

namespace iotmap {
namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
}

struct Fd {
    int fd = -1;
    ~Fd() {
        if (fd >= 0) ::close(fd);
    }
};

// Non-blocking connect bounded by the deadline.
TlsFailure connect_to(const TlsTarget& t, Clock::time_point deadline, Fd& sock, std::string& detail) {
    sockaddr_storage ss{};
    socklen_t len = 0;
    if (t.ip.is_v4()) {
        auto* sin = reinterpret_cast<sockaddr_in*>(&ss);
        sin->sin_family = AF_INET;
        sin->sin_port = htons(t.port);
        sin->sin_addr.s_addr = htonl(t.ip.v4_value());
        len = sizeof(sockaddr_in);
    } else {
        auto* sin6 = reinterpret_cast<sockaddr_in6*>(&ss);
        sin6->sin6_family = AF_INET6;
        sin6->sin6_port = htons(t.port);
        std::memcpy(&sin6->sin6_addr, t.ip.bytes().data(), 16);
        len = sizeof(sockaddr_in6);
    }
    sock.fd = ::socket(ss.ss_family, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
    if (sock.fd < 0) {
        detail = std::strerror(errno);
        return TlsFailure::unreachable;
    }
    int err = 0;
    if (::connect(sock.fd, reinterpret_cast<sockaddr*>(&ss), len) != 0) {
        if (errno != EINPROGRESS) {
            err = errno;
        } else {
            pollfd p{sock.fd, POLLOUT, 0};
            const int n = ::poll(&p, 1, remaining_ms(deadline));
            if (n == 0) return TlsFailure::timeout;
            socklen_t elen = sizeof err;
            ::getsockopt(sock.fd, SOL_SOCKET, SO_ERROR, &err, &elen);
        }
    }
    if (err == 0) return TlsFailure::none;
    detail = std::strerror(err);
    if (err == ECONNREFUSED) return TlsFailure::refused;
    if (err == ETIMEDOUT) return TlsFailure::timeout;
    return TlsFailure::unreachable;
}

Timestamp asn1_epoch(const ASN1_TIME* t) {
    std::tm tm{};
    if (!t || ASN1_TIME_to_tm(t, &tm) != 1) return 0;
    return static_cast<Timestamp>(::timegm(&tm));
}

std::vector<std::string> certificate_names(X509* cert) {
    std::vector<std::string> names;
    if (auto* gens = static_cast<GENERAL_NAMES*>(X509_get_ext_d2i(cert, NID_subject_alt_name, nullptr, nullptr))) {
        for (int i = 0; i < sk_GENERAL_NAME_num(gens); ++i) {
            const GENERAL_NAME* g = sk_GENERAL_NAME_value(gens, i);
            if (g->type != GEN_DNS) continue;
            const auto* s = g->d.dNSName;
            names.emplace_back(reinterpret_cast<const char*>(ASN1_STRING_get0_data(s)),
                               static_cast<std::size_t>(ASN1_STRING_length(s)));
        }
        GENERAL_NAMES_free(gens);
    }
    X509_NAME* subject = X509_get_subject_name(cert);
    for (int idx = -1; (idx = X509_NAME_get_index_by_NID(subject, NID_commonName, idx)) >= 0;) {
        const ASN1_STRING* s = X509_NAME_ENTRY_get_data(X509_NAME_get_entry(subject, idx));
        names.emplace_back(reinterpret_cast<const char*>(ASN1_STRING_get0_data(s)),
                           static_cast<std::size_t>(ASN1_STRING_length(s)));
    }
    for (auto& n : names) n = normalize_fqdn(n);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

std::string ssl_error_text() {
    const unsigned long e = ERR_get_error();
    ERR_clear_error();
    if (e == 0) return "handshake failed";
    char buf[256];
    ERR_error_string_n(e, buf, sizeof buf);
    return buf;
}

// Drives a non-blocking SSL operation until it completes, fails, or the deadline passes.
// Returns 1 on success, 0 on timeout, -1 on failure.
template <typename Op>
int drive(SSL* ssl, int fd, Clock::time_point deadline, Op&& op) {
    while (true) {
        const int rc = op();
        if (rc > 0) return 1;
        const int err = SSL_get_error(ssl, rc);
        short events = 0;
        if (err == SSL_ERROR_WANT_READ) events = POLLIN;
        else if (err == SSL_ERROR_WANT_WRITE) events = POLLOUT;
        else return -1;
        pollfd p{fd, events, 0};
        if (::poll(&p, 1, remaining_ms(deadline)) <= 0) return 0;
    }
}

TlsProbeResult probe(SSL_CTX* ctx, const TlsTarget& t, const TlsOptions& opts) {
    TlsProbeResult out;
    out.target = t;
    const auto deadline = Clock::now() + opts.timeout;
    Fd sock;
    out.failure = connect_to(t, deadline, sock, out.detail);
    if (out.failure != TlsFailure::none) return out;

    std::unique_ptr<SSL, decltype(&SSL_free)> ssl(SSL_new(ctx), SSL_free);
    SSL_set_fd(ssl.get(), sock.fd);
    if (!t.sni.empty()) SSL_set_tlsext_host_name(ssl.get(), t.sni.c_str());
    ERR_clear_error();
    const int hs = drive(ssl.get(), sock.fd, deadline, [&] { return SSL_connect(ssl.get()); });
    if (hs == 0) {
        out.failure = TlsFailure::timeout;
        out.detail = "handshake timed out";
        return out;
    }
    if (hs < 0) {
        out.failure = TlsFailure::handshake_failure;
        out.detail = ssl_error_text();
        return out;
    }

    // A server demanding a client certificate under TLS 1.3 answers our Finished with an alert.
    const auto grace = std::min(Clock::now() + opts.alert_grace, deadline);
    while (true) {
        char byte;
        const int rc = SSL_peek(ssl.get(), &byte, 1);
        if (rc > 0) break;
        const int err = SSL_get_error(ssl.get(), rc);
        if (err == SSL_ERROR_SSL) {
            out.failure = TlsFailure::handshake_failure;
            out.detail = ssl_error_text();
            return out;
        }
        if (err != SSL_ERROR_WANT_READ) break;
        pollfd p{sock.fd, POLLIN, 0};
        if (::poll(&p, 1, remaining_ms(grace)) <= 0) break;
    }
    ERR_clear_error();

    X509* cert = SSL_get_peer_certificate(ssl.get());
    if (!cert) {
        out.failure = TlsFailure::handshake_failure;
        out.detail = "no peer certificate";
        return out;
    }
    CertScanRecord rec;
    rec.ip = t.ip;
    rec.port = t.port;
    rec.names = certificate_names(cert);
    rec.not_before = asn1_epoch(X509_get0_notBefore(cert));
    rec.not_after = asn1_epoch(X509_get0_notAfter(cert));
    rec.observed_at =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
    X509_free(cert);
    out.record = std::move(rec);
    SSL_shutdown(ssl.get());
    return out;
}

}  // namespace

TlsTarget TlsTarget::parse(std::string_view spec) {
    TlsTarget t;
    if (const auto comma = spec.find(','); comma != std::string_view::npos) {
        t.sni = normalize_fqdn(std::string(spec.substr(comma + 1)));
        spec = spec.substr(0, comma);
    }
    std::string_view host, port;
    if (!spec.empty() && spec.front() == '[') {
        const auto close = spec.find(']');
        if (close == std::string_view::npos || close + 1 >= spec.size() || spec[close + 1] != ':')
            throw ParseError("", 0, "target", "expected [ADDRESS]:PORT");
        host = spec.substr(1, close - 1);
        port = spec.substr(close + 2);
    } else {
        const auto colon = spec.rfind(':');
        if (colon == std::string_view::npos) throw ParseError("", 0, "target", "expected ADDRESS:PORT");
        host = spec.substr(0, colon);
        port = spec.substr(colon + 1);
    }
    auto ip = IpAddress::parse(host);
    if (!ip) throw ParseError("", 0, "target", "invalid address '" + std::string(host) + "'");
    t.ip = *ip;
    unsigned p = 0;
    auto r = std::from_chars(port.data(), port.data() + port.size(), p);
    if (r.ec != std::errc{} || r.ptr != port.data() + port.size() || p == 0 || p > 65535)
        throw ParseError("", 0, "target", "invalid port '" + std::string(port) + "'");
    t.port = static_cast<std::uint16_t>(p);
    return t;
}

std::string_view tls_failure_name(TlsFailure f) {
    switch (f) {
        case TlsFailure::none: return "ok";
        case TlsFailure::refused: return "refused";
        case TlsFailure::timeout: return "timeout";
        case TlsFailure::handshake_failure: return "handshake-failure";
        case TlsFailure::unreachable: return "unreachable";
    }
    return "?";
}

std::vector<TlsProbeResult> collect_tls(const std::vector<TlsTarget>& targets, const TlsOptions& opts) {
    if (opts.max_in_flight == 0) throw ValidationError("max_in_flight must be positive");
    std::signal(SIGPIPE, SIG_IGN);  // peers may reset mid-shutdown
    std::vector<TlsTarget> unique;
    std::set<std::pair<IpAddress, std::uint16_t>> seen;
    for (const auto& t : targets)
        if (seen.emplace(t.ip, t.port).second) unique.push_back(t);

    std::unique_ptr<SSL_CTX, decltype(&SSL_CTX_free)> ctx(SSL_CTX_new(TLS_client_method()), SSL_CTX_free);
    if (!ctx) throw Error("cannot create TLS context");
    SSL_CTX_set_verify(ctx.get(), SSL_VERIFY_NONE, nullptr);

    std::vector<TlsProbeResult> results(unique.size());
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::min(opts.max_in_flight, unique.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < unique.size();) results[i] = probe(ctx.get(), unique[i], opts);
        });
    for (auto& th : pool) th.join();
    return results;
}

}  // namespace iotmap

#pragma once

// Local network endpoints used by the discovery tests: a UDP DNS server with a fixed answer table
// and a TLS server presenting a freshly generated self-signed certificate.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/ssl.h>
#include <openssl/x509v3.h>

#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "iotmap/net.hpp"
#include "iotmap/resolver.hpp"

namespace iotmap::testing {

inline int bind_loopback(int type, std::uint16_t& port) {
    const int fd = ::socket(AF_INET, type, 0);
    if (fd < 0) throw std::runtime_error("socket");
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sin{};
    sin.sin_family = AF_INET;
    sin.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sin), sizeof sin) != 0) throw std::runtime_error("bind");
    socklen_t len = sizeof sin;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&sin), &len);
    port = ntohs(sin.sin_port);
    return fd;
}

/// A loopback port with nothing listening behind it.
inline std::uint16_t closed_port() {
    std::uint16_t port = 0;
    const int fd = bind_loopback(SOCK_STREAM, port);
    ::close(fd);
    return port;
}

class DnsFixture {
public:
    using Clock = std::chrono::steady_clock;

    explicit DnsFixture(std::map<std::string, std::vector<IpAddress>> answers) : answers_(std::move(answers)) {
        fd_ = bind_loopback(SOCK_DGRAM, port_);
        thread_ = std::thread([this] { loop(); });
    }
    ~DnsFixture() {
        stop_ = true;
        thread_.join();
        ::close(fd_);
    }

    std::uint16_t port() const { return port_; }
    Vantage vantage(const std::string& id) const { return {id, IpAddress::from_string("127.0.0.1"), port_}; }

    std::vector<Clock::time_point> arrivals() const {
        std::lock_guard lock(mu_);
        return arrivals_;
    }
    std::vector<dns::Question> questions() const {
        std::lock_guard lock(mu_);
        return questions_;
    }

private:
    void loop() {
        std::uint8_t buf[1500];
        while (!stop_) {
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, 20) <= 0) continue;
            sockaddr_in from{};
            socklen_t len = sizeof from;
            const auto n = ::recvfrom(fd_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &len);
            if (n <= 0) continue;
            dns::Question q;
            if (!dns::parse_question(buf, static_cast<std::size_t>(n), q)) continue;
            {
                std::lock_guard lock(mu_);
                arrivals_.push_back(Clock::now());
                questions_.push_back(q);
            }
            auto it = answers_.find(q.name);
            const auto reply = it == answers_.end() ? dns::build_response(q, 3, {}) : dns::build_response(q, 0, it->second);
            ::sendto(fd_, reply.data(), reply.size(), 0, reinterpret_cast<sockaddr*>(&from), len);
        }
    }

    std::map<std::string, std::vector<IpAddress>> answers_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stop_{false};
    std::thread thread_;
    mutable std::mutex mu_;
    std::vector<Clock::time_point> arrivals_;
    std::vector<dns::Question> questions_;
};

struct CertSpec {
    std::string common_name;
    std::vector<std::string> dns_names;
    long not_before_offset = -3600;  // seconds relative to now
    long not_after_offset = 86400;
};

/// Self-signed P-256 certificate and key.
struct SelfSigned {
    EVP_PKEY* key = nullptr;
    X509* cert = nullptr;

    explicit SelfSigned(const CertSpec& spec) {
        key = EVP_EC_gen("P-256");
        cert = X509_new();
        X509_set_version(cert, 2);
        ASN1_INTEGER_set(X509_get_serialNumber(cert), 1);
        X509_gmtime_adj(X509_getm_notBefore(cert), spec.not_before_offset);
        X509_gmtime_adj(X509_getm_notAfter(cert), spec.not_after_offset);
        X509_set_pubkey(cert, key);
        X509_NAME* name = X509_get_subject_name(cert);
        X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                                   reinterpret_cast<const unsigned char*>(spec.common_name.c_str()), -1, -1, 0);
        X509_set_issuer_name(cert, name);
        if (!spec.dns_names.empty()) {
            std::string san;
            for (const auto& n : spec.dns_names) san += (san.empty() ? "DNS:" : ",DNS:") + n;
            X509V3_CTX ctx;
            X509V3_set_ctx_nodb(&ctx);
            X509V3_set_ctx(&ctx, cert, cert, nullptr, nullptr, 0);
            X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, NID_subject_alt_name, san.c_str());
            X509_add_ext(cert, ext, -1);
            X509_EXTENSION_free(ext);
        }
        X509_sign(cert, key, EVP_sha256());
    }
    ~SelfSigned() {
        X509_free(cert);
        EVP_PKEY_free(key);
    }
    SelfSigned(const SelfSigned&) = delete;
    SelfSigned& operator=(const SelfSigned&) = delete;
};

class TlsFixture {
public:
    TlsFixture(const CertSpec& spec, bool require_client_cert) : cert_(spec) {
        ctx_ = SSL_CTX_new(TLS_server_method());
        SSL_CTX_use_certificate(ctx_, cert_.cert);
        SSL_CTX_use_PrivateKey(ctx_, cert_.key);
        if (require_client_cert)
            SSL_CTX_set_verify(ctx_, SSL_VERIFY_PEER | SSL_VERIFY_FAIL_IF_NO_PEER_CERT, nullptr);
        fd_ = bind_loopback(SOCK_STREAM, port_);
        ::listen(fd_, 16);
        thread_ = std::thread([this] { loop(); });
    }
    ~TlsFixture() {
        stop_ = true;
        thread_.join();
        ::close(fd_);
        SSL_CTX_free(ctx_);
    }

    std::uint16_t port() const { return port_; }
    int accepted() const { return accepted_; }
    std::vector<std::string> sni_seen() const {
        std::lock_guard lock(mu_);
        return sni_;
    }

private:
    void loop() {
        while (!stop_) {
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, 20) <= 0) continue;
            const int c = ::accept(fd_, nullptr, nullptr);
            if (c < 0) continue;
            ++accepted_;
            timeval tv{2, 0};
            ::setsockopt(c, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
            SSL* ssl = SSL_new(ctx_);
            SSL_set_fd(ssl, c);
            if (SSL_accept(ssl) == 1) {
                const char* name = SSL_get_servername(ssl, TLSEXT_NAMETYPE_host_name);
                {
                    std::lock_guard lock(mu_);
                    sni_.push_back(name ? name : "");
                }
                char buf[64];
                while (SSL_read(ssl, buf, sizeof buf) > 0) {
                }
            }
            SSL_free(ssl);
            ::close(c);
        }
    }

    SelfSigned cert_;
    SSL_CTX* ctx_ = nullptr;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stop_{false};
    std::atomic<int> accepted_{0};
    std::thread thread_;
    mutable std::mutex mu_;
    std::vector<std::string> sni_;
};

}  // namespace iotmap::testing

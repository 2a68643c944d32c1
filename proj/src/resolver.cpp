#include "iotmap/resolver.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <random>
#include <thread>

#include "iotmap/error.hpp"

namespace iotmap {

namespace dns {
namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
}

std::uint16_t get16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

void put_name(std::vector<std::uint8_t>& b, std::string_view name) {
    while (!name.empty()) {
        const auto dot = name.find('.');
        const auto label = name.substr(0, dot);
        if (label.empty() || label.size() > 63) throw ValidationError("invalid DNS name");
        b.push_back(static_cast<std::uint8_t>(label.size()));
        b.insert(b.end(), label.begin(), label.end());
        if (dot == std::string_view::npos) break;
        name.remove_prefix(dot + 1);
    }
    b.push_back(0);
}

// Reads a possibly compressed name starting at `pos`; returns the offset after it in the record.
bool read_name(const std::uint8_t* data, std::size_t size, std::size_t pos, std::string* out, std::size_t& next) {
    bool jumped = false;
    int hops = 0;
    std::string name;
    while (true) {
        if (pos >= size) return false;
        const std::uint8_t len = data[pos];
        if ((len & 0xc0) == 0xc0) {
            if (pos + 1 >= size || ++hops > 32) return false;
            if (!jumped) next = pos + 2;
            jumped = true;
            pos = static_cast<std::size_t>(((len & 0x3f) << 8) | data[pos + 1]);
            continue;
        }
        if (len == 0) {
            if (!jumped) next = pos + 1;
            break;
        }
        if (pos + 1 + len > size) return false;
        if (!name.empty()) name += '.';
        name.append(reinterpret_cast<const char*>(data + pos + 1), len);
        pos += 1 + len;
    }
    if (out) *out = std::move(name);
    return true;
}

}  // namespace

std::vector<std::uint8_t> build_query(std::uint16_t id, std::string_view name, std::uint16_t qtype) {
    std::vector<std::uint8_t> b;
    put16(b, id);
    put16(b, 0x0100);  // RD
    put16(b, 1);
    put16(b, 0);
    put16(b, 0);
    put16(b, 0);
    put_name(b, name);
    put16(b, qtype);
    put16(b, 1);
    return b;
}

bool parse_question(const std::uint8_t* data, std::size_t size, Question& out) {
    if (size < 12 || get16(data + 4) != 1) return false;
    out.id = get16(data);
    std::size_t next = 0;
    if (!read_name(data, size, 12, &out.name, next) || next + 4 > size) return false;
    out.qtype = get16(data + next);
    return true;
}

std::vector<std::uint8_t> build_response(const Question& q, int rcode, const std::vector<IpAddress>& answers) {
    std::vector<std::uint8_t> b;
    std::vector<IpAddress> matching;
    for (const auto& a : answers)
        if (a.is_v4() == (q.qtype == kTypeA)) matching.push_back(a);
    put16(b, q.id);
    put16(b, static_cast<std::uint16_t>(0x8180 | (rcode & 0xf)));
    put16(b, 1);
    put16(b, static_cast<std::uint16_t>(matching.size()));
    put16(b, 0);
    put16(b, 0);
    put_name(b, q.name);
    put16(b, q.qtype);
    put16(b, 1);
    for (const auto& a : matching) {
        put16(b, 0xc00c);
        put16(b, q.qtype);
        put16(b, 1);
        put16(b, 0);
        put16(b, 60);
        const std::size_t n = a.is_v4() ? 4 : 16;
        put16(b, static_cast<std::uint16_t>(n));
        const auto& bytes = a.bytes();
        b.insert(b.end(), bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    }
    return b;
}

bool parse_response(const std::uint8_t* data, std::size_t size, Response& out) {
    if (size < 12 || !(data[2] & 0x80)) return false;
    out.id = get16(data);
    out.rcode = data[3] & 0xf;
    out.addresses.clear();
    const std::uint16_t qd = get16(data + 4), an = get16(data + 6);
    std::size_t pos = 12;
    for (std::uint16_t i = 0; i < qd; ++i) {
        std::size_t next = 0;
        if (!read_name(data, size, pos, nullptr, next) || next + 4 > size) return false;
        pos = next + 4;
    }
    for (std::uint16_t i = 0; i < an; ++i) {
        std::size_t next = 0;
        if (!read_name(data, size, pos, nullptr, next) || next + 10 > size) return false;
        const std::uint16_t type = get16(data + next);
        const std::uint16_t rdlen = get16(data + next + 8);
        pos = next + 10;
        if (pos + rdlen > size) return false;
        if (type == kTypeA && rdlen == 4) {
            out.addresses.push_back(IpAddress::v4(static_cast<std::uint32_t>(data[pos]) << 24 |
                                                  static_cast<std::uint32_t>(data[pos + 1]) << 16 |
                                                  static_cast<std::uint32_t>(data[pos + 2]) << 8 | data[pos + 3]));
        } else if (type == kTypeAAAA && rdlen == 16) {
            std::array<std::uint8_t, 16> b{};
            std::memcpy(b.data(), data + pos, 16);
            out.addresses.push_back(IpAddress::v6(b));
        }
        pos += rdlen;
    }
    return true;
}

}  // namespace dns

Vantage Vantage::parse(std::string_view spec) {
    const auto eq = spec.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw ParseError("", 0, "vantage", "expected ID=ADDRESS[:PORT], got '" + std::string(spec) + "'");
    Vantage v;
    v.id = std::string(spec.substr(0, eq));
    std::string_view host = spec.substr(eq + 1);
    std::string_view port;
    if (!host.empty() && host.front() == '[') {
        const auto close = host.find(']');
        if (close == std::string_view::npos) throw ParseError("", 0, "vantage", "unterminated '['");
        if (close + 1 < host.size()) {
            if (host[close + 1] != ':') throw ParseError("", 0, "vantage", "expected ':' after ']'");
            port = host.substr(close + 2);
        }
        host = host.substr(1, close - 1);
    } else if (host.find(':') == host.rfind(':') && host.find(':') != std::string_view::npos) {
        port = host.substr(host.find(':') + 1);
        host = host.substr(0, host.find(':'));
    }
    auto ip = IpAddress::parse(host);
    if (!ip) throw ParseError("", 0, "vantage", "invalid address '" + std::string(host) + "'");
    v.server = *ip;
    if (!port.empty()) {
        unsigned p = 0;
        auto r = std::from_chars(port.data(), port.data() + port.size(), p);
        if (r.ec != std::errc{} || r.ptr != port.data() + port.size() || p == 0 || p > 65535)
            throw ParseError("", 0, "vantage", "invalid port '" + std::string(port) + "'");
        v.port = static_cast<std::uint16_t>(p);
    }
    return v;
}

namespace {

enum class Outcome { answers, nxdomain, nodata, servfail, timeout };

class UdpClient {
public:
    explicit UdpClient(const Vantage& v) {
        sockaddr_storage ss{};
        socklen_t len = 0;
        if (v.server.is_v4()) {
            auto* sin = reinterpret_cast<sockaddr_in*>(&ss);
            sin->sin_family = AF_INET;
            sin->sin_port = htons(v.port);
            sin->sin_addr.s_addr = htonl(v.server.v4_value());
            len = sizeof(sockaddr_in);
        } else {
            auto* sin6 = reinterpret_cast<sockaddr_in6*>(&ss);
            sin6->sin6_family = AF_INET6;
            sin6->sin6_port = htons(v.port);
            std::memcpy(&sin6->sin6_addr, v.server.bytes().data(), 16);
            len = sizeof(sockaddr_in6);
        }
        fd_ = ::socket(ss.ss_family, SOCK_DGRAM, 0);
        if (fd_ >= 0 && ::connect(fd_, reinterpret_cast<sockaddr*>(&ss), len) != 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }
    ~UdpClient() {
        if (fd_ >= 0) ::close(fd_);
    }
    UdpClient(const UdpClient&) = delete;
    UdpClient& operator=(const UdpClient&) = delete;

    Outcome query(std::uint16_t id, const std::string& name, std::uint16_t qtype, std::chrono::milliseconds timeout,
                  std::vector<IpAddress>& answers) {
        if (fd_ < 0) return Outcome::timeout;
        const auto packet = dns::build_query(id, name, qtype);
        if (::send(fd_, packet.data(), packet.size(), 0) < 0) return Outcome::timeout;
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        std::uint8_t buf[4096];
        while (true) {
            const auto left =
                std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) return Outcome::timeout;
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return Outcome::timeout;
            const auto n = ::recv(fd_, buf, sizeof buf, 0);
            if (n < 0) return Outcome::timeout;  // e.g. port unreachable
            dns::Response r;
            if (!dns::parse_response(buf, static_cast<std::size_t>(n), r) || r.id != id) continue;
            if (r.rcode == 3) return Outcome::nxdomain;
            if (r.rcode != 0) return Outcome::servfail;
            for (const auto& a : r.addresses) answers.push_back(a);
            return r.addresses.empty() ? Outcome::nodata : Outcome::answers;
        }
    }

private:
    int fd_ = -1;
};

ResolutionStatus combine(const std::vector<Outcome>& outcomes) {
    auto has = [&](Outcome o) { return std::find(outcomes.begin(), outcomes.end(), o) != outcomes.end(); };
    if (has(Outcome::answers)) return ResolutionStatus::ok;
    if (has(Outcome::nxdomain)) return ResolutionStatus::nxdomain;
    if (has(Outcome::servfail)) return ResolutionStatus::servfail;
    if (has(Outcome::timeout)) return ResolutionStatus::timeout;
    return ResolutionStatus::nxdomain;  // name exists but carries no address records
}

}  // namespace

std::vector<ResolutionResult> resolve_active(const std::vector<std::string>& fqdns,
                                             const std::vector<Vantage>& vantages, const ResolveOptions& opts) {
    if (vantages.empty()) throw ValidationError("resolve_active: no vantages");
    if (opts.pacing < kDefaultPacing && !opts.unsafe_fast)
        throw ValidationError("resolver pacing below " + std::to_string(kDefaultPacing.count()) +
                              " ms requires the unsafe flag");
    if (opts.pacing.count() < 0) throw ValidationError("negative pacing");

    std::vector<std::string> names;
    for (const auto& f : fqdns) names.push_back(normalize_fqdn(f));
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());

    std::vector<ResolutionResult> results(names.size() * vantages.size());
    std::vector<std::thread> workers;
    for (std::size_t v = 0; v < vantages.size(); ++v) {
        workers.emplace_back([&, v] {
            std::mt19937 rng(std::random_device{}());
            UdpClient client(vantages[v]);
            std::optional<std::chrono::steady_clock::time_point> last_send;
            auto paced = [&] {
                if (last_send) std::this_thread::sleep_until(*last_send + opts.pacing);
                last_send = std::chrono::steady_clock::now();
            };
            for (std::size_t i = 0; i < names.size(); ++i) {
                ResolutionResult& r = results[i * vantages.size() + v];
                r.fqdn = names[i];
                r.vantage_id = vantages[v].id;
                r.resolved_at = std::chrono::duration_cast<std::chrono::seconds>(
                                    std::chrono::system_clock::now().time_since_epoch())
                                    .count();
                std::vector<Outcome> outcomes;
                std::vector<std::uint16_t> types{dns::kTypeA};
                if (opts.query_aaaa) types.push_back(dns::kTypeAAAA);
                for (auto t : types) {
                    paced();
                    outcomes.push_back(client.query(static_cast<std::uint16_t>(rng()), names[i], t,
                                                    opts.query_timeout, r.answers));
                }
                r.status = combine(outcomes);
                if (r.status != ResolutionStatus::ok) r.answers.clear();
            }
        });
    }
    for (auto& w : workers) w.join();
    return results;
}

}  // namespace iotmap

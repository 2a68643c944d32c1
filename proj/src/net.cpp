#include "iotmap/net.hpp"

#include <arpa/inet.h>

#include <cstring>

#include "iotmap/error.hpp"

namespace iotmap {

IpAddress IpAddress::v4(std::uint32_t host_order) {
    IpAddress ip;
    ip.family_ = Family::v4;
    ip.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
    ip.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
    ip.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
    ip.bytes_[3] = static_cast<std::uint8_t>(host_order);
    return ip;
}

IpAddress IpAddress::v6(const std::array<std::uint8_t, 16>& bytes) {
    IpAddress ip;
    ip.family_ = Family::v6;
    ip.bytes_ = bytes;
    return ip;
}

std::optional<IpAddress> IpAddress::parse(std::string_view text) {
    if (text.empty() || text.size() > 64) return std::nullopt;
    char buf[65];
    std::memcpy(buf, text.data(), text.size());
    buf[text.size()] = '\0';
    IpAddress ip;
    if (text.find(':') == std::string_view::npos) {
        in_addr a4{};
        if (inet_pton(AF_INET, buf, &a4) != 1) return std::nullopt;
        ip.family_ = Family::v4;
        std::memcpy(ip.bytes_.data(), &a4, 4);
    } else {
        in6_addr a6{};
        if (inet_pton(AF_INET6, buf, &a6) != 1) return std::nullopt;
        ip.family_ = Family::v6;
        std::memcpy(ip.bytes_.data(), &a6, 16);
    }
    return ip;
}

IpAddress IpAddress::from_string(std::string_view text) {
    auto ip = parse(text);
    if (!ip) throw ParseError("", 0, "", "invalid IP address '" + std::string(text) + "'");
    return *ip;
}

std::uint32_t IpAddress::v4_value() const noexcept {
    return (std::uint32_t{bytes_[0]} << 24) | (std::uint32_t{bytes_[1]} << 16) |
           (std::uint32_t{bytes_[2]} << 8) | std::uint32_t{bytes_[3]};
}

IpAddress IpAddress::masked(unsigned length) const noexcept {
    IpAddress out = *this;
    const unsigned width = bit_width();
    if (length >= width) return out;
    const unsigned full = length / 8;
    const unsigned rem = length % 8;
    if (rem != 0) {
        out.bytes_[full] &= static_cast<std::uint8_t>(0xFFu << (8 - rem));
        for (unsigned i = full + 1; i < 16; ++i) out.bytes_[i] = 0;
    } else {
        for (unsigned i = full; i < 16; ++i) out.bytes_[i] = 0;
    }
    return out;
}

std::string IpAddress::to_string() const {
    char buf[INET6_ADDRSTRLEN];
    if (is_v4()) {
        inet_ntop(AF_INET, bytes_.data(), buf, sizeof buf);
    } else {
        inet_ntop(AF_INET6, bytes_.data(), buf, sizeof buf);
    }
    return buf;
}

std::size_t IpHash::operator()(const IpAddress& ip) const noexcept {
    // FNV-1a over family + bytes.
    std::uint64_t h = 1469598103934665603ull;
    h = (h ^ static_cast<std::uint8_t>(ip.family())) * 1099511628211ull;
    const unsigned n = ip.is_v4() ? 4 : 16;
    for (unsigned i = 0; i < n; ++i) h = (h ^ ip.bytes()[i]) * 1099511628211ull;
    return static_cast<std::size_t>(h);
}

Cidr::Cidr(IpAddress network, unsigned length) : length_(length) {
    if (length > network.bit_width())
        throw ValidationError("prefix length " + std::to_string(length) + " exceeds address width");
    network_ = network.masked(length);
}

std::optional<Cidr> Cidr::parse(std::string_view text) {
    const auto slash = text.find('/');
    auto ip = IpAddress::parse(text.substr(0, slash));
    if (!ip) return std::nullopt;
    unsigned len = ip->bit_width();
    if (slash != std::string_view::npos) {
        const auto digits = text.substr(slash + 1);
        if (digits.empty() || digits.size() > 3) return std::nullopt;
        len = 0;
        for (char c : digits) {
            if (c < '0' || c > '9') return std::nullopt;
            len = len * 10 + static_cast<unsigned>(c - '0');
        }
        if (len > ip->bit_width()) return std::nullopt;
    }
    return Cidr(*ip, len);
}

Cidr Cidr::from_string(std::string_view text) {
    auto c = parse(text);
    if (!c) throw ParseError("", 0, "", "invalid CIDR '" + std::string(text) + "'");
    return *c;
}

bool Cidr::contains(const IpAddress& ip) const noexcept {
    return ip.family() == network_.family() && ip.masked(length_) == network_;
}

bool Cidr::contains(const Cidr& other) const noexcept {
    return other.family() == family() && other.length_ >= length_ && contains(other.network_);
}

bool Cidr::overlaps(const Cidr& other) const noexcept {
    return contains(other) || other.contains(*this);
}

std::string Cidr::to_string() const { return network_.to_string() + "/" + std::to_string(length_); }

}  // namespace iotmap

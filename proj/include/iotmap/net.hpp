#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace iotmap {

enum class Family : std::uint8_t { v4 = 4, v6 = 6 };

inline std::string_view family_name(Family f) { return f == Family::v4 ? "ipv4" : "ipv6"; }

/// IPv4 or IPv6 address. IPv4 occupies the first four bytes; the rest stay zero.
class IpAddress {
public:
    IpAddress() = default;

    static IpAddress v4(std::uint32_t host_order);
    static IpAddress v6(const std::array<std::uint8_t, 16>& bytes);
    static std::optional<IpAddress> parse(std::string_view text);
    /// Throws ParseError on malformed text.
    static IpAddress from_string(std::string_view text);

    Family family() const noexcept { return family_; }
    bool is_v4() const noexcept { return family_ == Family::v4; }
    unsigned bit_width() const noexcept { return is_v4() ? 32u : 128u; }
    const std::array<std::uint8_t, 16>& bytes() const noexcept { return bytes_; }
    std::uint32_t v4_value() const noexcept;

    bool bit(unsigned index) const noexcept {
        return (bytes_[index / 8] >> (7 - index % 8)) & 1u;
    }

    /// Zero every bit past the first `length` bits.
    IpAddress masked(unsigned length) const noexcept;

    std::string to_string() const;

    auto operator<=>(const IpAddress&) const = default;
    bool operator==(const IpAddress&) const = default;

private:
    Family family_ = Family::v4;
    std::array<std::uint8_t, 16> bytes_{};
};

/// Network prefix; the address is always stored masked.
class Cidr {
public:
    Cidr() = default;
    Cidr(IpAddress network, unsigned length);

    /// Accepts "a.b.c.d/len", "v6::/len" or a bare address (host prefix).
    static std::optional<Cidr> parse(std::string_view text);
    static Cidr from_string(std::string_view text);

    const IpAddress& network() const noexcept { return network_; }
    unsigned length() const noexcept { return length_; }
    Family family() const noexcept { return network_.family(); }

    bool contains(const IpAddress& ip) const noexcept;
    bool contains(const Cidr& other) const noexcept;
    bool overlaps(const Cidr& other) const noexcept;

    std::string to_string() const;

    auto operator<=>(const Cidr&) const = default;
    bool operator==(const Cidr&) const = default;

private:
    IpAddress network_;
    unsigned length_ = 0;
};

struct IpHash {
    std::size_t operator()(const IpAddress& ip) const noexcept;
};

}  // namespace iotmap

template <>
struct std::hash<iotmap::IpAddress> {
    std::size_t operator()(const iotmap::IpAddress& ip) const noexcept { return iotmap::IpHash{}(ip); }
};

#include "doctest.h"
#include "iotmap/error.hpp"
#include "iotmap/net.hpp"
#include "iotmap/time.hpp"

using namespace iotmap;

TEST_CASE("ip parse and format round trip") {
    for (const char* text : {"10.1.2.3", "0.0.0.0", "255.255.255.255", "2001:db8::1", "::1"}) {
        auto ip = IpAddress::from_string(text);
        CHECK(ip.to_string() == text);
    }
    CHECK_FALSE(IpAddress::parse("10.1.2").has_value());
    CHECK_FALSE(IpAddress::parse("").has_value());
    CHECK_THROWS_AS(IpAddress::from_string("nope"), ParseError);
    CHECK(IpAddress::from_string("10.0.0.1").family() == Family::v4);
    CHECK(IpAddress::from_string("2001:db8::1").family() == Family::v6);
}

TEST_CASE("cidr containment and masking") {
    auto net = Cidr::from_string("192.0.2.77/24");
    CHECK(net.to_string() == "192.0.2.0/24");
    CHECK(net.contains(IpAddress::from_string("192.0.2.7")));
    CHECK_FALSE(net.contains(IpAddress::from_string("192.0.3.7")));
    CHECK_FALSE(net.contains(IpAddress::from_string("2001:db8::1")));
    CHECK(Cidr::from_string("10.0.0.0/8").contains(Cidr::from_string("10.1.0.0/16")));
    CHECK(Cidr::from_string("10.1.0.0/16").overlaps(Cidr::from_string("10.0.0.0/8")));
    CHECK_FALSE(Cidr::from_string("10.1.0.0/16").overlaps(Cidr::from_string("10.2.0.0/16")));
    CHECK(Cidr::from_string("2001:db8:1::/48").contains(IpAddress::from_string("2001:db8:1:ff::9")));
    CHECK(Cidr::from_string("1.2.3.4").length() == 32);
    CHECK_FALSE(Cidr::parse("1.2.3.4/33").has_value());
    CHECK(Cidr::from_string("0.0.0.0/0").contains(IpAddress::from_string("8.8.8.8")));
}

TEST_CASE("timestamps and windows") {
    CHECK(parse_timestamp("2022-02-28") == 1646006400);
    CHECK(parse_timestamp("2022-02-28T01:00:00Z") == 1646006400 + 3600);
    CHECK(parse_timestamp("1646006400") == 1646006400);
    CHECK(format_timestamp(1646006400) == "2022-02-28T00:00:00Z");
    CHECK(format_date(1646006400 + 86399) == "2022-02-28");
    CHECK_THROWS_AS(parse_timestamp("2022-13-01"), ParseError);

    auto w = StudyWindow::parse("2022-02-28/2022-03-07");
    CHECK(w.end - w.start == 7 * kDay);
    CHECK(w.contains(w.start));
    CHECK_FALSE(w.contains(w.end));
    CHECK(w.overlaps(w.start - 100, w.start));
    CHECK_FALSE(w.overlaps(w.start - 100, w.start - 1));
    CHECK_FALSE(w.overlaps(w.end, w.end + 10));
    CHECK_THROWS_AS(StudyWindow(10, 10), ValidationError);

    CHECK(UtcOffset::parse("+01:00").seconds == 3600);
    CHECK(UtcOffset::parse("-05:30").seconds == -(5 * 3600 + 1800));
    CHECK(UtcOffset::parse("-05:30").to_string() == "-05:30");
    CHECK(floor_div(-1, 3600) == -1);
}

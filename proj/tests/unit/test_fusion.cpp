#include <algorithm>
#include <fstream>
#include <random>

#include "doctest.h"
#include "iotmap/error.hpp"
#include "iotmap/fusion.hpp"
#include "test_support.hpp"

using namespace iotmap;
using iotmap::testing::TempDir;

namespace {

const PatternSet& patterns() {
    static const PatternSet set(load_catalog(iotmap::testing::catalog_path()));
    return set;
}

IpAddress ip(const char* s) { return IpAddress::from_string(s); }

Observation obs(const char* provider, const char* fqdn, const char* addr, Source src, Timestamp t) {
    return {provider, fqdn, ip(addr), src, t, false};
}

// Names whose pattern status is known by construction.
struct LabelledName {
    std::string name;
    bool iot;
};

std::vector<LabelledName> name_pool() {
    std::vector<LabelledName> pool;
    for (const auto& c : iotmap::testing::load_pattern_cases())
        if (c.positive) pool.push_back({c.fqdn, true});
    for (int i = 0; i < 200; ++i) pool.push_back({"site" + std::to_string(i) + ".shop.example.org", false});
    return pool;
}

}  // namespace

TEST_CASE("fuse: examples") {
    SUBCASE("union of sources") {
        const std::vector<Observation> in{
            obs("amazon", "a.iot.eu-west-1.amazonaws.com", "1.2.3.4", Source::tls_cert, 100),
            obs("amazon", "a.iot.eu-west-1.amazonaws.com", "1.2.3.4", Source::passive_dns, 50),
            obs("amazon", "b.iot.eu-west-1.amazonaws.com", "5.6.7.8", Source::passive_dns, 70),
        };
        const auto set = fuse(in);
        REQUIRE(set.size() == 2);
        CHECK(set[0].ip == ip("1.2.3.4"));
        CHECK(set[0].sources == (source_bit(Source::tls_cert) | source_bit(Source::passive_dns)));
        CHECK(set[0].first_seen == 50);
        CHECK(set[0].last_seen == 100);
        CHECK(set[1].sources == source_bit(Source::passive_dns));
        CHECK(format_sources(set[0].sources) == "passive-dns,tls-cert");
    }
    SUBCASE("empty input") { CHECK(fuse({}).empty()); }
    SUBCASE("same ip under two providers") {
        const std::vector<Observation> in{obs("a", "x", "1.2.3.4", Source::tls_cert, 1),
                                          obs("b", "y", "1.2.3.4", Source::tls_cert, 1)};
        const auto set = fuse(in);
        CHECK(set.size() == 2);
        CHECK(provider_slice(set, "b").size() == 1);
        CHECK(provider_slice(set, "c").empty());
    }
}

TEST_CASE("fuse: idempotent and order independent") {
    std::mt19937_64 rng(3);
    std::vector<Observation> in;
    const std::vector<std::string> providers{"amazon", "google", "sap"};
    for (int i = 0; i < 2000; ++i) {
        Observation o;
        o.provider_id = providers[rng() % 3];
        o.fqdn = "n" + std::to_string(rng() % 50) + ".example";
        o.ip = IpAddress::v4(0x0a000000u + static_cast<std::uint32_t>(rng() % 300));
        o.source = std::array{Source::tls_cert, Source::passive_dns, Source::active_dns}[rng() % 3];
        o.seen_at = static_cast<Timestamp>(rng() % 10000);
        in.push_back(o);
    }
    const auto base = fuse(in);
    auto doubled = in;
    doubled.insert(doubled.end(), in.begin(), in.end());
    CHECK(fuse(doubled) == base);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(in.begin(), in.end(), rng);
        CHECK(fuse(in) == base);
    }
    for (const auto& c : base) {
        CHECK(c.sources != 0);
        CHECK(c.first_seen <= c.last_seen);
    }
}

TEST_CASE("source_contribution") {
    SUBCASE("counting example") {
        const std::vector<Observation> in{
            obs("p", "a", "10.0.0.1", Source::tls_cert, 1), obs("p", "a", "10.0.0.2", Source::tls_cert, 1),
            obs("p", "a", "10.0.0.3", Source::passive_dns, 1), obs("p", "a", "10.0.0.4", Source::passive_dns, 1),
            obs("p", "a", "10.0.0.4", Source::tls_cert, 1)};
        const auto shares = source_contribution(fuse(in));
        REQUIRE(shares.size() == 1);
        CHECK(shares[0].fraction(SourceClass::tls_only) == doctest::Approx(0.5));
        CHECK(shares[0].fraction(SourceClass::pdns_only) == doctest::Approx(0.25));
        CHECK(shares[0].fraction(SourceClass::multiple) == doctest::Approx(0.25));
        CHECK(shares[0].count(SourceClass::adns_only) == 0);
    }
    SUBCASE("families reported separately, fractions sum to one") {
        std::mt19937_64 rng(5);
        std::vector<Observation> in;
        for (int i = 0; i < 3000; ++i) {
            Observation o;
            o.provider_id = rng() % 2 ? "x" : "y";
            o.fqdn = "f";
            o.ip = rng() % 2 ? IpAddress::v4(static_cast<std::uint32_t>(rng() % 500))
                             : IpAddress::from_string("2001:db8::" + std::to_string(rng() % 500));
            o.source = std::array{Source::tls_cert, Source::passive_dns, Source::active_dns}[rng() % 3];
            in.push_back(o);
        }
        const auto shares = source_contribution(fuse(in));
        CHECK(shares.size() == 4);
        for (const auto& s : shares) {
            double sum = 0;
            for (auto c : kSourceClasses) sum += s.fraction(c);
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
    SUBCASE("single source") {
        const std::vector<Observation> in{obs("p", "a", "10.0.0.1", Source::active_dns, 1)};
        CHECK(source_contribution(fuse(in))[0].fraction(SourceClass::adns_only) == 1.0);
    }
}

TEST_CASE("classify_sharing: examples") {
    ReverseIndex index;
    index.add(ip("10.0.0.1"), "a.iot.eu-west-1.amazonaws.com");
    for (const char* n : {"a.iot.eu-west-1.amazonaws.com", "shop.example.org", "cdn.foo.net", "blog.bar.io"})
        index.add(ip("10.0.0.2"), n);
    for (const char* n : {"a.iot.eu-west-1.amazonaws.com", "shop.example.org", "cdn.foo.net"})
        index.add(ip("10.0.0.3"), n);
    index.finalize();

    auto v1 = classify_sharing(ip("10.0.0.1"), "amazon", index, patterns(), 2);
    CHECK(v1.non_matching_domain_count == 0);
    CHECK(v1.verdict == Sharing::dedicated);
    auto v2 = classify_sharing(ip("10.0.0.2"), "amazon", index, patterns(), 2);
    CHECK(v2.non_matching_domain_count == 3);
    CHECK(v2.matching_domain_count == 1);
    CHECK(v2.verdict == Sharing::shared);
    auto v3 = classify_sharing(ip("10.0.0.3"), "amazon", index, patterns(), 2);
    CHECK(v3.non_matching_domain_count == 2);
    CHECK(v3.verdict == Sharing::dedicated);
    CHECK_THROWS_WITH_AS(classify_sharing(ip("10.9.9.9"), "amazon", index, patterns(), 2),
                         doctest::Contains("no reverse data"), ValidationError);
}

TEST_CASE("classify_candidates: kernels agree with a labelled brute-force count") {
    const auto pool = name_pool();
    std::mt19937_64 rng(17);
    ReverseIndex index;
    CandidateSet candidates;
    std::map<IpAddress, std::size_t> expected_non_matching;
    for (std::uint32_t i = 0; i < 1500; ++i) {
        CandidateAddress c;
        c.provider_id = "amazon";
        c.ip = IpAddress::v4(0xc6336400u + i);
        c.sources = source_bit(Source::tls_cert);
        candidates.push_back(c);
        if (i % 10 == 0) continue;  // no reverse data
        std::set<std::size_t> picks;
        const std::size_t n = rng() % 6;
        while (picks.size() < n) picks.insert(rng() % pool.size());
        std::size_t non = 0;
        for (auto p : picks) {
            index.add(c.ip, pool[p].name);
            non += !pool[p].iot;
        }
        if (picks.empty()) index.add(c.ip, pool[0].name), non += !pool[0].iot;
        expected_non_matching[c.ip] = non;
    }
    index.finalize();
    for (std::size_t threshold : {0, 1, 2, 3, 5}) {
        const auto fast = classify_candidates(candidates, index, patterns(), threshold);
        const auto slow = classify_candidates_serial(candidates, index, patterns(), threshold);
        CHECK(fast.verdicts == slow.verdicts);
        CHECK(fast.no_reverse_data == slow.no_reverse_data);
        CHECK(fast.no_reverse_data.size() == 150);
        for (const auto& v : fast.verdicts) {
            const auto expect = expected_non_matching.at(v.ip);
            REQUIRE(v.non_matching_domain_count == expect);
            CHECK((v.verdict == Sharing::shared) == (expect > threshold));
        }
    }
    // raising the threshold never turns dedicated into shared
    const auto lo = classify_candidates(candidates, index, patterns(), 1);
    const auto hi = classify_candidates(candidates, index, patterns(), 2);
    for (std::size_t i = 0; i < lo.verdicts.size(); ++i)
        if (lo.verdicts[i].verdict == Sharing::dedicated) CHECK(hi.verdicts[i].verdict == Sharing::dedicated);
}

TEST_CASE("reverse index inverts passive DNS rows") {
    const std::vector<PassiveDnsRecord> rows{
        {"a.example", "A", "10.0.0.1", 10, 20},
        {"b.example", "A", "10.0.0.1", 10, 20},
        {"a.example", "A", "10.0.0.1", 30, 40},
        {"c.example", "CNAME", "a.example", 10, 20},
        {"d.example", "AAAA", "2001:db8::1", 500, 600},
    };
    const auto all = build_reverse_index(rows);
    CHECK(all.size() == 2);
    CHECK(*all.find(ip("10.0.0.1")) == std::vector<std::string>{"a.example", "b.example"});
    const auto windowed = build_reverse_index(rows, StudyWindow(0, 100));
    CHECK(windowed.size() == 1);
}

TEST_CASE("validate_against_ground_truth") {
    GroundTruthSet truth{"microsoft", {Cidr::from_string("192.0.2.0/24")}};
    std::vector<Observation> in;
    for (int i = 1; i <= 5; ++i)
        in.push_back(obs("microsoft", "x", ("192.0.2." + std::to_string(i)).c_str(), Source::tls_cert, 1));
    in.push_back(obs("microsoft", "x", "203.0.113.9", Source::tls_cert, 1));
    in.push_back(obs("amazon", "x", "192.0.2.200", Source::tls_cert, 1));
    const auto set = fuse(in);
    std::vector<IpAddress> active{ip("192.0.2.1"), ip("192.0.2.7"), ip("192.0.2.8"), ip("198.51.100.1")};
    const auto report = validate_against_ground_truth(set, truth, &active);
    CHECK(report.identified_in_truth.size() == 5);
    CHECK(report.identified_outside_truth == std::vector<IpAddress>{ip("203.0.113.9")});
    CHECK(report.truth_active.size() == 3);
    CHECK(report.missed_active == std::vector<IpAddress>{ip("192.0.2.7"), ip("192.0.2.8")});

    TempDir dir;
    std::ofstream(dir / "truth.tsv") << "microsoft\t192.0.2.0/24\nmicrosoft\t192.0.2.128/25\n";
    CHECK_THROWS_WITH_AS(load_ground_truth(dir / "truth.tsv"), doctest::Contains("overlaps"), ValidationError);
    std::ofstream(dir / "ok.tsv") << "# provider\tprefix\nmicrosoft\t192.0.2.9/24\nmicrosoft\t2001:db8::/32\n";
    const auto loaded = load_ground_truth(dir / "ok.tsv");
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].prefixes[0].to_string() == "192.0.2.0/24");
}

TEST_CASE("snapshot and sharing files round trip") {
    TempDir dir;
    const std::vector<Observation> in{
        obs("amazon", "a.iot.eu-west-1.amazonaws.com", "1.2.3.4", Source::tls_cert, 1646006400),
        obs("amazon", "b.iot.eu-west-1.amazonaws.com", "1.2.3.4", Source::active_dns, 1646016400),
        obs("google", "mqtt.googleapis.com", "2001:db8::7", Source::passive_dns, 1646026400)};
    const auto set = fuse(in);
    const auto path = dir / snapshot_filename(1646006400 + 500);
    CHECK(path.filename() == "candidates-2022-02-28.tsv");
    CHECK(snapshot_date(path) == std::optional<Timestamp>(1646006400));
    write_candidates(path, set);
    CHECK(read_candidates(path) == set);

    ReverseIndex index;
    index.add(ip("1.2.3.4"), "a.iot.eu-west-1.amazonaws.com");
    index.finalize();
    const auto report = classify_candidates(set, index, patterns(), 2);
    write_sharing(dir / "sharing.tsv", report, set);
    const auto back = read_sharing(dir / "sharing.tsv");
    REQUIRE(back.size() == 1);
    CHECK(back[0] == report.verdicts[0]);
}

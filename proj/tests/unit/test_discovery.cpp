#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "httplib.h"
#include "iotmap/discovery.hpp"
#include "iotmap/error.hpp"
#include "iotmap/pdns_client.hpp"
#include "iotmap/resolver.hpp"
#include "iotmap/tls_collect.hpp"
#include "net_fixtures.hpp"
#include "test_support.hpp"

using namespace iotmap;
using iotmap::testing::TempDir;

namespace {

const PatternSet& patterns() {
    static const PatternSet set(load_catalog(iotmap::testing::catalog_path()));
    return set;
}

const StudyWindow kWeek = StudyWindow::parse("2022-02-28/2022-03-07");

CertScanRecord cert(std::vector<std::string> names, Timestamp nb, Timestamp na, Timestamp seen,
                    const char* ip = "192.0.2.10") {
    return {IpAddress::from_string(ip), 8883, std::move(names), nb, na, seen};
}

PassiveDnsRecord pdns(std::string name, std::string type, std::string rdata, Timestamp first, Timestamp last) {
    return {std::move(name), std::move(type), std::move(rdata), first, last};
}

}  // namespace

TEST_CASE("ingest_cert_scan: examples") {
    const Timestamp mid = kWeek.start + 2 * kDay;
    SUBCASE("valid across the window") {
        const std::vector recs{cert({"x.iot.us-east-1.amazonaws.com"}, kWeek.start - 30 * kDay,
                                    kWeek.end + 30 * kDay, mid)};
        IngestStats stats;
        const auto obs = ingest_cert_scan(recs, patterns(), kWeek, &stats);
        REQUIRE(obs.size() == 1);
        CHECK(obs[0].provider_id == "amazon");
        CHECK(obs[0].source == Source::tls_cert);
        CHECK(obs[0].ip == IpAddress::from_string("192.0.2.10"));
        CHECK(stats.emitted == 1);
    }
    SUBCASE("expired before the window") {
        const std::vector recs{cert({"x.iot.us-east-1.amazonaws.com"}, kWeek.start - 60 * kDay,
                                    kWeek.start - 1, mid)};
        IngestStats stats;
        CHECK(ingest_cert_scan(recs, patterns(), kWeek, &stats).empty());
        CHECK(stats.outside_window == 1);
    }
    SUBCASE("three names, one matching") {
        const std::vector recs{cert({"www.example.com", "x.iot.us-east-1.amazonaws.com", "mail.example.org"},
                                    kWeek.start, kWeek.end, mid)};
        IngestStats stats;
        CHECK(ingest_cert_scan(recs, patterns(), kWeek, &stats).size() == 1);
        CHECK(stats.unmatched_names == 2);
    }
    SUBCASE("observed outside the window") {
        const std::vector recs{cert({"x.iot.us-east-1.amazonaws.com"}, kWeek.start, kWeek.end, kWeek.end)};
        CHECK(ingest_cert_scan(recs, patterns(), kWeek).empty());
    }
    SUBCASE("wildcard names are flagged") {
        const std::vector recs{cert({"*.iot.eu-west-1.amazonaws.com"}, kWeek.start, kWeek.end, mid)};
        const auto obs = ingest_cert_scan(recs, patterns(), kWeek);
        REQUIRE(obs.size() == 1);
        CHECK(obs[0].wildcard_name);
        CHECK(distinct_fqdns(obs).empty());
    }
}

TEST_CASE("ingest_passive_dns: examples") {
    const Timestamp t = kWeek.start + kDay;
    SUBCASE("alibaba A record inside the window") {
        const std::vector recs{pdns("dev1.iot-as-mqtt.cn-shanghai.aliyuncs.com", "A", "198.51.100.7", t, t + 60)};
        const auto obs = ingest_passive_dns(recs, patterns(), kWeek);
        REQUIRE(obs.size() == 1);
        CHECK(obs[0].provider_id == "alibaba");
        CHECK(obs[0].source == Source::passive_dns);
    }
    SUBCASE("bare iot label needs a profile that lists it") {
        const std::vector recs{pdns("dev1.iot.cn-shanghai.aliyuncs.com", "A", "198.51.100.7", t, t + 60)};
        CHECK(ingest_passive_dns(recs, patterns(), kWeek).empty());
        auto profile = *find_profile(load_catalog(iotmap::testing::catalog_path()), "alibaba");
        profile.subdomain.labels.push_back("iot");
        const PatternSet widened({profile});
        CHECK(ingest_passive_dns(recs, widened, kWeek).size() == 1);
    }
    SUBCASE("last_seen before the window") {
        const std::vector recs{
            pdns("dev1.iot-as-mqtt.cn-shanghai.aliyuncs.com", "A", "198.51.100.7", t - 9 * kDay, kWeek.start - 1)};
        CHECK(ingest_passive_dns(recs, patterns(), kWeek).empty());
    }
    SUBCASE("AAAA keeps the IPv6 address") {
        const std::vector recs{pdns("abc.iot.eu-west-1.amazonaws.com", "AAAA", "2001:db8::5", t, t)};
        const auto obs = ingest_passive_dns(recs, patterns(), kWeek);
        REQUIRE(obs.size() == 1);
        CHECK(obs[0].ip.family() == Family::v6);
    }
    SUBCASE("other record types are counted") {
        const std::vector recs{pdns("abc.iot.eu-west-1.amazonaws.com", "CNAME", "x.example.com", t, t)};
        IngestStats stats;
        CHECK(ingest_passive_dns(recs, patterns(), kWeek, &stats).empty());
        CHECK(stats.skipped_rrtype == 1);
    }
}

TEST_CASE("export readers count malformed records or abort in strict mode") {
    TempDir dir;
    std::ofstream(dir / "certs.jsonl")
        << R"({"ip":"192.0.2.1","port":8883,"names":["A.IOT.US-EAST-1.AMAZONAWS.COM"],"validity":{"start":1646006400,"end":1677542400},"observed_at":"2022-03-01T10:00:00Z"})"
        << "\n"
        << R"({"ip":"192.0.2.999","port":443,"names":[],"validity":{"start":0,"end":1},"observed_at":0})" << "\n"
        << R"({"ip":"192.0.2.2","names":["b"],"validity":{"start":10,"end":5},"observed_at":7})" << "\n"
        << "not json\n";
    IngestStats stats;
    const auto recs = read_cert_scan(dir / "certs.jsonl", stats);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].names[0] == "a.iot.us-east-1.amazonaws.com");
    CHECK(stats.records == 4);
    CHECK(stats.malformed == 3);
    try {
        IngestStats s2;
        read_cert_scan(dir / "certs.jsonl", s2, {.strict = true});
        FAIL("strict mode must abort");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.field() == "ip");
    }

    std::ofstream(dir / "pdns.jsonl")
        << R"({"rrname":"a.iot.eu-west-1.amazonaws.com.","rrtype":"A","rdata":["192.0.2.1","192.0.2.2"],"time_first":1646100000,"time_last":1646200000})"
        << "\n"
        << R"({"rrname":"b.iot.eu-west-1.amazonaws.com.","rrtype":"AAAA","rdata":"192.0.2.3","time_first":1646100000,"time_last":1646200000})"
        << "\n";
    IngestStats ps;
    const auto rows = read_passive_dns(dir / "pdns.jsonl", ps);
    CHECK(rows.size() == 2);
    CHECK(rows[0].rrname == "a.iot.eu-west-1.amazonaws.com");
    CHECK(ps.malformed == 1);

    // writers and readers agree
    std::ofstream out(dir / "again.jsonl");
    for (const auto& r : rows) out << passive_dns_line(r) << "\n";
    out.close();
    IngestStats again_stats;
    const auto again = read_passive_dns(dir / "again.jsonl", again_stats);
    REQUIRE(again.size() == rows.size());
    CHECK(again[1].rdata == rows[1].rdata);
}

TEST_CASE("observations round trip through the TSV format") {
    TempDir dir;
    std::vector<Observation> obs{
        {"amazon", "a.iot.eu-west-1.amazonaws.com", IpAddress::from_string("2001:db8::1"), Source::passive_dns,
         kWeek.start, false},
        {"amazon", "*.iot.eu-west-1.amazonaws.com", IpAddress::from_string("192.0.2.1"), Source::tls_cert,
         kWeek.start + 5, true},
        {"amazon", "a.iot.eu-west-1.amazonaws.com", IpAddress::from_string("2001:db8::1"), Source::passive_dns,
         kWeek.start, false},
    };
    canonicalize(obs);
    CHECK(obs.size() == 2);
    write_observations(dir / "obs.tsv", obs);
    CHECK(read_observations(dir / "obs.tsv") == obs);
    write_observations(dir / "obs2.tsv", read_observations(dir / "obs.tsv"));
    CHECK(read_file(dir / "obs.tsv") == read_file(dir / "obs2.tsv"));
}

TEST_CASE("properties: window soundness, pattern soundness, monotonicity, order independence") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> names{"a.iot.eu-west-1.amazonaws.com", "mqtt.googleapis.com",
                                         "www.example.com", "dev.iot-as-mqtt.cn-beijing.aliyuncs.com",
                                         "x.azure-devices.net", "hub.iot.us-east-1.amazonaws.com"};
    auto near_edge = [&](Timestamp edge) { return edge + static_cast<Timestamp>(rng() % 7) - 3; };
    std::vector<CertScanRecord> certs;
    std::vector<PassiveDnsRecord> rows;
    for (int i = 0; i < 3000; ++i) {
        const Timestamp a = near_edge(rng() % 2 ? kWeek.start : kWeek.end);
        const Timestamp b = a + static_cast<Timestamp>(rng() % 10);
        const std::string& n = names[rng() % names.size()];
        certs.push_back(cert({n, names[rng() % names.size()]}, a, b, near_edge(rng() % 2 ? kWeek.start : kWeek.end)));
        rows.push_back(pdns(n, "A", "10.0.0." + std::to_string(rng() % 250), a, b));
    }
    const StudyWindow wide(kWeek.start - 2, kWeek.end + 2);
    auto c_obs = ingest_cert_scan(certs, patterns(), kWeek);
    auto p_obs = ingest_passive_dns(rows, patterns(), kWeek);
    CHECK_FALSE(c_obs.empty());
    CHECK_FALSE(p_obs.empty());

    for (const auto& o : c_obs) {
        CHECK(kWeek.contains(o.seen_at));
        CHECK(match_fqdn(*patterns().find(o.provider_id), o.fqdn).matched);
    }
    for (const auto& o : p_obs) CHECK(match_fqdn(*patterns().find(o.provider_id), o.fqdn).matched);
    // every emitted row overlapped the window
    std::size_t overlapping = 0;
    for (const auto& r : rows)
        if (kWeek.overlaps(r.first_seen, r.last_seen) && patterns().any_match(r.rrname)) ++overlapping;
    CHECK(p_obs.size() == overlapping);

    auto wide_c = ingest_cert_scan(certs, patterns(), wide);
    auto wide_p = ingest_passive_dns(rows, patterns(), wide);
    // seen_at of passive rows depends on the window start, so compare on the other fields
    auto keys = [](const std::vector<Observation>& v) {
        std::set<std::tuple<std::string, std::string, IpAddress, Source>> s;
        for (const auto& o : v) s.emplace(o.provider_id, o.fqdn, o.ip, o.source);
        return s;
    };
    const auto narrow_keys = keys(c_obs), wide_keys = keys(wide_c);
    CHECK(std::includes(wide_keys.begin(), wide_keys.end(), narrow_keys.begin(), narrow_keys.end()));
    const auto narrow_p = keys(p_obs), wide_pk = keys(wide_p);
    CHECK(std::includes(wide_pk.begin(), wide_pk.end(), narrow_p.begin(), narrow_p.end()));

    // partitioned ingest gives the same set
    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::span<const PassiveDnsRecord> all(shuffled);
    auto part = ingest_passive_dns(all.subspan(0, 1000), patterns(), kWeek);
    auto rest = ingest_passive_dns(all.subspan(1000), patterns(), kWeek);
    part.insert(part.end(), rest.begin(), rest.end());
    canonicalize(part);
    canonicalize(p_obs);
    CHECK(part == p_obs);
}

TEST_CASE("resolve_active against local fixture resolvers") {
    using iotmap::testing::DnsFixture;
    const auto ip = [](const char* s) { return IpAddress::from_string(s); };
    DnsFixture eu({{"a.iot.eu-west-1.amazonaws.com", {ip("192.0.2.1"), ip("2001:db8::1")}},
                   {"b.iot.eu-west-1.amazonaws.com", {ip("192.0.2.2")}}});
    DnsFixture us({{"a.iot.eu-west-1.amazonaws.com", {ip("198.51.100.1")}},
                   {"b.iot.eu-west-1.amazonaws.com", {ip("192.0.2.2")}}});
    DnsFixture asia({{"a.iot.eu-west-1.amazonaws.com", {ip("192.0.2.1")}}});

    ResolveOptions opts;
    opts.pacing = std::chrono::milliseconds(40);
    opts.unsafe_fast = true;
    opts.query_timeout = std::chrono::milliseconds(300);

    const std::vector<std::string> fqdns{"b.iot.eu-west-1.amazonaws.com", "A.iot.eu-west-1.amazonaws.com."};
    const auto results = resolve_active(fqdns, {eu.vantage("eu"), us.vantage("us"), asia.vantage("asia")}, opts);
    REQUIRE(results.size() == 6);
    CHECK(results[0].fqdn == "a.iot.eu-west-1.amazonaws.com");
    CHECK(results[0].vantage_id == "eu");
    CHECK(results[2].vantage_id == "asia");
    CHECK(results[0].answers.size() == 2);
    CHECK(results[5].status == ResolutionStatus::nxdomain);
    CHECK(results[5].answers.empty());

    // union over vantages yields every per-vantage answer
    const StudyWindow now(results[0].resolved_at - 10, results[0].resolved_at + 3600);
    auto obs = ingest_resolutions(results, patterns(), now);
    std::set<std::string> a_ips;
    for (const auto& o : obs)
        if (o.fqdn == "a.iot.eu-west-1.amazonaws.com") a_ips.insert(o.ip.to_string());
    CHECK(a_ips == std::set<std::string>{"192.0.2.1", "2001:db8::1", "198.51.100.1"});
    for (const auto& o : obs) CHECK(o.source == Source::active_dns);

    // four queries per resolver (2 names x A/AAAA), spaced by at least the pacing
    for (const DnsFixture* f : {&eu, &us, &asia}) {
        const auto t = f->arrivals();
        REQUIRE(t.size() == 4);
        for (std::size_t i = 1; i < t.size(); ++i)
            CHECK(t[i] - t[i - 1] >= opts.pacing - std::chrono::milliseconds(2));
    }
}

TEST_CASE("resolve_active: unreachable resolver and pacing floor") {
    ResolveOptions opts;
    opts.pacing = std::chrono::milliseconds(5);
    opts.unsafe_fast = true;
    opts.query_timeout = std::chrono::milliseconds(200);
    const Vantage dead{"dead", IpAddress::from_string("127.0.0.1"), iotmap::testing::closed_port()};
    const auto results = resolve_active({"a.example.com", "b.example.com"}, {dead}, opts);
    REQUIRE(results.size() == 2);
    for (const auto& r : results) {
        CHECK(r.status == ResolutionStatus::timeout);
        CHECK(r.answers.empty());
    }

    opts.unsafe_fast = false;
    CHECK_THROWS_AS(resolve_active({"a.example.com"}, {dead}, opts), ValidationError);
    CHECK_THROWS_AS(resolve_active({"a.example.com"}, {}, ResolveOptions{}), ValidationError);

    const auto v = Vantage::parse("v6=[::1]:5353");
    CHECK(v.port == 5353);
    CHECK(v.server.family() == Family::v6);
    CHECK(Vantage::parse("x=9.9.9.9").port == 53);
    CHECK_THROWS_AS(Vantage::parse("9.9.9.9"), ParseError);
}

TEST_CASE("collect_tls against local endpoints") {
    using namespace iotmap::testing;
    TlsFixture plain({"a.iot.example.com", {"a.iot.example.com", "B.IOT.example.com"}}, false);
    TlsFixture mutual({"m.iot.example.com", {"m.iot.example.com"}}, true);
    const auto lo = IpAddress::from_string("127.0.0.1");
    const std::uint16_t closed = closed_port();

    TlsOptions opts;
    opts.timeout = std::chrono::milliseconds(3000);
    opts.max_in_flight = 2;
    const std::vector<TlsTarget> targets{
        {lo, plain.port(), "a.iot.example.com"},
        {lo, mutual.port(), ""},
        {lo, closed, ""},
        {lo, plain.port(), "dup.example.com"},  // same (ip, port): not probed again
    };
    const auto results = collect_tls(targets, opts);
    REQUIRE(results.size() == 3);

    REQUIRE(results[0].record);
    CHECK(results[0].failure == TlsFailure::none);
    CHECK(results[0].record->names == std::vector<std::string>{"a.iot.example.com", "b.iot.example.com"});
    CHECK(results[0].record->port == plain.port());
    CHECK(results[0].record->not_before < results[0].record->not_after);
    CHECK(plain.sni_seen() == std::vector<std::string>{"a.iot.example.com"});
    CHECK(plain.accepted() == 1);

    CHECK_FALSE(results[1].record);
    CHECK(results[1].failure == TlsFailure::handshake_failure);

    CHECK_FALSE(results[2].record);
    CHECK(results[2].failure == TlsFailure::refused);

    const auto t = TlsTarget::parse("[2001:db8::1]:8883,X.example.com");
    CHECK(t.port == 8883);
    CHECK(t.sni == "x.example.com");
    CHECK(TlsTarget::parse("192.0.2.1:443").sni.empty());
}

TEST_CASE("passive DNS HTTP client pages, authenticates and rate limits") {
    httplib::Server server;
    std::vector<std::chrono::steady_clock::time_point> hits;
    std::vector<std::string> offsets;
    std::mutex mu;
    const int total = 7;
    server.Get("/api/lookup", [&](const httplib::Request& req, httplib::Response& res) {
        if (req.get_header_value("Authorization") != "Bearer sekrit") {
            res.status = 401;
            return;
        }
        {
            std::lock_guard lock(mu);
            hits.push_back(std::chrono::steady_clock::now());
            offsets.push_back(req.get_param_value("offset"));
        }
        const int offset = std::stoi(req.get_param_value("offset"));
        const int limit = std::stoi(req.get_param_value("limit"));
        std::string body;
        for (int i = offset; i < std::min(total, offset + limit); ++i)
            body += R"({"rrname":"d)" + std::to_string(i) +
                    R"(.iot.eu-west-1.amazonaws.com.","rrtype":"A","rdata":"192.0.2.)" + std::to_string(i) +
                    R"(","time_first":1646100000,"time_last":1646200000})" + "\n";
        res.set_content(body, "application/x-ndjson");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    PdnsEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port) + "/api/";
    ep.token = "sekrit";
    ep.page_size = 3;
    ep.min_interval = std::chrono::milliseconds(30);
    IngestStats stats;
    const auto rows = fetch_passive_dns(ep, "*.amazonaws.com", kWeek, stats);
    CHECK(rows.size() == total);
    CHECK(offsets == std::vector<std::string>{"0", "3", "6"});
    for (std::size_t i = 1; i < hits.size(); ++i)
        CHECK(hits[i] - hits[i - 1] >= ep.min_interval - std::chrono::milliseconds(2));
    CHECK(ingest_passive_dns(rows, patterns(), kWeek).size() == total);

    ep.token = "wrong";
    CHECK_THROWS_AS(fetch_passive_dns(ep, "*.amazonaws.com", kWeek, stats), IoError);
    server.stop();
    th.join();
}

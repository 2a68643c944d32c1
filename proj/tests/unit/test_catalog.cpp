#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "iotmap/catalog.hpp"
#include "iotmap/error.hpp"
#include "test_support.hpp"

using namespace iotmap;
using iotmap::testing::TempDir;

namespace {

const std::vector<ProviderProfile>& catalog() {
    static const auto profiles = load_catalog(iotmap::testing::catalog_path());
    return profiles;
}

void write_lines(const std::filesystem::path& p, const std::string& content) {
    std::ofstream(p) << content;
}

ProviderProfile mindsphere_like() {
    ProviderProfile p;
    p.id = "mind";
    p.subdomain.rule = SubdomainRule::wildcard;
    p.region.tokens = {"eu1"};
    p.region.required = true;
    p.parent_domain = "mindsphere.io";
    return p;
}

// Enumerates names a profile's grammar admits, over a small subdomain alphabet.
std::vector<std::pair<std::string, std::optional<std::string>>> enumerate(const ProviderProfile& p) {
    std::vector<std::string> subs;
    switch (p.subdomain.rule) {
        case SubdomainRule::wildcard:
            subs = {"a", "x1", "dev-7", "a.b", "c0ffee.gw"};
            break;
        case SubdomainRule::literal_set:
            subs = p.subdomain.labels;
            break;
        case SubdomainRule::protocol_prefixed:
            for (const auto& l : p.subdomain.labels) {
                subs.push_back("k1." + l);
                subs.push_back("a.b." + l);
            }
            break;
    }
    if (p.subdomain.optional) subs.push_back("");
    std::string service;
    for (const auto& s : p.service_labels) service += s + ".";
    std::vector<std::optional<std::string>> regions;
    for (const auto& t : p.region.tokens) regions.emplace_back(t);
    if (!p.region.required || p.region.empty()) regions.emplace_back(std::nullopt);
    std::vector<std::pair<std::string, std::optional<std::string>>> out;
    for (const auto& s : subs)
        for (const auto& r : regions) {
            std::string name = (s.empty() ? "" : s + ".") + service + (r ? *r + "." : "") + p.parent_domain;
            out.emplace_back(name, r);
        }
    return out;
}

}  // namespace

TEST_CASE("load_catalog: shipped catalog has 16 unique providers") {
    const auto& profiles = catalog();
    CHECK(profiles.size() == 16);
    std::set<std::string> ids;
    for (const auto& p : profiles) ids.insert(p.id);
    CHECK(ids.size() == 16);
    const auto* amazon = find_profile(profiles, "amazon");
    REQUIRE(amazon);
    CHECK(amazon->region_map.at("eu-west-1").country == "IE");
    CHECK(amazon->region_map.at("eu-west-1").city == "Dublin");
    CHECK(amazon->anycast);
}

TEST_CASE("load_catalog: error paths") {
    TempDir dir;
    SUBCASE("empty file") {
        write_lines(dir / "c.jsonl", "# only a comment\n\n");
        CHECK_THROWS_WITH_AS(load_catalog(dir / "c.jsonl"), doctest::Contains("empty catalog"), ValidationError);
    }
    SUBCASE("duplicate provider id") {
        const std::string rec = R"({"id":"a","subdomain":{"rule":"wildcard"},"parent_domain":"a.com"})";
        write_lines(dir / "c.jsonl", rec + "\n" + rec + "\n");
        CHECK_THROWS_WITH_AS(load_catalog(dir / "c.jsonl"), doctest::Contains("duplicate provider_id"),
                             ValidationError);
    }
    SUBCASE("parse error carries line and field") {
        write_lines(dir / "c.jsonl", "# header\n"
                                     R"({"id":"a","subdomain":{"rule":"wildcard"},"parent_domain":"a.com"})"
                                     "\n"
                                     R"({"id":"b","subdomain":{"rule":"wildcard"},"parent_domain":7})"
                                     "\n");
        try {
            load_catalog(dir / "c.jsonl");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
            CHECK(e.field() == "parent_domain");
        }
    }
    SUBCASE("port out of range") {
        write_lines(dir / "c.jsonl",
                    R"({"id":"a","subdomain":{"rule":"wildcard"},"parent_domain":"a.com","protocols":[["MQTT",70000,"tcp"]]})"
                    "\n");
        CHECK_THROWS_AS(load_catalog(dir / "c.jsonl"), ParseError);
    }
    SUBCASE("invariant violations are named") {
        write_lines(dir / "c.jsonl",
                    R"({"id":"a","subdomain":{"rule":"wildcard"},"parent_domain":".A.com"})"
                    "\n"
                    R"({"id":"b","subdomain":{"rule":"wildcard"},"parent_domain":"b.com","region":{"tokens":["x","x"]}})"
                    "\n");
        const auto violations = validate_catalog(dir / "c.jsonl");
        REQUIRE(violations.size() == 2);
        CHECK(violations[0].find("parent_domain") != std::string::npos);
        CHECK(violations[1].find("distinct") != std::string::npos);
    }
    SUBCASE("missing file is an I/O error") {
        CHECK_THROWS_AS(load_catalog(dir / "absent.jsonl"), IoError);
    }
}

TEST_CASE("compile_pattern: Amazon equals the published expression on generated names") {
    const auto pattern = compile_pattern(*find_profile(catalog(), "amazon"));
    const std::regex published(R"((.+)(\.iot\.)([[:alnum:]]+(-[[:alnum:]]+)+)?(\.amazonaws\.com$))");
    std::mt19937_64 rng(7);
    const std::vector<std::string> pieces = {"a",   "iot", "eu-west-1", "us-east-1", "amazonaws", "com",
                                             "s3",  "x-y", "iot2",      "ap-1",      "amazon",    "net"};
    std::size_t agreed = 0;
    for (int i = 0; i < 4000; ++i) {
        const int n = 2 + static_cast<int>(rng() % 5);
        std::string name;
        for (int k = 0; k < n; ++k) name += (k ? "." : "") + pieces[rng() % pieces.size()];
        if (rng() % 3 == 0) name += ".iot.us-west-2.amazonaws.com";
        const bool ours = match_fqdn(pattern, name).matched;
        const bool theirs = std::regex_search(name, published);
        CHECK_MESSAGE(ours == theirs, name);
        agreed += ours == theirs;
    }
    CHECK(agreed == 4000);
}

TEST_CASE("compile_pattern: examples") {
    SUBCASE("google fixed FQDN") {
        const auto pattern = compile_pattern(*find_profile(catalog(), "google"));
        CHECK(match_fqdn(pattern, "mqtt.googleapis.com").matched);
        CHECK_FALSE(match_fqdn(pattern, "x.mqtt.googleapis.com").matched);
        CHECK_FALSE(match_fqdn(pattern, "googleapis.com").matched);
        CHECK_FALSE(pattern.region_group.has_value());
    }
    SUBCASE("single region token over mindsphere.io") {
        const auto pattern = compile_pattern(mindsphere_like());
        auto r = match_fqdn(pattern, "x.eu1.mindsphere.io");
        CHECK(r.matched);
        CHECK(r.region_token == std::optional<std::string>("eu1"));
        CHECK_FALSE(match_fqdn(pattern, "eu1.mindsphere.io").matched);
        CHECK_FALSE(match_fqdn(pattern, "x.eu2.mindsphere.io").matched);
    }
    SUBCASE("literal subdomain iot over a region") {
        auto p = mindsphere_like();
        p.subdomain = {SubdomainRule::literal_set, false, {"iot"}};
        const auto pattern = compile_pattern(p);
        CHECK(match_fqdn(pattern, "iot.eu1.mindsphere.io").matched);
        CHECK_FALSE(match_fqdn(pattern, "x.eu1.mindsphere.io").matched);
    }
    SUBCASE("mandatory region with empty grammar is a compile error") {
        auto p = mindsphere_like();
        p.region.tokens.clear();
        CHECK_THROWS_WITH_AS(compile_pattern(p), doctest::Contains("mandatory region"), ValidationError);
    }
    SUBCASE("wildcard never matches an empty label") {
        const auto pattern = compile_pattern(*find_profile(catalog(), "amazon"));
        CHECK_FALSE(match_fqdn(pattern, ".iot.eu-west-1.amazonaws.com").matched);
        CHECK_FALSE(match_fqdn(pattern, "a..iot.eu-west-1.amazonaws.com").matched);
        CHECK_FALSE(match_fqdn(pattern, "iot.eu-west-1.amazonaws.com").matched);
    }
}

TEST_CASE("match_fqdn: examples") {
    const PatternSet set(catalog());
    const auto* amazon = set.find("amazon");
    const auto* google = set.find("google");
    auto r = match_fqdn(*amazon, "abcd1234.iot.eu-west-1.amazonaws.com");
    CHECK(r.matched);
    CHECK(r.region_token == std::optional<std::string>("eu-west-1"));
    CHECK_FALSE(match_fqdn(*amazon, "www.amazonaws.com").matched);
    auto g = match_fqdn(*google, "MQTT.GOOGLEAPIS.COM.");
    CHECK(g.matched);
    CHECK(g.normalized_fqdn == "mqtt.googleapis.com");
    CHECK_FALSE(g.region_token.has_value());

    // wildcard certificate names are accepted as a single leading label
    CHECK(match_fqdn(*amazon, "*.iot.us-east-1.amazonaws.com").matched);
}

TEST_CASE("published expressions and compiled patterns agree with curated cases") {
    const auto published = iotmap::testing::load_published_expressions();
    const auto cases = iotmap::testing::load_pattern_cases();
    const PatternSet set(catalog());
    std::map<std::string, int> near_misses;
    for (const auto& c : cases) {
        bool fixture_accepts = false;
        for (const auto& e : published)
            if (e.provider == c.provider && e.accepts(c.fqdn)) fixture_accepts = true;
        CHECK_MESSAGE(fixture_accepts == c.positive, c.provider << " " << c.fqdn);
        const auto* pattern = set.find(c.provider);
        REQUIRE(pattern);
        CHECK_MESSAGE(match_fqdn(*pattern, c.fqdn).matched == c.positive, c.provider << " " << c.fqdn);
        if (!c.positive) ++near_misses[c.provider];
    }
    CHECK(near_misses.size() == 14);
    for (const auto& [provider, n] : near_misses) CHECK_MESSAGE(n >= 20, provider);
}

TEST_CASE("properties: round trip, soundness, determinism") {
    const PatternSet set(catalog());
    for (const auto& profile : catalog()) {
        const auto& pattern = *set.find(profile.id);
        for (const auto& [name, region] : enumerate(profile)) {
            const auto r = match_fqdn(pattern, name);
            CHECK_MESSAGE(r.matched, name);
            if (region) CHECK_MESSAGE(r.region_token == region, name);
            CHECK(match_fqdn(pattern, name).region_token == r.region_token);

            // swapping the parent suffix for a different one must never match
            const std::string alien = name.substr(0, name.size() - profile.parent_domain.size()) + "example.org";
            CHECK_FALSE_MESSAGE(match_fqdn(pattern, alien).matched, alien);
            CHECK_FALSE(match_fqdn(pattern, name + ".example.org").matched);
        }
    }
}

TEST_CASE("multi-provider matches are all surfaced") {
    ProviderProfile a;
    a.id = "a";
    a.parent_domain = "shared.example";
    ProviderProfile b = a;
    b.id = "b";
    b.subdomain.optional = true;
    const PatternSet set({a, b});
    CHECK(set.match_all("x.shared.example").size() == 2);
    CHECK(set.match_all("shared.example").size() == 1);
}

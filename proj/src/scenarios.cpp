#include "iotmap/synth.hpp"

namespace iotmap::scenario {

namespace {

constexpr std::array<double, 24> kEvening{0.30, 0.25, 0.20, 0.20, 0.20, 0.25, 0.40, 0.60, 0.80, 0.90, 1.00, 1.00,
                                          1.00, 1.00, 1.00, 1.00, 1.00, 1.10, 1.20, 1.20, 1.10, 0.90, 0.70, 0.50};

UniverseConfig base(std::uint64_t seed, std::size_t days) {
    UniverseConfig c;
    c.seed = seed;
    c.tz = UtcOffset::parse("+01:00");
    const Timestamp start = parse_timestamp("2022-02-28") - c.tz.seconds;
    c.window = StudyWindow(start, start + static_cast<Timestamp>(days) * kDay);
    c.population.diurnal = kEvening;
    return c;
}

ProviderSpec provider(std::string id, std::size_t servers) {
    ProviderSpec p;
    p.id = std::move(id);
    p.servers = servers;
    return p;
}

LineCategorySpec category(std::vector<std::pair<std::string, double>> adoption, std::size_t draws = 1) {
    LineCategorySpec c;
    c.draws = draws;
    c.adoption = std::move(adoption);
    return c;
}

}  // namespace

UniverseConfig discovery(std::uint64_t seed) {
    auto c = base(seed, 1);
    for (const char* id : {"alibaba", "amazon", "baidu", "bosch", "cisco", "fujitsu", "google", "huawei", "ibm",
                           "microsoft", "oracle", "ptc", "sap", "siemens", "sierra", "tencent"}) {
        auto p = provider(id, 625);
        p.tls_coverage = 0.6;
        p.pdns_coverage = 0.7;
        p.adns_coverage = 0.4;
        p.shared_fraction = 0.05;
        p.cloud_fraction = 0.3;
        const std::string s = id;
        if (s == "alibaba" || s == "amazon" || s == "baidu" || s == "google" || s == "siemens" || s == "sierra" ||
            s == "tencent")
            p.ipv6_fraction = 0.1;
        c.providers.push_back(p);
    }
    c.blocklists = 3;
    c.blocklist_cidrs = 300;
    c.blocklist_hits = 5;
    c.routing_unrelated = 20;
    c.routing_planted = 3;
    return c;
}

UniverseConfig sni_only(std::uint64_t seed) {
    auto c = base(seed, 1);
    auto ms = provider("microsoft", 100);
    ms.sni_only = true;
    ms.pdns_coverage = 0.9;
    ms.adns_coverage = 0.8;
    auto aws = provider("amazon", 100);
    aws.tls_coverage = 0.8;
    aws.pdns_coverage = 0.5;
    aws.adns_coverage = 0.5;
    c.providers = {ms, aws};
    c.sampling_rate = 100;
    c.population.lines = 3000;
    c.population.categories = {category({{"microsoft", 0.5}, {"amazon", 0.4}})};
    return c;
}

UniverseConfig scanner_day(std::uint64_t seed) {
    auto c = base(seed, 1);
    for (auto [id, n] : {std::pair{"amazon", 300}, {"microsoft", 300}, {"google", 200}, {"alibaba", 200}}) {
        auto p = provider(id, static_cast<std::size_t>(n));
        p.shared_fraction = 0.02;
        p.assigned_fraction = 0.6;
        c.providers.push_back(p);
    }
    c.sampling_rate = 1000;
    c.population.lines = 100'000;
    c.population.categories = {category({{"amazon", 0.3}, {"microsoft", 0.3}, {"google", 0.2}, {"alibaba", 0.1}})};
    c.population.active_hours = 2;
    c.population.scanners = 5;
    c.population.scanner_breadth = 200;
    return c;
}

UniverseConfig sampling(std::uint64_t seed) {
    auto c = base(seed, 7);
    for (auto [id, n] : {std::pair{"amazon", 400}, {"microsoft", 300}, {"google", 200}, {"alibaba", 200}, {"siemens", 100}}) {
        auto p = provider(id, static_cast<std::size_t>(n));
        p.tls_coverage = 0.8;
        p.pdns_coverage = 0.8;
        p.adns_coverage = 0.6;
        p.shared_fraction = 0.03;
        p.assigned_fraction = 0.7;
        c.providers.push_back(p);
    }
    c.providers[0].down_up_ratio = 3.0;
    c.sampling_rate = 1000;
    c.population.lines = 11'300;
    c.population.categories = {category(
        {{"amazon", 0.3}, {"microsoft", 0.25}, {"google", 0.2}, {"alibaba", 0.1}, {"siemens", 0.05}}, 2)};
    c.population.active_hours = 4;
    c.population.daily_bytes_median = 1'500'000;
    c.population.daily_bytes_sigma = 0.8;
    return c;
}

UniverseConfig continent(std::uint64_t seed) {
    auto c = base(seed, 3);
    auto aws = provider("amazon", 200);
    aws.regions = {{"eu-west-1", 1}, {"eu-central-1", 1}, {"us-east-1", 1}, {"us-west-2", 1}, {"sa-east-1", 0.5}};
    auto ms = provider("microsoft", 200);
    ms.regions = {{"DE/Frankfurt", 1}, {"NL/Amsterdam", 1}, {"US/Ashburn", 1}, {"US/Chicago", 1}, {"BR/Sao Paulo", 0.5}};
    c.providers = {aws, ms};
    c.sampling_rate = 100;
    c.population.lines = 20'000;
    c.population.categories = {category({{"amazon", 0.5}, {"microsoft", 0.4}})};
    c.population.traffic_regions = std::array<double, 4>{0.62, 0.35, 0.0, 0.03};
    return c;
}

UniverseConfig outage(std::uint64_t seed) {
    auto c = base(seed, 15);
    auto aws = provider("amazon", 40);
    aws.regions = {{"us-east-1", 1}, {"eu-west-1", 3}};
    c.providers = {aws};
    c.sampling_rate = 1;
    c.population.lines = 30'000;
    c.population.categories = {category({{"amazon", 1.0}})};
    c.population.active_hours = 3;
    c.population.daily_bytes_sigma = 0.15;
    c.population.diurnal = {0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.9, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0.9, 0.9};
    c.population.traffic_regions = std::array<double, 4>{0.75, 0.25, 0.0, 0.0};
    OutageSpec o;
    o.provider_id = "amazon";
    o.location = "US/Ashburn";
    o.day = 14;
    o.start_hour = 2;
    o.hours = 4;
    o.drop = 0.145;
    c.outages = {o};
    return c;
}

UniverseConfig churn(std::uint64_t seed) {
    auto c = base(seed, 7);
    auto aws = provider("amazon", 200);
    aws.churn = 0.1;
    auto ms = provider("microsoft", 100);
    ms.churn = 0.1;
    ms.pdns_coverage = 0.5;
    c.providers = {aws, ms};
    return c;
}

UniverseConfig ground_truth(std::uint64_t seed) {
    auto c = base(seed, 2);
    auto ms = provider("microsoft", 60);
    ms.assigned_fraction = 52.0 / 60.0;
    ms.missed_active = 4;
    ms.ground_truth = true;
    auto aws = provider("amazon", 100);
    aws.tls_coverage = 0.7;
    c.providers = {ms, aws};
    c.sampling_rate = 100;
    c.population.lines = 5000;
    c.population.categories = {category({{"microsoft", 0.6}, {"amazon", 0.3}})};
    return c;
}

UniverseConfig visibility(std::uint64_t seed) {
    auto c = base(seed, 1);
    auto aws = provider("amazon", 100);
    aws.assigned_fraction = 0.28;
    c.providers = {aws};
    c.sampling_rate = 100;
    c.population.lines = 3000;
    c.population.categories = {category({{"amazon", 0.9}})};
    return c;
}

}  // namespace iotmap::scenario

// Parallel kernels against their serial references on the sampling scenario (about 10^6 flows).

#include <benchmark/benchmark.h>

#include "iotmap/flows.hpp"
#include "iotmap/fusion.hpp"
#include "iotmap/synth.hpp"
#include "synth_pipeline.hpp"
#include "test_support.hpp"

using namespace iotmap;

namespace {

struct Fixture {
    std::vector<ProviderProfile> profiles = load_catalog(testing::catalog_path());
    PatternSet patterns{profiles};
    Universe universe = generate(scenario::sampling(), profiles);
    testing::Discovered discovered = testing::discover(universe, profiles, patterns);
    ServerIndex index{discovered.enriched.servers, profiles};
    ReverseIndex reverse = build_reverse_index(universe.reverse, universe.log.window);
    FlowOptions opts;
    ContactTable contacts;
    ScannerSet scanners;

    Fixture() {
        opts.tz = universe.log.tz;
        opts.window = universe.log.window;
        contacts = count_contacts(universe.flows, index, opts);
        scanners = scanner_set(contacts, kDefaultScannerThreshold);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void BM_count_contacts(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(count_contacts(f.universe.flows, f.index, f.opts));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.universe.flows.size()));
}

void BM_count_contacts_serial(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(count_contacts_serial(f.universe.flows, f.index, f.opts));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.universe.flows.size()));
}

void BM_aggregate_flows(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(aggregate_flows(f.universe.flows, f.index, f.scanners, f.opts));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.universe.flows.size()));
}

void BM_aggregate_flows_serial(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(aggregate_flows_serial(f.universe.flows, f.index, f.scanners, f.opts));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.universe.flows.size()));
}

void BM_classify_candidates(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(classify_candidates(f.discovered.candidates, f.reverse, f.patterns));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.discovered.candidates.size()));
}

void BM_classify_candidates_serial(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(classify_candidates_serial(f.discovered.candidates, f.reverse, f.patterns));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.discovered.candidates.size()));
}

}  // namespace

BENCHMARK(BM_count_contacts)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_count_contacts_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_aggregate_flows)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_aggregate_flows_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_classify_candidates)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_classify_candidates_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

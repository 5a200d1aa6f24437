#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "strata/collective.hpp"
#include "strata/folded.hpp"

using namespace strata;
namespace fs = std::filesystem;

namespace {

BuildId test_id(char c) { return BuildId::digest(std::string(1, c)); }

StackSample sample_at(int64_t ts, std::vector<uint64_t> offsets,
                      int rank = 0) {
    StackSample s;
    s.timestamp_ns = ts;
    s.rank = rank;
    for (uint64_t o : offsets) s.frames.push_back({test_id('a'), o});
    return s;
}

CollectiveEvent ev(int rank, int64_t entry, int64_t exit, int group = 0,
                   CollectiveKind kind = CollectiveKind::AllReduce) {
    return {rank, group, kind, entry, exit, exit - entry};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("strata-coll-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("aggregation is lossless and merges identical stacks") {
    std::vector<StackSample> stream;
    // 10 samples over two distinct stacks inside one 5 s window.
    for (int i = 0; i < 10; ++i)
        stream.push_back(sample_at(int64_t(i) * 100'000'000,
                                   i % 3 == 0 ? std::vector<uint64_t>{8, 16}
                                              : std::vector<uint64_t>{8, 24}));
    auto windows = aggregate_samples(stream);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].records.size() == 2);
    CHECK(windows[0].total_count() == 10);  // reconstruction is exact
    CHECK(windows[0].window_start_ns == 0);
    CHECK(windows[0].window_end_ns == 5'000'000'000);
}

TEST_CASE("aggregation drains on the 5 second grid") {
    std::vector<StackSample> stream;
    stream.push_back(sample_at(4'999'999'999, {8}));
    stream.push_back(sample_at(5'000'000'000, {8}));
    stream.push_back(sample_at(17'000'000'000, {8}));  // skips a window
    auto windows = aggregate_samples(stream);
    REQUIRE(windows.size() == 3);
    CHECK(windows[0].window_start_ns == 0);
    CHECK(windows[1].window_start_ns == 5'000'000'000);
    CHECK(windows[2].window_start_ns == 15'000'000'000);
    uint64_t total = 0;
    for (const auto& w : windows) total += w.total_count();
    CHECK(total == stream.size());
}

TEST_CASE("aggregation input validation") {
    CHECK(aggregate_samples({}).empty());
    std::vector<StackSample> mixed{sample_at(0, {8}, 0), sample_at(1, {8}, 1)};
    CHECK_THROWS_AS(aggregate_samples(mixed), Error);
    std::vector<StackSample> regressed{sample_at(10, {8}), sample_at(5, {8})};
    CHECK_THROWS_AS(aggregate_samples(regressed), Error);
    std::vector<StackSample> empty_stack{sample_at(0, {})};
    CHECK_THROWS_AS(aggregate_samples(empty_stack), Error);
    CHECK_THROWS_AS(aggregate_samples({sample_at(0, {8})}, 0), Error);
}

TEST_CASE("high-volume aggregation reduces records by stack cardinality") {
    std::mt19937_64 rng(3);
    std::vector<StackSample> stream;
    for (int i = 0; i < 5000; ++i)
        stream.push_back(
            sample_at(int64_t(i) * 1'000'000, {8, 16 + 8 * (rng() % 12)}));
    auto windows = aggregate_samples(stream);
    size_t records = 0;
    uint64_t total = 0;
    for (const auto& w : windows) {
        records += w.records.size();
        total += w.total_count();
    }
    CHECK(total == 5000);
    CHECK(double(stream.size()) / double(records) >= 10.0);
}

TEST_CASE("folded output is root-first, sorted, and merged") {
    TempDir tmp;
    SymbolRepository repo(tmp.path);
    BuildId id = test_id('a');
    repo.ingest(id, pack_symbols(id, {{0, 8, "main"},
                                      {8, 8, "leafA"},
                                      {16, 8, "work"},
                                      {24, 8, "leafB"}}));

    ProfileWindow w;
    // Leaf-first records: leafA<-main (x2), leafB<-work<-main.
    w.records.push_back({{{id, 8}, {id, 0}}, 2});
    w.records.push_back({{{id, 24}, {id, 16}, {id, 0}}, 1});
    FoldedProfile folded = to_folded(w, repo, SymbolFile::LookupMode::ExactRange);
    CHECK(folded.total == 3);
    CHECK(folded.to_string() == "main;leafA 2\nmain;work;leafB 1\n");

    auto fractions = folded.inclusive_fractions();
    CHECK(fractions.at("main") == 1.0);
    CHECK(fractions.at("leafA") == doctest::Approx(2.0 / 3.0));
    CHECK(fractions.at("work") == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("recursive frames count once per stack in inclusive fractions") {
    FoldedProfile p = fold_symbolized({{{"f", "f", "main"}, 3},
                                       {{"g", "main"}, 1}});
    auto fr = p.inclusive_fractions();
    CHECK(fr.at("f") == doctest::Approx(0.75));  // not 1.5
    CHECK(fr.at("main") == 1.0);
}

TEST_CASE("folded diff includes one-sided stacks") {
    FoldedProfile a = fold_symbolized({{{"x", "main"}, 4}});
    FoldedProfile b = fold_symbolized({{{"x", "main"}, 1}, {{"y", "main"}, 2}});
    std::string diff = diff_folded(a, b);
    CHECK(diff == "main;x 4 1\nmain;y 0 2\n");
}

TEST_CASE("collective matching groups overlapping events per instance") {
    std::vector<int> ranks{0, 1, 2};
    std::vector<CollectiveEvent> events;
    for (int iter = 0; iter < 5; ++iter) {
        for (int r : ranks) {
            int64_t base = 1'000'000 * iter + 1'000 * r;  // small jitter
            events.push_back(ev(r, base, base + 400'000));
        }
    }
    auto instances = match_collectives(events, ranks);
    REQUIRE(instances.size() == 5);
    for (const auto& inst : instances) {
        CHECK_FALSE(inst.partial);
        CHECK(inst.events.size() == 3);
    }
    // Per-rank order is preserved: instance i holds each rank's i-th event.
    for (size_t i = 0; i < instances.size(); ++i)
        for (const auto& [rank, e] : instances[i].events)
            CHECK(e.host_entry_ns == int64_t(1'000'000 * i + 1'000 * rank));
}

TEST_CASE("matching tolerates constant clock shifts beyond the skew bound") {
    // Rank 1's clock runs 400 ms ahead: far beyond the 50 ms skew window,
    // but constant, so coarse pre-alignment absorbs it.
    std::vector<int> ranks{0, 1};
    std::vector<CollectiveEvent> events;
    for (int iter = 0; iter < 4; ++iter) {
        int64_t base = 1'000'000 * iter;
        events.push_back(ev(0, base, base + 400'000));
        events.push_back(ev(1, base + 400'000'000, base + 400'400'000));
    }
    auto instances = match_collectives(events, ranks);
    REQUIRE(instances.size() == 4);
    for (const auto& inst : instances) CHECK_FALSE(inst.partial);
}

TEST_CASE("a missing rank flags the instance partial") {
    std::vector<int> ranks{0, 1, 2};
    std::vector<CollectiveEvent> events{ev(0, 0, 400'000), ev(1, 1'000, 401'000)};
    auto instances = match_collectives(events, ranks);
    REQUIRE(instances.size() == 1);
    CHECK(instances[0].partial);
    CHECK(instances[0].events.size() == 2);
    CHECK_THROWS_AS(entry_lateness(instances[0], {}), Error);
}

TEST_CASE("matching validates event sanity") {
    CHECK_THROWS_AS(match_collectives({ev(0, 100, 100)}, {0}), Error);
    std::vector<CollectiveEvent> disordered{ev(0, 1'000'000, 1'400'000),
                                            ev(0, 0, 400'000)};
    CHECK_THROWS_AS(match_collectives(disordered, {0}), Error);
}

TEST_CASE("clock alignment recovers injected skews from barrier exits") {
    // True exits are simultaneous; each rank observes them through its own
    // skewed clock, plus small jitter.
    std::map<int, int64_t> skew{{0, -3'000'000}, {1, 0}, {2, 7'500'000}};
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int64_t> jitter(-50'000, 50'000);
    std::vector<CollectiveEvent> events;
    for (int iter = 0; iter < 101; ++iter) {
        int64_t true_exit = 10'000'000 * (iter + 1);
        for (const auto& [rank, s] : skew)
            events.push_back(ev(rank, true_exit - 500'000 + s,
                                true_exit + s + jitter(rng)));
    }
    auto instances = match_collectives(events, {0, 1, 2});
    auto offsets = align_clocks(instances);
    REQUIRE(offsets.has_value());
    // Offsets are relative to the latest-running clock (rank 2 here).
    for (const auto& [rank, s] : skew) {
        int64_t expected = s - 7'500'000;
        CHECK(std::abs(offsets->at(rank) - expected) <= 150'000);  // 3x jitter
    }
    CHECK_FALSE(align_clocks({}).has_value());
}

TEST_CASE("entry lateness is zero-anchored and translation invariant") {
    CollectiveInstance inst;
    inst.group = 0;
    for (int r = 0; r < 8; ++r) {
        int64_t entry = 1'000'000;
        if (r == 5) entry += 600'000;  // 0.6 ms late
        inst.events.emplace(r, ev(r, entry, entry + 400'000));
    }
    auto lateness = entry_lateness(inst, {});
    CHECK(lateness.at(0) == 0.0);
    CHECK(lateness.at(5) == doctest::Approx(0.6));

    // Shifting every entry by +5 ms changes nothing.
    CollectiveInstance shifted = inst;
    for (auto& [r, e] : shifted.events) {
        e.host_entry_ns += 5'000'000;
        e.host_exit_ns += 5'000'000;
    }
    CHECK(entry_lateness(shifted, {}) == lateness);
}

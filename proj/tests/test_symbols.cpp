#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "strata/symrepo.hpp"
#include "strata/unwind_corpus.hpp"

using namespace strata;
namespace fs = std::filesystem;

namespace {

BuildId test_id(char seed) { return BuildId::digest(std::string(1, seed)); }

std::vector<SymbolEntry> random_entries(std::mt19937_64& rng, size_t max_n) {
    std::uniform_int_distribution<size_t> count(1, max_n);
    size_t n = count(rng);
    std::map<uint64_t, SymbolEntry> by_start;  // unique, sorted starts
    std::uniform_int_distribution<uint64_t> start(0, 1ull << 40);
    std::uniform_int_distribution<uint32_t> size(0, 4096);
    std::uniform_int_distribution<size_t> name_len(1, 64);
    while (by_start.size() < n) {
        SymbolEntry e;
        e.start = start(rng);
        e.size = size(rng);
        for (size_t i = 0, len = name_len(rng); i < len; ++i)
            e.name += char('a' + rng() % 26);
        by_start[e.start] = e;
    }
    std::vector<SymbolEntry> out;
    for (auto& [s, e] : by_start) out.push_back(std::move(e));
    return out;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("strata-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("pack/parse round trip is an identity over randomized entries") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        BuildId id = test_id(char('a' + trial % 26));
        std::vector<SymbolEntry> entries = random_entries(rng, 200);
        std::vector<uint8_t> bytes = pack_symbols(id, entries);
        SymbolFile file = parse_symbols(bytes);
        CHECK(file.build_id() == id);
        REQUIRE(file.entries().size() == entries.size());
        for (size_t i = 0; i < entries.size(); ++i) {
            CHECK(file.entries()[i].start == entries[i].start);
            CHECK(file.entries()[i].size == entries[i].size);
            CHECK(file.entries()[i].name == entries[i].name);
        }
        // Re-packing the parsed view is byte-identical.
        CHECK(pack_symbols(file.build_id(), file.entries()) == bytes);
    }
}

TEST_CASE("pack rejects invalid entry sets") {
    BuildId id = test_id('p');
    CHECK_THROWS_AS(pack_symbols(id, {{0x10, 4, "a"}, {0x10, 4, "b"}}), Error);
    CHECK_THROWS_AS(pack_symbols(id, {{0x10, 4, ""}}), Error);
    CHECK_THROWS_AS(pack_symbols(id, {{0x10, 4, std::string(70000, 'x')}}),
                    Error);
}

TEST_CASE("parse rejects corrupted headers and bounds") {
    BuildId id = test_id('q');
    std::vector<uint8_t> good = pack_symbols(id, {{0x10, 4, "a"}, {0x20, 4, "b"}});
    CHECK_NOTHROW(parse_symbols(good));

    auto corrupt = [&](size_t index, uint8_t value) {
        std::vector<uint8_t> bad = good;
        bad[index] = value;
        return bad;
    };
    CHECK_THROWS_AS(parse_symbols(corrupt(0, 'X')), Error);   // magic
    CHECK_THROWS_AS(parse_symbols(corrupt(4, 99)), Error);    // version
    CHECK_THROWS_AS(parse_symbols(corrupt(28, 77)), Error);   // entry count
    CHECK_THROWS_AS(parse_symbols({good.begin(), good.begin() + 20}), Error);
    CHECK_THROWS_AS(parse_symbols({}), Error);

    // Sorting is enforced: swap the two entry records.
    std::vector<uint8_t> swapped = good;
    std::swap_ranges(swapped.begin() + 36, swapped.begin() + 52,
                     swapped.begin() + 52);
    CHECK_THROWS_AS(parse_symbols(swapped), Error);
}

TEST_CASE("lookup modes: exact range vs nearest lower") {
    BuildId id = test_id('l');
    // f at [0x100, 0x140), size-0 marker at 0x200, g at [0x300, 0x340).
    SymbolFile file(id, {{0x100, 0x40, "f"}, {0x200, 0, "marker"},
                         {0x300, 0x40, "g"}});

    using M = SymbolFile::LookupMode;
    CHECK(file.lookup(0x100, M::ExactRange) == "f");
    CHECK(file.lookup(0x13f, M::ExactRange) == "f");
    CHECK_FALSE(file.lookup(0x140, M::ExactRange).has_value());  // gap
    CHECK_FALSE(file.lookup(0x0ff, M::ExactRange).has_value());  // below first
    CHECK(file.lookup(0x200, M::ExactRange) == "marker");  // size 0: start only
    CHECK_FALSE(file.lookup(0x201, M::ExactRange).has_value());

    // Nearest-lower attributes every address to the preceding symbol.
    CHECK(file.lookup(0x140, M::NearestLower) == "f");
    CHECK(file.lookup(0x2ff, M::NearestLower) == "marker");
    CHECK(file.lookup(0x10000, M::NearestLower) == "g");
    CHECK_FALSE(file.lookup(0x0ff, M::NearestLower).has_value());
}

TEST_CASE("lookup probes respect the bisection bound") {
    BuildId id = test_id('b');
    for (size_t n : {size_t(1), size_t(1000), size_t(50'000)}) {
        std::vector<SymbolEntry> entries;
        for (size_t i = 0; i < n; ++i)
            entries.push_back({i * 64, 64, "s" + std::to_string(i)});
        SymbolFile file(id, entries);
        uint64_t bound = n == 1 ? 1 : uint64_t(std::ceil(std::log2(double(n)))) + 1;
        std::mt19937_64 rng(5);
        uint64_t worst = 0;
        for (int i = 0; i < 2000; ++i) {
            uint64_t probes = 0;
            file.lookup(rng() % (n * 64), SymbolFile::LookupMode::ExactRange,
                        &probes);
            worst = std::max(worst, probes);
        }
        CHECK(worst <= bound);
    }
}

TEST_CASE("unknown frames render as bracketed hex labels") {
    BuildId id = test_id('u');
    std::string label = unknown_frame_label(id, 0x1a2b);
    CHECK(label == "[" + id.hex() + "+0x1a2b]");
}

TEST_CASE("repository ingest is idempotent and validating") {
    TempDir tmp;
    SymbolRepository repo(tmp.path);
    BuildId id = test_id('r');
    std::vector<uint8_t> payload = pack_symbols(id, {{0x10, 4, "a"}});

    CHECK_FALSE(repo.contains(id));
    CHECK(repo.ingest(id, payload) == IngestOutcome::Stored);
    CHECK(repo.contains(id));
    CHECK(repo.ingest(id, payload) == IngestOutcome::AlreadyPresent);

    auto loaded = repo.load(id);
    REQUIRE(loaded.has_value());
    CHECK(loaded->entries().size() == 1);
    CHECK(loaded->entries()[0].name == "a");

    // Layout: symbols/<2 hex>/<id>.symr
    fs::path expected = tmp.path / "symbols" / id.hex().substr(0, 2) /
                        (id.hex() + ".symr");
    CHECK(repo.path_for(id) == expected);
    CHECK(fs::exists(expected));

    // Claimed id must match the payload header.
    BuildId other = test_id('s');
    CHECK_THROWS_AS(repo.ingest(other, payload), Error);
    CHECK_FALSE(repo.contains(other));
}

TEST_CASE("ingest aborts atomically on digest mismatch") {
    TempDir tmp;
    SymbolRepository repo(tmp.path);
    BuildId id = test_id('d');
    std::vector<uint8_t> payload = pack_symbols(id, {{0x10, 4, "a"}});

    std::vector<BuildId> digests = segment_digests(payload);
    REQUIRE(digests.size() == 1);  // one segment for small payloads
    std::vector<BuildId> wrong{test_id('x')};
    CHECK_THROWS_AS(repo.ingest(id, payload, wrong), Error);
    CHECK_FALSE(repo.contains(id));
    // Nothing half-written remains anywhere under the repository root.
    size_t files = 0;
    for (auto& p : fs::recursive_directory_iterator(tmp.path))
        if (p.is_regular_file()) ++files;
    CHECK(files == 0);

    CHECK(repo.ingest(id, payload, digests) == IngestOutcome::Stored);
    CHECK(segment_digests({}).size() == 1);  // empty payload: one digest
}

TEST_CASE("corrupt payloads are rejected before touching the repository") {
    TempDir tmp;
    SymbolRepository repo(tmp.path);
    BuildId id = test_id('c');
    std::vector<uint8_t> payload = pack_symbols(id, {{0x10, 4, "a"}});
    payload[0] = 'X';
    CHECK_THROWS_AS(repo.ingest(id, payload), Error);
    CHECK_FALSE(repo.contains(id));
}

TEST_CASE("stack resolution falls back to hex labels") {
    TempDir tmp;
    SymbolRepository repo(tmp.path);
    BuildId known = test_id('k');
    BuildId unknown = test_id('z');
    repo.ingest(known, pack_symbols(known, {{0x100, 0x40, "f"}}));

    std::vector<FrameRef> stack{{known, 0x110}, {known, 0x900}, {unknown, 0x10}};
    auto names = resolve_stack(stack, repo, SymbolFile::LookupMode::ExactRange);
    REQUIRE(names.size() == 3);
    CHECK(names[0] == "f");
    CHECK(names[1] == unknown_frame_label(known, 0x900));
    CHECK(names[2] == unknown_frame_label(unknown, 0x10));
}

TEST_CASE("sparse nearest-lower misattributes the hot gap to one absorber") {
    MisattributionCorpus corpus = generate_misattribution_corpus();
    TempDir tmp;
    SymbolRepository repo(tmp.path);
    const BuildId& id = corpus.binary->build_id();
    repo.ingest(id, pack_symbols(id, *corpus.binary->sparse_symbols()));

    auto concentration = [&](SymbolFile::LookupMode mode) {
        auto resolved = resolve_stacks(corpus.stacks, repo, mode);
        std::map<std::string, size_t> counts;
        for (const auto& s : resolved) ++counts[s.at(0)];
        size_t top = 0;
        for (const auto& [name, c] : counts) top = std::max(top, c);
        return std::pair<double, size_t>{double(top) / double(resolved.size()),
                                         counts.size()};
    };

    auto [sparse_top, sparse_names] =
        concentration(SymbolFile::LookupMode::NearestLower);
    CHECK(sparse_top > 0.5);  // one name absorbs the majority of samples
    CHECK(sparse_names <= 3);

    // Re-ingesting the full table and resolving exact-range spreads them.
    TempDir tmp2;
    SymbolRepository full_repo(tmp2.path);
    full_repo.ingest(id, pack_symbols(id, corpus.binary->full_symbols()));
    auto resolved = resolve_stacks(corpus.stacks, full_repo,
                                   SymbolFile::LookupMode::ExactRange);
    std::map<std::string, size_t> counts;
    for (const auto& s : resolved) ++counts[s.at(0)];
    CHECK(counts.size() >= 10);
    for (const auto& [name, c] : counts) CHECK(name.rfind("hot_kernel_", 0) == 0);
}

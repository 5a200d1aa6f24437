#include <benchmark/benchmark.h>

#include <random>

#include "strata/eval.hpp"
#include "strata/samples.hpp"
#include "strata/symfile.hpp"
#include "strata/unwind_corpus.hpp"

namespace {

strata::UnwindCorpus& shared_corpus() {
    static strata::UnwindCorpus corpus = [] {
        strata::UnwindCorpusParams params;
        params.samples = 512;
        return strata::generate_unwind_corpus(params);
    }();
    return corpus;
}

void BM_FdeLookup(benchmark::State& state) {
    strata::BinarySpec spec;
    spec.label = "bench-fde";
    const size_t n = size_t(state.range(0));
    for (size_t i = 0; i < n; ++i) {
        strata::FunctionDef fn;
        fn.name = "f" + std::to_string(i);
        fn.offset = 0x1000 + i * 64;
        fn.length = 64;
        fn.cfi.push_back({fn.offset, fn.offset + 64, strata::CfiRule::Kind::Simple,
                          strata::CfaBase::SP, int64_t(fn.frame_size)});
        spec.functions.push_back(std::move(fn));
    }
    spec.code_size = 0x1000 + n * 64;
    strata::VirtualBinary bin = strata::build_binary(spec);
    strata::CompiledFdeTable table = strata::compile_fde_table(bin);

    std::mt19937_64 rng(7);
    std::uniform_int_distribution<uint64_t> dist(0x1000, 0x1000 + n * 64 - 1);
    for (auto _ : state)
        benchmark::DoNotOptimize(table.lookup(dist(rng)));
}
BENCHMARK(BM_FdeLookup)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);

void BM_HybridUnwind(benchmark::State& state) {
    auto& corpus = shared_corpus();
    strata::TableSet tables = strata::compile_tables(corpus.samples[0].process);
    strata::MarkerMap markers;
    // Warm pass so the steady state (marked functions) is measured.
    strata::unwind_corpus_eval(corpus.samples, strata::UnwindMode::Hybrid,
                               tables, &markers);
    size_t i = 0;
    for (auto _ : state) {
        const auto& sample = corpus.samples[i++ % corpus.samples.size()];
        benchmark::DoNotOptimize(
            strata::unwind_hybrid(sample.process,
                                  sample.process.threads()[0].registers,
                                  markers, tables));
    }
}
BENCHMARK(BM_HybridUnwind);

void BM_SymbolLookup(benchmark::State& state) {
    const size_t n = size_t(state.range(0));
    std::vector<strata::SymbolEntry> entries;
    for (size_t i = 0; i < n; ++i)
        entries.push_back({0x1000 + i * 64, 64, "sym" + std::to_string(i)});
    strata::SymbolFile file(strata::BuildId::digest(std::string_view("b")),
                            entries);

    std::mt19937_64 rng(7);
    std::uniform_int_distribution<uint64_t> dist(0x1000, 0x1000 + n * 64 - 1);
    for (auto _ : state)
        benchmark::DoNotOptimize(file.lookup(
            dist(rng), strata::SymbolFile::LookupMode::ExactRange));
}
BENCHMARK(BM_SymbolLookup)->Arg(1 << 10)->Arg(1 << 16);

void BM_Aggregation(benchmark::State& state) {
    strata::BuildId id = strata::BuildId::digest(std::string_view("a"));
    std::mt19937_64 rng(7);
    std::vector<std::vector<strata::FrameRef>> pool;
    for (int s = 0; s < 16; ++s) {
        std::vector<strata::FrameRef> stack;
        for (int d = 0; d < 12; ++d)
            stack.push_back({id, 0x1000 + uint64_t(s * 64 + d * 8)});
        pool.push_back(std::move(stack));
    }
    std::vector<strata::StackSample> stream;
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    for (int i = 0; i < 100'000; ++i) {
        strata::StackSample s;
        s.timestamp_ns = int64_t(i) * 10'000;
        s.frames = pool[pick(rng)];
        stream.push_back(std::move(s));
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(strata::aggregate_samples(stream));
    state.SetItemsProcessed(int64_t(state.iterations()) *
                            int64_t(stream.size()));
}
BENCHMARK(BM_Aggregation);

}  // namespace

BENCHMARK_MAIN();

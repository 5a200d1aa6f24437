#include "strata/unwind_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace strata {

namespace {

constexpr uint64_t kTextBase = 0x400000;
constexpr uint64_t kFunctionLength = 64;
constexpr size_t kStackLen = 64 << 10;

std::shared_ptr<const VirtualBinary> make_corpus_binary(
    const UnwindCorpusParams& params, size_t omit_count, std::mt19937_64& rng) {
    BinarySpec spec;
    spec.label = "unwind-corpus";
    spec.code_size = params.function_count * kFunctionLength + 0x1000;
    const uint64_t frame_sizes[] = {32, 48, 64, 80};
    size_t indirect_count =
        size_t(std::llround(params.indirect_fraction * double(omit_count)));
    for (size_t i = 0; i < params.function_count; ++i) {
        FunctionDef fn;
        fn.offset = 0x1000 + i * kFunctionLength;
        fn.length = kFunctionLength;
        bool omits = i < omit_count;
        fn.fp_convention = omits ? FpConvention::Omits : FpConvention::Preserves;
        fn.name = (omits ? "omit_" : "keep_") + std::to_string(i);
        fn.frame_size = frame_sizes[rng() % 4];
        CfiRule rule;
        rule.pc_start = fn.offset;
        rule.pc_end = fn.end();
        if (omits && i < indirect_count) {
            rule.kind = CfiRule::Kind::Indirect;
            rule.base = CfaBase::SP;
            rule.load_offset = 8;
            rule.add_offset = 16;
        } else {
            rule.kind = CfiRule::Kind::Simple;
            rule.base = CfaBase::SP;
            rule.cfa_offset = int64_t(fn.frame_size);
        }
        fn.cfi.push_back(rule);
        spec.functions.push_back(std::move(fn));
    }
    return std::make_shared<VirtualBinary>(build_binary(spec));
}

}  // namespace

UnwindCorpus generate_unwind_corpus(const UnwindCorpusParams& params) {
    if (params.omit_fraction < 0.0 || params.omit_fraction > 1.0 ||
        params.indirect_fraction < 0.0 || params.indirect_fraction > 1.0)
        throw Error("corpus fractions must lie in [0, 1]");
    if (params.function_count == 0 || params.samples == 0)
        throw Error("corpus needs functions and samples");

    std::mt19937_64 rng(params.seed);
    size_t omit_count = size_t(
        std::llround(params.omit_fraction * double(params.function_count)));
    size_t keep_count = params.function_count - omit_count;

    UnwindCorpus corpus;
    corpus.binary = make_corpus_binary(params, omit_count, rng);
    corpus.omit_fraction =
        double(omit_count) / double(params.function_count);
    const auto& fns = corpus.binary->functions();

    std::vector<size_t> omits, keeps;
    for (size_t i = 0; i < fns.size(); ++i)
        (fns[i].fp_convention == FpConvention::Omits ? omits : keeps)
            .push_back(i);

    auto frame_for = [&](size_t fn_idx) {
        const FunctionDef& fn = fns[fn_idx];
        uint64_t off = fn.offset + 8 + rng() % (fn.length - 16);
        return FrameRef{corpus.binary->build_id(), off};
    };

    // Chains are a preserves run (leaf side) then an omits run (root side):
    // FP is live exactly through the preserves run, junk afterwards, so
    // method markers settle to each function's true convention.
    auto make_chain = [&](const std::vector<size_t>& leaf_fns,
                          const std::vector<size_t>& root_fns) {
        GroundTruthStack chain;
        for (size_t idx : leaf_fns) chain.frames.push_back(frame_for(idx));
        for (size_t idx : root_fns) chain.frames.push_back(frame_for(idx));
        return chain;
    };

    std::vector<GroundTruthStack> chains;

    // Coverage pass: every function appears in at least one chain. Groups
    // of up to 10 preserves functions each get one omits root; leftover
    // omits functions form all-omits chains.
    if (!omits.empty()) {
        size_t next_omit = 0;
        for (size_t i = 0; i < keeps.size(); i += 10) {
            std::vector<size_t> run(keeps.begin() + i,
                                    keeps.begin() + std::min(i + 10, keeps.size()));
            chains.push_back(make_chain(run, {omits[next_omit % omits.size()]}));
            ++next_omit;
        }
        for (size_t i = next_omit >= omits.size() ? omits.size() : next_omit;
             i < omits.size(); i += 10) {
            std::vector<size_t> run(omits.begin() + i,
                                    omits.begin() + std::min(i + 10, omits.size()));
            chains.push_back(make_chain({}, run));
        }
    } else {
        for (size_t i = 0; i < keeps.size(); i += 10) {
            std::vector<size_t> run(keeps.begin() + i,
                                    keeps.begin() + std::min(i + 10, keeps.size()));
            chains.push_back(make_chain(run, {}));
        }
    }
    if (chains.size() > params.samples)
        throw Error("sample budget too small to cover every function");

    // Random pass up to the sample budget.
    std::geometric_distribution<size_t> depth_dist(1.0 / params.mean_depth);
    std::geometric_distribution<size_t> run_dist(
        params.omit_fraction > 0.0 ? params.omit_fraction : 0.5);
    while (chains.size() < params.samples) {
        size_t depth = std::min(params.max_depth, depth_dist(rng) + 2);
        size_t a;  // leading preserves frames
        if (omits.empty())
            a = depth;
        else if (keeps.empty())
            a = 0;
        else
            a = std::min(run_dist(rng), depth - 1);
        std::vector<size_t> leaf_run, root_run;
        for (size_t i = 0; i < a; ++i)
            leaf_run.push_back(keeps[rng() % keeps.size()]);
        for (size_t i = a; i < depth; ++i)
            root_run.push_back(omits[rng() % omits.size()]);
        chains.push_back(make_chain(leaf_run, root_run));
    }

    for (const GroundTruthStack& chain : chains) {
        CorpusSample sample;
        sample.process.map_binary(corpus.binary, kTextBase);
        ThreadImage img =
            synthesize_stack_image(sample.process, chain, params.clobber,
                                   0x7f0000000000ull, kStackLen);
        sample.process.add_thread(std::move(img));
        sample.truth = chain;
        corpus.samples.push_back(std::move(sample));
    }
    return corpus;
}

MisattributionCorpus generate_misattribution_corpus(size_t hot_functions,
                                                    size_t samples_per_function,
                                                    uint64_t seed) {
    if (hot_functions < 2) throw Error("need at least 2 hot functions");
    std::mt19937_64 rng(seed);

    constexpr uint64_t kAbsorber = 0x11c6aa0;
    constexpr uint64_t kGap = 18ull << 20;  // next sparse entry 18 MiB later

    BinarySpec spec;
    spec.label = "misattribution-corpus";
    spec.code_size = kAbsorber + kGap + 0x10000;

    auto add_fn = [&](const std::string& name, uint64_t offset) {
        FunctionDef fn;
        fn.name = name;
        fn.offset = offset;
        fn.length = kFunctionLength;
        fn.fp_convention = FpConvention::Omits;
        fn.frame_size = 32;
        fn.cfi.push_back({offset, offset + kFunctionLength, CfiRule::Kind::Simple,
                          CfaBase::SP, 32, 0, 0, -8});
        spec.functions.push_back(fn);
    };

    add_fn("runtime_init", 0x1000);
    add_fn("JitCompiledRegion::entry", kAbsorber);
    uint64_t stride = (kGap - 0x10000) / hot_functions;
    std::vector<uint64_t> hot_offsets;
    for (size_t i = 0; i < hot_functions; ++i) {
        uint64_t off = kAbsorber + 0x8000 + i * stride;
        off &= ~uint64_t(15);
        hot_offsets.push_back(off);
        add_fn("hot_kernel_" + std::to_string(i), off);
    }
    add_fn("runtime_teardown", kAbsorber + kGap);

    // The stripped table knows only the functions outside the gap.
    spec.sparse_symbols = std::vector<SymbolEntry>{
        {0x1000, uint32_t(kFunctionLength), "runtime_init"},
        {kAbsorber, 0, "JitCompiledRegion::entry"},
        {kAbsorber + kGap, uint32_t(kFunctionLength), "runtime_teardown"},
    };

    MisattributionCorpus corpus;
    corpus.binary = std::make_shared<VirtualBinary>(build_binary(spec));
    for (uint64_t off : hot_offsets)
        for (size_t s = 0; s < samples_per_function; ++s)
            corpus.stacks.push_back(
                {{corpus.binary->build_id(), off + 8 + rng() % 48}});
    return corpus;
}

}  // namespace strata

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "strata/eval.hpp"
#include "strata/stitch.hpp"
#include "strata/unwind_corpus.hpp"

using namespace strata;
using testutil::FnSpec;
using testutil::chain_of;
using testutil::make_binary;
using testutil::make_process;

namespace {

std::shared_ptr<const VirtualBinary> sized_binary(size_t n) {
    std::vector<FnSpec> fns;
    fns.reserve(n);
    for (size_t i = 0; i < n; ++i) fns.push_back({"f" + std::to_string(i)});
    return make_binary("sized-" + std::to_string(n), fns);
}

}  // namespace

TEST_CASE("fde lookup probes stay within the bisection bound") {
    // Oracle: a binary search over M sorted entries inspects at most
    // ceil(log2(M)) + 1 of them.
    for (size_t m : {size_t(1), size_t(1000), size_t(50'000)}) {
        auto bin = sized_binary(m);
        CompiledFdeTable table = compile_fde_table(*bin);
        REQUIRE(table.size() == m);
        uint64_t bound = m == 1 ? 1 : uint64_t(std::ceil(std::log2(double(m)))) + 1;

        std::mt19937_64 rng(99);
        std::uniform_int_distribution<uint64_t> dist(0x1000, 0x1000 + m * 64 - 1);
        uint64_t worst = 0;
        for (int i = 0; i < 2000; ++i) {
            uint64_t probes = 0;
            const FdeEntry* e = table.lookup(dist(rng), &probes);
            REQUIRE(e != nullptr);
            worst = std::max(worst, probes);
        }
        CHECK(worst <= bound);
        // Misses (outside all ranges) also respect the bound.
        uint64_t probes = 0;
        CHECK(table.lookup(0x10, &probes) == nullptr);
        CHECK(probes <= bound);
    }
}

TEST_CASE("fde compilation rejects overlapping ranges") {
    BinarySpec spec;
    spec.label = "overlap";
    spec.code_size = 0x2000;
    FunctionDef f;
    f.name = "f";
    f.offset = 0x1000;
    f.length = 64;
    f.cfi.push_back({0x1000, 0x1030, CfiRule::Kind::Simple, CfaBase::SP, 32});
    f.cfi.push_back({0x1020, 0x1040, CfiRule::Kind::Simple, CfaBase::SP, 32});
    spec.functions = {f};
    // The overlap is caught at spec validation or at compile time; either
    // way it cannot produce a table.
    try {
        VirtualBinary bin = build_binary(spec);
        CHECK_THROWS_AS(compile_fde_table(bin), Error);
    } catch (const Error&) {
        CHECK(true);
    }
}

TEST_CASE("fp unwinding walks the saved-FP chain at 2 reads per frame") {
    auto bin = make_binary("lib", {{"f"}, {"g", FpConvention::Preserves, 48},
                                   {"h", FpConvention::Preserves, 64}});
    GroundTruthStack chain = chain_of(*bin, {0, 1, 2});
    VirtualProcess p = make_process(bin, chain);
    TableSet tables = compile_tables(p);

    UnwindResult r = unwind_single(p, p.threads()[0].registers,
                                   UnwindMode::FpOnly, tables);
    CHECK(r.frames == chain.frames);
    CHECK(r.termination == Termination::Completed);  // root RA = 0
    CHECK(r.cost.stack_reads == 2 * r.frames.size());
    CHECK(r.cost.table_probes == 0);
    CHECK(r.cost.frames_fp == 3);
}

TEST_CASE("dwarf unwinding recovers frames the FP chain loses") {
    auto bin = make_binary("lib", {{"leaf", FpConvention::Preserves, 32},
                                   {"mid", FpConvention::Omits, 48},
                                   {"root", FpConvention::Preserves, 64}});
    GroundTruthStack chain = chain_of(*bin, {0, 1, 2});
    VirtualProcess p = make_process(bin, chain);
    TableSet tables = compile_tables(p);

    UnwindResult dwarf = unwind_single(p, p.threads()[0].registers,
                                       UnwindMode::DwarfOnly, tables);
    CHECK(dwarf.frames == chain.frames);
    CHECK(dwarf.cost.stack_reads == dwarf.frames.size());  // 1 read per Simple frame

    UnwindResult fp = unwind_single(p, p.threads()[0].registers,
                                    UnwindMode::FpOnly, tables);
    CHECK(frame_accuracy(fp.frames, chain) < 1.0);
    CHECK(frame_accuracy(dwarf.frames, chain) == 1.0);
}

TEST_CASE("indirect CFI rules cost one extra stack read") {
    auto simple = make_binary("s", {{"f", FpConvention::Omits, 32},
                                    {"g", FpConvention::Preserves, 48}});
    auto indirect = make_binary("i", {{"f", FpConvention::Omits, 32,
                                       CfiRule::Kind::Indirect},
                                      {"g", FpConvention::Preserves, 48}});
    for (bool use_indirect : {false, true}) {
        auto bin = use_indirect ? indirect : simple;
        GroundTruthStack chain = chain_of(*bin, {0, 1});
        VirtualProcess p = make_process(bin, chain);
        TableSet tables = compile_tables(p);
        UnwindResult r = unwind_single(p, p.threads()[0].registers,
                                       UnwindMode::DwarfOnly, tables);
        CHECK(r.frames == chain.frames);
        // Simple: 1 RA read per frame. Indirect leaf adds one CFA load.
        CHECK(r.cost.stack_reads == (use_indirect ? 3 : 2));
    }
}

TEST_CASE("validation requires executable pc and upward sp progress") {
    auto bin = make_binary("lib", {{"f"}});
    GroundTruthStack chain = chain_of(*bin, {0});
    VirtualProcess p = make_process(bin, chain);
    uint64_t code = 0x400000 + 0x1008;
    CHECK(validate_caller_pc(code, 2000, 1000, p));
    CHECK(validate_caller_pc(0, 2000, 1000, p));              // end-of-chain sentinel
    CHECK_FALSE(validate_caller_pc(0x999999, 2000, 1000, p)); // pc not mapped
    CHECK_FALSE(validate_caller_pc(code, 1000, 1000, p));     // no progress
    CHECK_FALSE(validate_caller_pc(code, 500, 1000, p));      // downward
    CHECK_FALSE(validate_caller_pc(0, 500, 1000, p));         // sentinel needs progress
}

TEST_CASE("hybrid walk marks by convention and converges") {
    // Omits frames sit root-side so their FP registers hold junk, which
    // the validation step catches and reroutes to dwarf.
    auto bin = make_binary("lib", {{"leaf", FpConvention::Preserves, 32},
                                   {"mid", FpConvention::Omits, 48},
                                   {"root", FpConvention::Omits, 64}});
    GroundTruthStack chain = chain_of(*bin, {0, 1, 2});
    VirtualProcess p = make_process(bin, chain);
    TableSet tables = compile_tables(p);
    MarkerMap markers;
    markers.register_binary(*bin);

    UnwindResult first = unwind_hybrid(p, p.threads()[0].registers, markers, tables);
    CHECK(first.frames == chain.frames);
    CHECK(first.cost.unmarked_branches == 3);
    CHECK(first.cost.validations == 3);
    CHECK(first.methods[0] == Marker::Fp);
    CHECK(first.methods[1] == Marker::Dwarf);
    CHECK(first.methods[2] == Marker::Dwarf);

    // Markers persist per function start offset.
    CHECK(markers.get(bin->build_id(), bin->functions()[0].offset) == Marker::Fp);
    CHECK(markers.get(bin->build_id(), bin->functions()[1].offset) == Marker::Dwarf);
    CHECK(markers.marked_count() == 3);
    CHECK(markers.dwarf_count() == 2);

    UnwindResult second = unwind_hybrid(p, p.threads()[0].registers, markers, tables);
    CHECK(second.frames == chain.frames);
    CHECK(second.cost.unmarked_branches == 0);
    CHECK(second.cost.validations == 0);
    // Steady state: fp frames cost exactly the fp-only price.
    CHECK(second.cost.reads_fp_frames == 2 * second.cost.frames_fp);
}

TEST_CASE("a preserves-FP root marks Fp via the end-of-chain sentinel") {
    auto bin = make_binary("lib", {{"leaf", FpConvention::Preserves, 32},
                                   {"root", FpConvention::Preserves, 64}});
    GroundTruthStack chain = chain_of(*bin, {0, 1});
    VirtualProcess p = make_process(bin, chain);
    TableSet tables = compile_tables(p);
    MarkerMap markers;
    markers.register_binary(*bin);

    // The root's FP step yields pc' = 0 with upward sp: the conventional
    // end-of-chain sentinel, which validation accepts, so the root marks
    // Fp and the walk completes with the full chain.
    UnwindResult r = unwind_hybrid(p, p.threads()[0].registers, markers, tables);
    CHECK(r.frames == chain.frames);
    CHECK(r.termination == Termination::Completed);
    CHECK(r.methods[1] == Marker::Fp);
    CHECK(markers.dwarf_count() == 0);
}

TEST_CASE("marker writes are set-once, first writer wins") {
    auto bin = make_binary("lib", {{"f"}});
    MarkerMap markers;
    markers.register_binary(*bin);
    uint64_t key = bin->functions()[0].offset;
    CHECK(markers.mark(bin->build_id(), key, Marker::Dwarf) == Marker::Dwarf);
    CHECK(markers.mark(bin->build_id(), key, Marker::Fp) == Marker::Dwarf);
    CHECK(markers.get(bin->build_id(), key) == Marker::Dwarf);

    // Unregistered binaries fall back to the keyed side map.
    auto other = make_binary("other", {{"x"}});
    CHECK(markers.get(other->build_id(), 0x1000) == Marker::Unmarked);
    CHECK(markers.mark(other->build_id(), 0x1000, Marker::Fp) == Marker::Fp);
    CHECK(markers.mark(other->build_id(), 0x1000, Marker::Dwarf) == Marker::Fp);
    CHECK(markers.marked_count() == 2);
}

TEST_CASE("a stale FP silently skips frames yet passes validation") {
    // Known hazard the validation step cannot catch: the leaf omits FP but
    // the register still points at an enclosing frame, so the FP step
    // produces a plausible (executable, upward) caller and the middle
    // frame is lost.
    auto bin = make_binary("lib", {{"leaf", FpConvention::Omits, 32},
                                   {"mid", FpConvention::Preserves, 48},
                                   {"root", FpConvention::Preserves, 64}});
    GroundTruthStack chain = chain_of(*bin, {0, 1, 2});
    VirtualProcess p = make_process(bin, chain, ClobberMode::StaleFp);
    TableSet tables = compile_tables(p);
    MarkerMap markers;
    markers.register_binary(*bin);

    UnwindResult r = unwind_hybrid(p, p.threads()[0].registers, markers, tables);
    CHECK(markers.get(bin->build_id(), bin->functions()[0].offset) == Marker::Fp);
    REQUIRE(r.frames.size() == 2);
    CHECK(r.frames[0] == chain.frames[0]);
    CHECK(r.frames[1] == chain.frames[2]);  // `mid` was skipped
    CHECK(frame_accuracy(r.frames, chain) == doctest::Approx(1.0 / 3.0));

    // A garbage FP, by contrast, fails validation and reroutes to DWARF.
    VirtualProcess pg = make_process(bin, chain, ClobberMode::GarbageFp);
    MarkerMap mg;
    mg.register_binary(*bin);
    UnwindResult rg = unwind_hybrid(pg, pg.threads()[0].registers, mg,
                                    compile_tables(pg));
    CHECK(rg.frames == chain.frames);
    CHECK(mg.get(bin->build_id(), bin->functions()[0].offset) == Marker::Dwarf);
}

TEST_CASE("a stale FP pointing at the root truncates via the sentinel") {
    // Variant of the stale-FP hazard: when the omits frame's inherited FP
    // points at the outermost frame, the FP step reads that frame's zero
    // return address with upward sp, which looks exactly like the
    // end-of-chain sentinel. The walk marks Fp and stops one frame early.
    auto bin = make_binary("lib", {{"leaf", FpConvention::Preserves, 32},
                                   {"mid", FpConvention::Omits, 48},
                                   {"root", FpConvention::Preserves, 64}});
    GroundTruthStack chain = chain_of(*bin, {0, 1, 2});
    VirtualProcess p = make_process(bin, chain);
    TableSet tables = compile_tables(p);
    MarkerMap markers;
    markers.register_binary(*bin);

    UnwindResult r = unwind_hybrid(p, p.threads()[0].registers, markers, tables);
    REQUIRE(r.frames.size() == 2);
    CHECK(r.frames[0] == chain.frames[0]);
    CHECK(r.frames[1] == chain.frames[1]);  // root lost
    CHECK(r.termination == Termination::Completed);
    CHECK(markers.get(bin->build_id(), bin->functions()[1].offset) == Marker::Fp);
    CHECK(frame_accuracy(r.frames, chain) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("max frame budget terminates deep walks") {
    std::vector<FnSpec> fns{{"rec", FpConvention::Preserves, 32}};
    auto bin = make_binary("deep", fns);
    GroundTruthStack chain;
    for (int i = 0; i < 40; ++i) chain.frames.push_back({bin->build_id(), 0x1008});
    VirtualProcess p = make_process(bin, chain);
    TableSet tables = compile_tables(p);
    UnwindConfig config;
    config.max_frames = 16;
    UnwindResult r = unwind_single(p, p.threads()[0].registers,
                                   UnwindMode::FpOnly, tables, config);
    CHECK(r.termination == Termination::MaxFrames);
    CHECK(r.frames.size() == 16);
}

TEST_CASE("frame accuracy is leaf-anchored and positional") {
    auto bin = make_binary("lib", {{"a"}, {"b"}, {"c"}, {"d"}});
    GroundTruthStack truth = chain_of(*bin, {0, 1, 2, 3});
    CHECK(frame_accuracy(truth.frames, truth) == 1.0);
    CHECK(frame_accuracy({}, truth) == 0.0);
    // Matching prefix of 2 over depth 4.
    std::vector<FrameRef> half{truth.frames[0], truth.frames[1]};
    CHECK(frame_accuracy(half, truth) == 0.5);
    // A skip misaligns every later frame.
    std::vector<FrameRef> skipped{truth.frames[0], truth.frames[2],
                                  truth.frames[3]};
    CHECK(frame_accuracy(skipped, truth) == 0.25);
}

TEST_CASE("corpus evaluation: hybrid exact, fp-only degraded, dwarf floor") {
    UnwindCorpusParams params;
    params.samples = 400;
    params.seed = 7;
    UnwindCorpus corpus = generate_unwind_corpus(params);
    CHECK(corpus.omit_fraction == doctest::Approx(0.2));

    EvalReport report = evaluate_corpus(corpus.samples, corpus.omit_fraction);
    CHECK(report.hybrid_first_pass.mean_accuracy == 1.0);
    CHECK(report.hybrid_steady.mean_accuracy == 1.0);
    CHECK(report.dwarf_only.mean_accuracy == 1.0);
    CHECK(report.fp_only.mean_accuracy < 0.5);
    CHECK(report.fp_only.mean_accuracy > 0.0);

    // Second pass touched no unmarked functions and ran no validations.
    CHECK(report.hybrid_steady.cost.unmarked_branches == 0);
    CHECK(report.hybrid_steady.cost.validations == 0);
    // Marker census equals the corpus's function census.
    CHECK(report.marker_keys == 100);
    CHECK(double(report.dwarf_keys) / double(report.marker_keys) ==
          doctest::Approx(corpus.omit_fraction));
    // Cost ordering: dwarf-only pays at least the hybrid price.
    CHECK(report.dwarf_only.accesses_per_frame() >=
          report.hybrid_steady.accesses_per_frame());
}

TEST_CASE("fp-only accuracy degrades monotonically with omitted FPs") {
    double prev = 2.0;
    for (double omit : {0.0, 0.2, 0.5}) {
        UnwindCorpusParams params;
        params.samples = 400;
        params.omit_fraction = omit;
        params.seed = 11;
        UnwindCorpus corpus = generate_unwind_corpus(params);
        EvalReport report = evaluate_corpus(corpus.samples, corpus.omit_fraction);
        CHECK(report.hybrid_first_pass.mean_accuracy == 1.0);
        CHECK(report.fp_only.mean_accuracy < prev);
        prev = report.fp_only.mean_accuracy;
        if (omit == 0.0) CHECK(report.fp_only.mean_accuracy == 1.0);
    }
}

TEST_CASE("stitching splices interpreter frames into eval runs") {
    auto bin = make_binary("py", {{"eval", FpConvention::Preserves, 32},
                                  {"native", FpConvention::Preserves, 48},
                                  {"main", FpConvention::Preserves, 64}});
    // eval <- eval <- native <- main (two interpreter activations hosted
    // by the leaf-side eval run).
    GroundTruthStack chain = chain_of(*bin, {0, 0, 1, 2});
    VirtualProcess p = make_process(bin, chain);
    TableSet tables = compile_tables(p);
    UnwindResult native = unwind_single(p, p.threads()[0].registers,
                                        UnwindMode::FpOnly, tables);
    REQUIRE(native.frames.size() == 4);

    EvalFunctionSet evals{{bin->build_id(), bin->functions()[0].offset}};
    std::vector<InterpreterFrame> interp{
        {"train.py:step", 10, native.frame_sp[0]},
        {"train.py:loop", 42, native.frame_sp[1]},
        {"orphan.py:misc", 1, native.frame_sp[3] + 4096},
    };
    UnifiedStack out = stitch_stacks(p, native, interp, evals);
    REQUIRE(out.size() == 5);
    CHECK(out[0].kind == UnifiedFrame::Kind::Interpreted);
    CHECK(out[0].code_name == "train.py:step");
    CHECK(out[1].code_name == "train.py:loop");
    CHECK(out[2].kind == UnifiedFrame::Kind::Native);
    CHECK(out[2].native == chain.frames[2]);
    CHECK(out[3].native == chain.frames[3]);
    CHECK(out[4].kind == UnifiedFrame::Kind::Orphan);
    CHECK(out[4].code_name == "orphan.py:misc");

    // join_sp ordering is validated.
    std::vector<InterpreterFrame> bad{{"a", 1, 100}, {"b", 2, 100}};
    CHECK_THROWS_AS(stitch_stacks(p, native, bad, evals), Error);
}

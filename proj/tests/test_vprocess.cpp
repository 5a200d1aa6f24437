#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "helpers.hpp"

using namespace strata;
using testutil::FnSpec;
using testutil::chain_of;
using testutil::make_binary;

TEST_CASE("build id is a deterministic content digest") {
    auto a = make_binary("lib", {{"f"}, {"g"}});
    auto b = make_binary("lib", {{"f"}, {"g"}});
    auto c = make_binary("lib2", {{"f"}, {"g"}});
    CHECK(a->build_id() == b->build_id());
    CHECK_FALSE(a->build_id() == c->build_id());
    CHECK(a->build_id().hex().size() == 40);
    CHECK(BuildId::from_hex(a->build_id().hex()) == a->build_id());
}

TEST_CASE("build_binary rejects malformed specs") {
    BinarySpec spec;
    spec.label = "bad";
    spec.code_size = 0x2000;

    SUBCASE("overlapping functions") {
        FunctionDef f;
        f.name = "f";
        f.offset = 0x1000;
        f.length = 64;
        f.cfi.push_back({0x1000, 0x1040, CfiRule::Kind::Simple, CfaBase::SP, 32});
        FunctionDef g = f;
        g.name = "g";
        g.offset = 0x1020;
        g.cfi = {{0x1020, 0x1060, CfiRule::Kind::Simple, CfaBase::SP, 32}};
        spec.functions = {f, g};
        CHECK_THROWS_AS(build_binary(spec), Error);
    }
    SUBCASE("incomplete CFI coverage") {
        FunctionDef f;
        f.name = "f";
        f.offset = 0x1000;
        f.length = 64;
        f.cfi.push_back({0x1000, 0x1020, CfiRule::Kind::Simple, CfaBase::SP, 32});
        spec.functions = {f};
        CHECK_THROWS_AS(build_binary(spec), Error);
    }
}

TEST_CASE("function and CFI lookup by offset") {
    auto bin = make_binary("lib", {{"f"}, {"g"}});
    CHECK(bin->function_at(0x1000)->name == "f");
    CHECK(bin->function_at(0x103f)->name == "f");
    CHECK(bin->function_at(0x1040)->name == "g");
    CHECK(bin->function_at(0x0fff) == nullptr);
    CHECK(bin->function_at(0x1080) == nullptr);
    CHECK(bin->cfi_at(0x1041)->pc_start == 0x1040);
}

TEST_CASE("binary JSON round trip preserves identity") {
    auto bin = make_binary("lib", {{"f", FpConvention::Omits, 48,
                                    CfiRule::Kind::Indirect},
                                   {"g"}});
    VirtualBinary back = VirtualBinary::from_json(bin->to_json());
    CHECK(back.build_id() == bin->build_id());
    CHECK(back.functions().size() == 2);
    CHECK(back.functions()[0].fp_convention == FpConvention::Omits);
    CHECK(back.functions()[0].cfi[0].kind == CfiRule::Kind::Indirect);
    CHECK(back.to_json() == bin->to_json());
}

TEST_CASE("mapping validation and address resolution") {
    auto bin = make_binary("lib", {{"f"}});
    VirtualProcess p;
    CHECK_THROWS_AS(p.map_binary(bin, 0x400001), Error);  // unaligned
    p.map_binary(bin, 0x400000);
    CHECK_THROWS_AS(p.map_binary(bin, 0x400000), Error);  // overlap

    auto frame = p.resolve_address(0x400000 + 0x1008);
    REQUIRE(frame.has_value());
    CHECK(frame->build_id == bin->build_id());
    CHECK(frame->offset == 0x1008);
    CHECK(p.frame_address({bin->build_id(), 0x1008}) == 0x400000 + 0x1008);
    CHECK(p.in_executable_region(0x400000));
    CHECK_FALSE(p.in_executable_region(0x300000));
}

TEST_CASE("stack memory access is bounds checked") {
    auto bin = make_binary("lib", {{"f"}});
    VirtualProcess p;
    p.map_binary(bin, 0x400000);
    p.add_thread(synthesize_stack_image(p, chain_of(*bin, {0}),
                                        ClobberMode::GarbageFp,
                                        0x7f0000000000ull, 1 << 16));
    uint64_t base = 0x7f0000000000ull;
    CHECK(p.write_u64(base + 512, 0xdeadbeefULL));
    CHECK(p.read_u64(base + 512) == 0xdeadbeefULL);
    CHECK_FALSE(p.read_u64(base - 8).has_value());
    CHECK_FALSE(p.read_u64(base + (1 << 16)).has_value());
    CHECK_FALSE(p.read_u64(base + (1 << 16) - 4).has_value());  // straddles end
}

TEST_CASE("synthesized image lays frames out by the CFA chain") {
    // Leaf-first chain: f (leaf, 32) <- g (48) <- h (root, 64), all preserve FP.
    auto bin = make_binary("lib", {{"f", FpConvention::Preserves, 32},
                                   {"g", FpConvention::Preserves, 48},
                                   {"h", FpConvention::Preserves, 64}});
    VirtualProcess p;
    p.map_binary(bin, 0x400000);
    GroundTruthStack chain = chain_of(*bin, {0, 1, 2});
    ThreadImage img = synthesize_stack_image(p, chain, ClobberMode::GarbageFp,
                                             0x7f0000000000ull, 1 << 16);
    p.add_thread(img);

    // Oracle: top CFA = (base + len - 64) rounded down to 16.
    uint64_t cfa_h = (0x7f0000000000ull + (1 << 16) - 64) & ~uint64_t(15);
    uint64_t cfa_g = cfa_h - 64;   // minus h's frame size
    uint64_t cfa_f = cfa_g - 48;   // minus g's frame size
    CHECK(img.registers.pc == 0x400000 + 0x1008);
    CHECK(img.registers.sp == cfa_f - 32);
    CHECK(img.registers.fp == cfa_f - 16);

    // Return addresses at CFA-8: f returns into g, g into h, h into 0.
    CHECK(p.read_u64(cfa_f - 8) == 0x400000 + 0x1048);
    CHECK(p.read_u64(cfa_g - 8) == 0x400000 + 0x1088);
    CHECK(p.read_u64(cfa_h - 8) == 0);

    // Saved-FP chain: [FP_f] = FP_g, [FP_g] = FP_h, [FP_h] = junk.
    CHECK(p.read_u64(cfa_f - 16) == cfa_g - 16);
    CHECK(p.read_u64(cfa_g - 16) == cfa_h - 16);
    CHECK(p.read_u64(cfa_h - 16) == 0x7f0000000000ull + 256);
}

TEST_CASE("leaf FP register honors the clobber mode") {
    auto bin = make_binary("lib", {{"leaf", FpConvention::Omits, 32},
                                   {"mid", FpConvention::Preserves, 48},
                                   {"root", FpConvention::Omits, 64}});
    VirtualProcess p;
    p.map_binary(bin, 0x400000);
    GroundTruthStack chain = chain_of(*bin, {0, 1, 2});

    ThreadImage garbage = synthesize_stack_image(p, chain, ClobberMode::GarbageFp);
    CHECK(garbage.registers.fp == 0x7f0000000000ull + 256);

    ThreadImage stale = synthesize_stack_image(p, chain, ClobberMode::StaleFp);
    // Nearest enclosing preserves-FP frame is `mid`; its FP is its CFA-16.
    uint64_t top = (0x7f0000000000ull + (1 << 20) - 64) & ~uint64_t(15);
    uint64_t cfa_mid = top - 64;  // root frame size
    CHECK(stale.registers.fp == cfa_mid - 16);
}

TEST_CASE("synthesize rejects invalid chains") {
    auto bin = make_binary("lib", {{"f"}});
    auto other = make_binary("other", {{"x"}});
    VirtualProcess p;
    p.map_binary(bin, 0x400000);
    CHECK_THROWS_AS(synthesize_stack_image(p, GroundTruthStack{}), Error);
    GroundTruthStack unmapped;
    unmapped.frames.push_back({other->build_id(), 0x1008});
    CHECK_THROWS_AS(synthesize_stack_image(p, unmapped), Error);
    GroundTruthStack outside;
    outside.frames.push_back({bin->build_id(), 0x5000});
    CHECK_THROWS_AS(synthesize_stack_image(p, outside), Error);
    // A chain too deep for a tiny stack image must be rejected, not wrapped.
    GroundTruthStack deep;
    for (int i = 0; i < 300; ++i) deep.frames.push_back({bin->build_id(), 0x1008});
    CHECK_THROWS_AS(
        synthesize_stack_image(p, deep, ClobberMode::GarbageFp,
                               0x7f0000000000ull, 1 << 13),
        Error);
}

TEST_CASE("indirect CFI rules get their load cell populated") {
    auto bin = make_binary("lib", {{"f", FpConvention::Omits, 32,
                                    CfiRule::Kind::Indirect},
                                   {"g", FpConvention::Preserves, 48}});
    VirtualProcess p;
    p.map_binary(bin, 0x400000);
    ThreadImage img = synthesize_stack_image(p, chain_of(*bin, {0, 1}));
    p.add_thread(img);
    // Cell at SP + load_offset holds CFA - add_offset.
    uint64_t top = (0x7f0000000000ull + (1 << 20) - 64) & ~uint64_t(15);
    uint64_t cfa_f = top - 48;
    uint64_t sp_f = cfa_f - 32;
    CHECK(p.read_u64(sp_f + 8) == cfa_f - 16);
}

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "strata/unwinder.hpp"
#include "strata/vbin.hpp"
#include "strata/vprocess.hpp"

namespace testutil {

struct FnSpec {
    std::string name;
    strata::FpConvention fp = strata::FpConvention::Preserves;
    uint64_t frame_size = 32;
    strata::CfiRule::Kind kind = strata::CfiRule::Kind::Simple;
};

/// Functions laid out at 0x1000 + i*64, 64 bytes each, one Simple
/// SP+frame_size CFI rule per function (Indirect: SP-relative, load 8,
/// add 16 — matching the slot synthesize_stack_image fills).
inline std::shared_ptr<const strata::VirtualBinary> make_binary(
    const std::string& label, const std::vector<FnSpec>& fns) {
    strata::BinarySpec spec;
    spec.label = label;
    for (size_t i = 0; i < fns.size(); ++i) {
        strata::FunctionDef fn;
        fn.name = fns[i].name;
        fn.offset = 0x1000 + i * 64;
        fn.length = 64;
        fn.fp_convention = fns[i].fp;
        fn.frame_size = fns[i].frame_size;
        strata::CfiRule rule;
        rule.pc_start = fn.offset;
        rule.pc_end = fn.offset + 64;
        rule.kind = fns[i].kind;
        rule.base = strata::CfaBase::SP;
        if (rule.kind == strata::CfiRule::Kind::Simple) {
            rule.cfa_offset = int64_t(fn.frame_size);
        } else {
            rule.load_offset = 8;
            rule.add_offset = 16;
        }
        fn.cfi.push_back(rule);
        spec.functions.push_back(std::move(fn));
    }
    spec.code_size = 0x1000 + fns.size() * 64;
    return std::make_shared<strata::VirtualBinary>(strata::build_binary(spec));
}

/// Ground-truth chain referencing functions of `bin` by index, leaf first.
/// PC offsets land 8 bytes into each function body.
inline strata::GroundTruthStack chain_of(const strata::VirtualBinary& bin,
                                         const std::vector<size_t>& indices) {
    strata::GroundTruthStack chain;
    for (size_t i : indices)
        chain.frames.push_back(
            {bin.build_id(), bin.functions().at(i).offset + 8});
    return chain;
}

/// Process with `bin` mapped at 0x400000 and one synthesized thread for
/// the chain.
inline strata::VirtualProcess make_process(
    std::shared_ptr<const strata::VirtualBinary> bin,
    const strata::GroundTruthStack& chain,
    strata::ClobberMode clobber = strata::ClobberMode::GarbageFp) {
    strata::VirtualProcess p;
    p.map_binary(bin, 0x400000);
    p.add_thread(strata::synthesize_stack_image(p, chain, clobber,
                                                0x7f0000000000ull, 1 << 16));
    return p;
}

}  // namespace testutil

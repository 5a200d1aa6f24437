#include "strata/stitch.hpp"

#include <limits>

namespace strata {

UnifiedStack stitch_stacks(const VirtualProcess& process,
                           const UnwindResult& native,
                           const std::vector<InterpreterFrame>& chain,
                           const EvalFunctionSet& eval_functions) {
    for (size_t i = 1; i < chain.size(); ++i)
        if (chain[i].join_sp <= chain[i - 1].join_sp)
            throw Error("interpreter chain join_sp not strictly increasing");

    auto is_eval = [&](size_t i) {
        const FrameRef& f = native.frames[i];
        const VirtualBinary* bin = process.binary(f.build_id);
        if (!bin) return false;
        const FunctionDef* fn = bin->function_at(f.offset);
        if (!fn) return false;
        return eval_functions.count({f.build_id, fn->offset}) > 0;
    };

    UnifiedStack out;
    std::vector<bool> consumed(chain.size(), false);
    const size_t n = native.frames.size();
    size_t i = 0;
    while (i < n) {
        if (!is_eval(i)) {
            out.push_back({UnifiedFrame::Kind::Native, native.frames[i], "", 0});
            ++i;
            continue;
        }
        size_t j = i;
        while (j < n && is_eval(j)) ++j;  // run is [i, j)
        uint64_t lo = native.frame_sp[i];
        uint64_t hi = j < n ? native.frame_sp[j]
                            : std::numeric_limits<uint64_t>::max();
        for (size_t k = 0; k < chain.size(); ++k) {
            if (!consumed[k] && chain[k].join_sp >= lo && chain[k].join_sp < hi) {
                out.push_back({UnifiedFrame::Kind::Interpreted, {},
                               chain[k].code_name, chain[k].line});
                consumed[k] = true;
            }
        }
        i = j;
    }
    for (size_t k = 0; k < chain.size(); ++k)
        if (!consumed[k])
            out.push_back({UnifiedFrame::Kind::Orphan, {}, chain[k].code_name,
                           chain[k].line});
    return out;
}

}  // namespace strata

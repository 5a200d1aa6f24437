#pragma once

#include <set>
#include <string>
#include <vector>

#include "strata/unwinder.hpp"

namespace strata {

struct UnifiedFrame {
    enum class Kind : uint8_t { Native, Interpreted, Orphan };
    Kind kind = Kind::Native;
    FrameRef native;        // Native
    std::string code_name;  // Interpreted / Orphan
    int line = 0;
};

using UnifiedStack = std::vector<UnifiedFrame>;

/// Function identities (build id + function start offset) whose native
/// frames host interpreter activations.
using EvalFunctionSet = std::set<std::pair<BuildId, uint64_t>>;

/// Replaces each maximal run of native eval frames with the interpreter
/// frames whose join_sp falls inside that run's SP interval, leaf first.
/// Interpreter frames matching no run are kept as orphan annotations.
UnifiedStack stitch_stacks(const VirtualProcess& process,
                           const UnwindResult& native,
                           const std::vector<InterpreterFrame>& chain,
                           const EvalFunctionSet& eval_functions);

}  // namespace strata

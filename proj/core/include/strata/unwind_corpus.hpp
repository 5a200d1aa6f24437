#pragma once

#include <memory>

#include "strata/eval.hpp"

namespace strata {

struct UnwindCorpusParams {
    size_t function_count = 100;     // per generated binary
    double omit_fraction = 0.20;     // omits-FP share of functions
    double indirect_fraction = 0.0;  // Indirect-CFI share of omits functions
    double mean_depth = 25.0;        // geometric, capped
    size_t max_depth = 120;
    size_t samples = 10'000;
    ClobberMode clobber = ClobberMode::GarbageFp;
    uint64_t seed = 1;
};

struct UnwindCorpus {
    std::shared_ptr<const VirtualBinary> binary;
    std::vector<CorpusSample> samples;
    double omit_fraction = 0.0;  // realized (count-exact) fraction
};

/// Deterministic corpus of stack images with ground truth. Chains are a
/// leaf-side run of preserves-FP functions followed by a root-side run of
/// omits-FP functions, so FP stepping is genuinely correct exactly where
/// frame pointers exist and genuinely fails at the first omitted frame.
/// Every function of the binary appears in at least one chain.
UnwindCorpus generate_unwind_corpus(const UnwindCorpusParams& params);

/// Binary + single-frame sample stacks for the symbol misattribution
/// experiment: `hot_functions` equally hot functions sit in a large gap
/// above one absorber function; the sparse table knows only the absorber.
struct MisattributionCorpus {
    std::shared_ptr<const VirtualBinary> binary;
    std::vector<std::vector<FrameRef>> stacks;  // one frame each
};

MisattributionCorpus generate_misattribution_corpus(size_t hot_functions = 12,
                                                    size_t samples_per_function = 100,
                                                    uint64_t seed = 1);

}  // namespace strata

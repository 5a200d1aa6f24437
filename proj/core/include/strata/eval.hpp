#pragma once

#include <string>
#include <vector>

#include "strata/unwinder.hpp"

namespace strata {

/// One profiled thread image with its ground truth.
struct CorpusSample {
    VirtualProcess process;  // shares binaries with its siblings
    GroundTruthStack truth;
};

/// Leaf-anchored positional match fraction against the ground truth.
double frame_accuracy(const std::vector<FrameRef>& produced,
                      const GroundTruthStack& truth);

struct ModeEval {
    UnwindMode mode = UnwindMode::Hybrid;
    std::vector<double> accuracies;  // per sample
    double mean_accuracy = 0.0;
    CostCounters cost;
    uint64_t total_frames = 0;

    double reads_per_frame() const;
    double probes_per_frame() const;
    double accesses_per_frame() const;
};

/// Runs one mode over the corpus. For hybrid, the provided MarkerMap
/// persists across samples (and across repeated calls, which is how the
/// steady state is measured).
ModeEval unwind_corpus_eval(const std::vector<CorpusSample>& corpus,
                            UnwindMode mode, const TableSet& tables,
                            MarkerMap* markers = nullptr,
                            const UnwindConfig& config = {});

struct EvalReport {
    ModeEval fp_only;
    ModeEval dwarf_only;
    ModeEval hybrid_first_pass;
    ModeEval hybrid_steady;
    size_t marker_keys = 0;
    size_t dwarf_keys = 0;
    double omit_function_fraction = 0.0;  // from the corpus generator

    std::string to_text() const;
    std::string to_json() const;
};

/// Full evaluation harness: fp-only, dwarf-only, and two hybrid passes
/// over a shared MarkerMap.
EvalReport evaluate_corpus(const std::vector<CorpusSample>& corpus,
                           double omit_function_fraction,
                           const UnwindConfig& config = {});

}  // namespace strata

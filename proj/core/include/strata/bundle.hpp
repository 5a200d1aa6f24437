#pragma once

#include <filesystem>

#include "strata/scenario.hpp"
#include "strata/symrepo.hpp"

namespace strata {

/// Serializes a simulation result to the on-disk bundle layout:
/// meta.json, samples.jsonl, gpu_events.jsonl, collectives.jsonl,
/// os_counters.jsonl, binaries/*.json, symbols/<2-hex>/<id>.symr,
/// labels.json. Deterministic byte-for-byte for a given result.
void write_bundle(const SimulationResult& result,
                  const std::filesystem::path& dir);

/// Digest over every file in the bundle (paths and contents), used to
/// check bit-identical regeneration.
BuildId bundle_digest(const std::filesystem::path& dir);

/// Parsed bundle. Labels are carried separately so analysis code cannot
/// accidentally consume ground truth.
struct LoadedBundle {
    std::string scenario;
    uint64_t seed = 0;
    int ranks = 0;
    int group = 0;
    std::vector<int> group_ranks;
    int64_t max_skew_ns = 50'000'000;

    std::map<int, std::vector<StackSample>> samples;
    std::vector<CollectiveEvent> collectives;
    std::vector<GpuEvent> gpu_events;
    std::vector<OsCounterRecord> os_counters;

    int64_t window_start_ns = 0;
    int64_t window_end_ns = 0;
    BaselineProfile baseline;
    double baseline_iteration_ms = 0.0;

    std::filesystem::path dir;  // for the symbol repository
};

LoadedBundle load_bundle(const std::filesystem::path& dir);

GroundTruthLabel load_labels(const std::filesystem::path& dir);

/// Assembles diagnosis inputs from a bundle: matches collectives, aligns
/// clocks, windows every stream, and symbolizes CPU profiles through the
/// bundle's symbol repository (exact-range).
GroupData build_group_data(const LoadedBundle& bundle,
                           const DiagnosisConfig& config = {});

}  // namespace strata

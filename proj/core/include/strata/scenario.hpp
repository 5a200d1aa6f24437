#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "strata/collective.hpp"
#include "strata/diagnosis.hpp"
#include "strata/samples.hpp"
#include "strata/vbin.hpp"

namespace strata {

enum class Scenario : uint8_t {
    Healthy,
    Thermal,       // uniform GPU slowdown on one rank
    Softirq,       // network softirq storm on one rank's NCCL core
    DentryLock,    // dentry spinlock contention on one rank
    Logging,       // new logging hot path on every rank
    IoBottleneck,  // shared-filesystem slowdown on every rank
};

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

struct ScenarioSpec {
    Scenario scenario = Scenario::Healthy;
    uint64_t seed = 1;
    int ranks = 8;
    int iterations = 300;
    double sample_rate_hz = 99.0;

    // Iteration skeleton (ns) and noise.
    int64_t forward_ns = 8'000'000;
    int64_t backward_ns = 10'000'000;
    int64_t collective_ns = 6'000'000;
    int64_t optimizer_ns = 2'000'000;
    double phase_noise_sigma = 0.01;  // lognormal, mean-one

    // Fault injection.
    std::vector<int> target_ranks;  // scenario default when empty
    double magnitude = 0.0;         // scenario default when 0
    int onset_iteration = 0;
    int64_t entry_delay_ns = 0;     // extra pre-collective delay on targets
    double slowdown_factor = 1.0;   // uniform compute multiplier on targets

    // Clock model.
    int64_t max_clock_skew_ns = 10'000'000;  // per-rank skew drawn in +/- this
    int64_t exit_jitter_ns = 50'000;         // barrier-exit jitter bound

    int analysis_window_iterations = 100;

    int64_t iteration_base_ns() const {
        return forward_ns + backward_ns + collective_ns + optimizer_ns;
    }
};

/// Fills scenario-specific defaults (targets, magnitude, onset, delay)
/// for fields left at their zero values.
ScenarioSpec default_spec(Scenario scenario, uint64_t seed);

struct GroundTruthLabel {
    Verdict expected_verdict = Verdict::Healthy;
    std::vector<int> affected_ranks;
    std::vector<std::string> injected_path;  // root first; empty for gpu/healthy
    int onset_iteration = 0;
};

struct GpuEvent {
    int rank = 0;
    int iteration = 0;
    std::string kernel;
    int64_t start_ns = 0;  // rank clock
    int64_t duration_ns = 0;
};

struct OsCounterRecord {
    int rank = 0;
    int64_t window_start_ns = 0;  // rank clock, 5 s windows
    OsSnapshot snapshot;
};

/// Everything generate() produces, before serialization to a bundle.
struct SimulationResult {
    ScenarioSpec spec;
    GroundTruthLabel label;

    std::vector<std::shared_ptr<const VirtualBinary>> binaries;
    std::map<int, std::vector<StackSample>> samples;  // rank -> stream
    std::vector<CollectiveEvent> collectives;
    std::vector<GpuEvent> gpu_events;
    std::vector<OsCounterRecord> os_counters;

    // Analysis metadata (true-time window; clocks are aligned by the
    // consumer before applying it).
    int64_t window_start_ns = 0;
    int64_t window_end_ns = 0;
    BaselineProfile baseline;
    double baseline_iteration_ms = 0.0;

    std::map<int, int64_t> injected_skew_ns;  // ground truth, labels only
};

/// Deterministic per (spec, seed): identical specs produce identical
/// results, bit for bit.
SimulationResult simulate(const ScenarioSpec& spec);

}  // namespace strata

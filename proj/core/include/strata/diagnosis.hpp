#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strata/collective.hpp"
#include "strata/folded.hpp"

namespace strata {

// ---------------------------------------------------------------------------
// Waterline (cross-rank baseline)

struct Waterline {
    int group = 0;
    int window_iterations = 100;
    double k = 2.0;
    struct Stat {
        double mean = 0.0;
        double stddev = 0.0;  // population
    };
    std::map<std::string, Stat> functions;  // name -> cross-rank stats
};

/// Arithmetic mean and population standard deviation of per-rank inclusive
/// fractions, computed over all ranks at once. Requires >= 2 ranks.
Waterline compute_waterline(const std::map<int, FoldedProfile>& per_rank,
                            int group, int window_iterations = 100,
                            double k = 2.0);

struct FlaggedFunction {
    int rank = 0;
    std::string function;
    double fraction = 0.0;
    double threshold = 0.0;  // mean + k * stddev
};

/// (rank, function) pairs with fraction strictly above mean + k*stddev.
std::vector<FlaggedFunction> flag_ranks(
    const Waterline& waterline, const std::map<int, FoldedProfile>& per_rank);

// ---------------------------------------------------------------------------
// Straggler detection

struct StragglerAlert {
    int rank = 0;
    int group = 0;
    double mean_lateness_ms = 0.0;
    double z_score = 0.0;
    size_t flagged_instances = 0;
    size_t window_instances = 0;
};

/// Per instance, a rank is flagged when its lateness exceeds the
/// cross-rank mean + k*sigma; an alert is emitted when a rank is flagged
/// in more than half of the window's instances.
std::vector<StragglerAlert> detect_straggler(
    const std::vector<std::map<int, double>>& lateness_per_instance, int group,
    double k = 2.0);

// ---------------------------------------------------------------------------
// Layer differentials

struct GpuProfile {
    std::map<std::string, int64_t> kernel_time_ns;  // kernel name -> total
    int64_t total_time_ns() const;
};

enum class GpuVerdict : uint8_t { None, Uniform, SpecificKernel };

struct GpuDiffResult {
    GpuVerdict verdict = GpuVerdict::None;
    std::map<std::string, double> slowdown;  // per-kernel (t_s / t_ref) - 1
    double median_slowdown = 0.0;
    double slowdown_cv = 0.0;        // coefficient of variation
    std::string top_kernel;          // largest added time
    double top_added_share = 0.0;    // its share of total added time
    bool data_insufficient = false;  // no common kernels
};

struct GpuDiffConfig {
    double median_uniform = 0.03;  // uniform if median slowdown above this
    double cv_uniform = 0.25;      // ...and CV below this
    double top_share_specific = 0.60;
    double median_none = 0.01;  // none if median at or below this
    int64_t ref_floor_ns = 1'000'000;
    // Communication kernels overlap with the collective timeline and are
    // excluded from the compute comparison.
    std::string exclude_prefix = "nccl";
};

GpuDiffResult gpu_diff(const GpuProfile& straggler, const GpuProfile& reference,
                       const GpuDiffConfig& config = {});

struct CpuPathDelta {
    std::string function;
    double straggler_fraction = 0.0;
    double reference_fraction = 0.0;
    double delta = 0.0;
    std::vector<std::string> hottest_path;  // root first, through function
};

/// Functions whose inclusive fraction exceeds the reference by more than
/// delta, each with its hottest stack path; sorted by delta descending.
std::vector<CpuPathDelta> cpu_diff(const FoldedProfile& straggler,
                                   const FoldedProfile& reference,
                                   double delta = 0.005);

struct OsSnapshot {
    std::map<std::string, int64_t> interrupts;  // per vector, per window
    std::map<std::string, int64_t> softirqs;    // per type, per window
    int64_t sched_delay_p50_ns = 0;
    int64_t sched_delay_p99_ns = 0;
    int64_t numa_migrations = 0;
};

struct OsCounterDelta {
    std::string counter;
    int64_t straggler = 0;
    int64_t reference = 0;
    double ratio = 0.0;  // infinity rendered as ratio=0 ref with flag
    bool unbounded = false;
};

struct OsDiffConfig {
    double min_ratio = 2.0;
    int64_t interrupt_floor = 1000;
    int64_t sched_delay_floor_ns = 1'000'000;  // 1 ms p99
    int64_t migration_floor = 100;
};

std::vector<OsCounterDelta> os_diff(const OsSnapshot& straggler,
                                    const OsSnapshot& reference,
                                    const OsDiffConfig& config = {});

struct BaselineProfile {
    int group = 0;
    std::string epoch;
    std::map<std::string, double> fractions;
    double delta = 0.005;
};

struct TemporalCandidate {
    std::string function;
    double now = 0.0;
    double baseline = 0.0;  // 0 for a new hot path
    double delta = 0.0;
};

/// One-sided: functions whose fraction grew by more than delta.
std::vector<TemporalCandidate> temporal_diff(const FoldedProfile& current,
                                             const BaselineProfile& baseline);

// ---------------------------------------------------------------------------
// Orchestration

enum class Verdict : uint8_t {
    Healthy,
    GpuUniformSlowdown,
    GpuSpecificKernel,
    CpuInterference,
    OsInterference,
    TemporalDegradation,
    Inconclusive,
};

std::string verdict_name(Verdict v);

struct EvidenceItem {
    std::string layer;  // "gpu", "cpu", "os", "temporal"
    std::string item;
    double straggler_value = 0.0;
    double reference_value = 0.0;
    double delta = 0.0;
};

struct DiagnosisReport {
    Verdict verdict = Verdict::Healthy;
    std::vector<int> flagged_ranks;
    std::vector<EvidenceItem> evidence;  // GPU, then CPU, then OS order
    std::vector<std::string> top_path;   // root first; hottest flagged path
    std::optional<int> reference_rank;
    std::vector<std::string> notes;

    std::string to_json() const;
    std::string to_text() const;
};

/// Everything diagnose() needs for one communication group.
struct GroupData {
    int group = 0;
    std::map<int, FoldedProfile> cpu_profiles;  // rank -> CPU profile
    std::map<int, GpuProfile> gpu_profiles;
    std::map<int, OsSnapshot> os_snapshots;
    std::vector<std::map<int, double>> lateness_per_instance;
    std::vector<double> iteration_times_ms;  // group mean per iteration
    std::optional<BaselineProfile> baseline;
    std::optional<double> baseline_iteration_ms;
};

struct DiagnosisConfig {
    int window_iterations = 100;
    double k = 2.0;
    double delta = 0.005;
    double iteration_regression_gate = 0.03;
    GpuDiffConfig gpu;
    OsDiffConfig os;
};

/// Layered decision procedure: straggler detection, then GPU -> CPU -> OS
/// differentials against the median-lateness reference rank (first
/// conclusive layer wins); with no straggler, an iteration-time regression
/// above the gate routes to the temporal baseline comparison.
DiagnosisReport diagnose(const GroupData& data,
                         const DiagnosisConfig& config = {});

}  // namespace strata

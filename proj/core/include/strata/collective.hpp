#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strata/build_id.hpp"

namespace strata {

enum class CollectiveKind : uint8_t {
    AllReduce,
    ReduceScatter,
    AllGather,
    Broadcast,
    P2P,
};

std::string collective_kind_name(CollectiveKind k);
CollectiveKind collective_kind_from_name(const std::string& name);

struct CollectiveEvent {
    int rank = 0;
    int group = 0;
    CollectiveKind kind = CollectiveKind::AllReduce;
    int64_t host_entry_ns = 0;  // rank-local clock
    int64_t host_exit_ns = 0;
    int64_t gpu_duration_ns = 0;
};

/// One matched collective across the ranks of a group, in per-rank order.
struct CollectiveInstance {
    int group = 0;
    CollectiveKind kind = CollectiveKind::AllReduce;
    std::map<int, CollectiveEvent> events;  // rank -> its event
    bool partial = false;                   // a rank is missing
    std::map<int, double> lateness_ms;      // filled by entry_lateness
};

struct MatchConfig {
    int64_t max_skew_ns = 50'000'000;  // 50 ms overlap window
};

/// Groups per-rank event streams into instances by temporal overlap.
/// A coarse per-rank offset (from each rank's first event of the
/// group/kind) is removed before overlap testing, so matching tolerates
/// constant clock shifts larger than the skew bound. Per-rank event order
/// is preserved; every event lands in exactly one instance.
std::vector<CollectiveInstance> match_collectives(
    const std::vector<CollectiveEvent>& events,
    const std::vector<int>& group_ranks, const MatchConfig& config = {});

/// Per-rank clock offsets (ns): median over the window's complete
/// instances of (exit_r - max exit), exploiting near-simultaneous barrier
/// exit. Subtracting offset_r from rank r's raw timestamps aligns clocks.
/// Returns nullopt if the window has no complete instance.
std::optional<std::map<int, int64_t>> align_clocks(
    const std::vector<CollectiveInstance>& instances);

/// lateness_r = adjusted_entry_r - min adjusted entry, in ms (min is 0).
std::map<int, double> entry_lateness(const CollectiveInstance& instance,
                                     const std::map<int, int64_t>& offsets);

}  // namespace strata

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "strata/build_id.hpp"
#include "strata/vprocess.hpp"

namespace strata {

enum class AddressSpace : uint8_t { User, Kernel };

struct StackSample {
    int64_t timestamp_ns = 0;  // rank-local clock
    int rank = 0;
    int thread = 0;
    std::vector<FrameRef> frames;           // leaf first
    std::vector<AddressSpace> spaces;       // per frame; empty = all user
};

/// One drained aggregation window for a single rank.
struct ProfileWindow {
    int rank = 0;
    int64_t window_start_ns = 0;
    int64_t window_end_ns = 0;  // exclusive

    struct Record {
        std::vector<FrameRef> frames;  // leaf first
        uint64_t count = 0;
    };
    std::vector<Record> records;

    uint64_t total_count() const;
};

/// Hash-aggregates one rank's time-ordered sample stream, draining every
/// `drain_interval_ns`. Digest collisions fall back to full-stack
/// comparison, so aggregation is lossless: the counts in the returned
/// windows always sum to the number of input samples.
std::vector<ProfileWindow> aggregate_samples(
    const std::vector<StackSample>& stream,
    int64_t drain_interval_ns = 5'000'000'000);

}  // namespace strata

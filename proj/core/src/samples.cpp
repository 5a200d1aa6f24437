#include "strata/samples.hpp"

#include <unordered_map>

namespace strata {

uint64_t ProfileWindow::total_count() const {
    uint64_t n = 0;
    for (const auto& r : records) n += r.count;
    return n;
}

namespace {

uint64_t stack_digest(const std::vector<FrameRef>& frames) {
    // FNV-1a over (build id bytes, offset) pairs.
    uint64_t h = 1469598103934665603ull;
    auto mix = [&](uint8_t b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (const FrameRef& f : frames) {
        for (uint8_t b : f.build_id.bytes()) mix(b);
        for (int i = 0; i < 8; ++i) mix(uint8_t(f.offset >> (8 * i)));
    }
    return h;
}

}  // namespace

std::vector<ProfileWindow> aggregate_samples(
    const std::vector<StackSample>& stream, int64_t drain_interval_ns) {
    if (drain_interval_ns <= 0) throw Error("drain interval must be positive");
    std::vector<ProfileWindow> out;
    if (stream.empty()) return out;

    // digest -> indices into the current window's records (collision chain).
    std::unordered_map<uint64_t, std::vector<size_t>> index;
    ProfileWindow cur;
    cur.rank = stream.front().rank;
    cur.window_start_ns =
        stream.front().timestamp_ns -
        (stream.front().timestamp_ns % drain_interval_ns + drain_interval_ns) %
            drain_interval_ns;
    cur.window_end_ns = cur.window_start_ns + drain_interval_ns;

    auto drain = [&] {
        if (!cur.records.empty()) out.push_back(std::move(cur));
        index.clear();
        cur.records.clear();
    };

    int64_t prev_ts = stream.front().timestamp_ns;
    for (const StackSample& s : stream) {
        if (s.frames.empty()) throw Error("empty sample stack");
        if (s.rank != cur.rank) throw Error("aggregate_samples: mixed ranks");
        if (s.timestamp_ns < prev_ts)
            throw Error("aggregate_samples: timestamps regressed");
        prev_ts = s.timestamp_ns;
        if (s.timestamp_ns >= cur.window_end_ns) {
            int64_t start = cur.window_start_ns;
            drain();
            // Advance to the window containing this sample.
            int64_t k = (s.timestamp_ns - start) / drain_interval_ns;
            cur.rank = s.rank;
            cur.window_start_ns = start + k * drain_interval_ns;
            cur.window_end_ns = cur.window_start_ns + drain_interval_ns;
        }
        uint64_t d = stack_digest(s.frames);
        bool merged = false;
        for (size_t i : index[d]) {
            if (cur.records[i].frames == s.frames) {
                ++cur.records[i].count;
                merged = true;
                break;
            }
        }
        if (!merged) {
            index[d].push_back(cur.records.size());
            cur.records.push_back({s.frames, 1});
        }
    }
    drain();
    return out;
}

}  // namespace strata

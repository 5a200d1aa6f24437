#include "strata/collective.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace strata {

std::string collective_kind_name(CollectiveKind k) {
    switch (k) {
        case CollectiveKind::AllReduce: return "AllReduce";
        case CollectiveKind::ReduceScatter: return "ReduceScatter";
        case CollectiveKind::AllGather: return "AllGather";
        case CollectiveKind::Broadcast: return "Broadcast";
        case CollectiveKind::P2P: return "P2P";
    }
    throw Error("bad collective kind");
}

CollectiveKind collective_kind_from_name(const std::string& name) {
    if (name == "AllReduce") return CollectiveKind::AllReduce;
    if (name == "ReduceScatter") return CollectiveKind::ReduceScatter;
    if (name == "AllGather") return CollectiveKind::AllGather;
    if (name == "Broadcast") return CollectiveKind::Broadcast;
    if (name == "P2P") return CollectiveKind::P2P;
    throw Error("unknown collective kind: " + name);
}

std::vector<CollectiveInstance> match_collectives(
    const std::vector<CollectiveEvent>& events,
    const std::vector<int>& group_ranks, const MatchConfig& config) {
    // Split by (group, kind), keeping per-rank order.
    std::map<std::pair<int, int>, std::map<int, std::deque<CollectiveEvent>>>
        streams;
    for (const CollectiveEvent& e : events) {
        if (e.host_entry_ns >= e.host_exit_ns)
            throw Error("collective event with entry >= exit");
        auto& per_rank = streams[{e.group, int(e.kind)}][e.rank];
        if (!per_rank.empty() &&
            e.host_entry_ns < per_rank.back().host_entry_ns)
            throw Error("collective events not time-ordered within rank");
        per_rank.push_back(e);
    }

    std::vector<CollectiveInstance> out;
    for (auto& [gk, per_rank] : streams) {
        // Coarse pre-alignment: shift each rank so its first event of this
        // (group, kind) starts at the group's earliest first entry.
        int64_t min_first = std::numeric_limits<int64_t>::max();
        for (const auto& [rank, q] : per_rank)
            min_first = std::min(min_first, q.front().host_entry_ns);
        std::map<int, int64_t> coarse;
        for (const auto& [rank, q] : per_rank)
            coarse[rank] = q.front().host_entry_ns - min_first;
        auto entry = [&](const CollectiveEvent& e) {
            return e.host_entry_ns - coarse[e.rank];
        };
        auto exit = [&](const CollectiveEvent& e) {
            return e.host_exit_ns - coarse[e.rank];
        };

        // Greedy sweep: repeatedly take the earliest pending event and pull
        // in each rank's head event that overlaps it (within max skew).
        while (true) {
            const CollectiveEvent* seed = nullptr;
            for (const auto& [rank, q] : per_rank)
                if (!q.empty() && (!seed || entry(q.front()) < entry(*seed)))
                    seed = &q.front();
            if (!seed) break;

            CollectiveInstance inst;
            inst.group = gk.first;
            inst.kind = CollectiveKind(gk.second);
            int64_t seed_entry = entry(*seed);
            int64_t seed_exit = exit(*seed);
            for (auto& [rank, q] : per_rank) {
                if (q.empty()) continue;
                const CollectiveEvent& head = q.front();
                // Overlap with the seed interval, slack-extended by max skew.
                if (entry(head) <= seed_exit + config.max_skew_ns &&
                    exit(head) + config.max_skew_ns >= seed_entry) {
                    inst.events.emplace(rank, head);
                    q.pop_front();
                }
            }
            for (int rank : group_ranks)
                if (!inst.events.count(rank)) inst.partial = true;
            out.push_back(std::move(inst));
        }
    }
    // Stable global order: by mean pre-aligned entry, then group/kind.
    std::sort(out.begin(), out.end(),
              [](const CollectiveInstance& a, const CollectiveInstance& b) {
                  auto key = [](const CollectiveInstance& x) {
                      int64_t min_entry = std::numeric_limits<int64_t>::max();
                      for (const auto& [r, e] : x.events)
                          min_entry = std::min(min_entry, e.host_entry_ns);
                      return std::tuple(min_entry, x.group, int(x.kind));
                  };
                  return key(a) < key(b);
              });
    return out;
}

std::optional<std::map<int, int64_t>> align_clocks(
    const std::vector<CollectiveInstance>& instances) {
    std::map<int, std::vector<int64_t>> deltas;  // rank -> exit_r - max exit
    for (const CollectiveInstance& inst : instances) {
        if (inst.partial) continue;
        int64_t max_exit = std::numeric_limits<int64_t>::min();
        for (const auto& [rank, e] : inst.events)
            max_exit = std::max(max_exit, e.host_exit_ns);
        for (const auto& [rank, e] : inst.events)
            deltas[rank].push_back(e.host_exit_ns - max_exit);
    }
    if (deltas.empty()) return std::nullopt;

    std::map<int, int64_t> offsets;
    for (auto& [rank, v] : deltas) {
        std::sort(v.begin(), v.end());
        size_t n = v.size();
        offsets[rank] = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
    }
    return offsets;
}

std::map<int, double> entry_lateness(const CollectiveInstance& instance,
                                     const std::map<int, int64_t>& offsets) {
    if (instance.partial) throw Error("lateness requires a complete instance");
    std::map<int, int64_t> adjusted;
    int64_t min_entry = std::numeric_limits<int64_t>::max();
    for (const auto& [rank, e] : instance.events) {
        auto it = offsets.find(rank);
        int64_t off = it == offsets.end() ? 0 : it->second;
        adjusted[rank] = e.host_entry_ns - off;
        min_entry = std::min(min_entry, adjusted[rank]);
    }
    std::map<int, double> out;
    for (const auto& [rank, t] : adjusted)
        out[rank] = double(t - min_entry) / 1e6;
    return out;
}

}  // namespace strata

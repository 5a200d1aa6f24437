#include "strata/fde.hpp"

#include <algorithm>
#include <sstream>

namespace strata {

CompiledFdeTable::CompiledFdeTable(std::vector<FdeEntry> entries)
    : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const FdeEntry& a, const FdeEntry& b) { return a.pc_start < b.pc_start; });
    for (size_t i = 1; i < entries_.size(); ++i) {
        if (entries_[i].pc_start < entries_[i - 1].pc_end) {
            std::ostringstream os;
            os << "overlapping FDE ranges at pc " << entries_[i].pc_start;
            throw Error(os.str());
        }
        if (entries_[i].pc_start == entries_[i - 1].pc_start)
            throw Error("duplicate FDE pc_start");
    }
}

const FdeEntry* CompiledFdeTable::lookup(uint64_t pc, uint64_t* probe_counter) const {
    size_t lo = 0, hi = entries_.size();
    while (lo < hi) {
        size_t mid = lo + (hi - lo) / 2;
        if (probe_counter) ++*probe_counter;
        if (entries_[mid].pc_start <= pc)
            lo = mid + 1;
        else
            hi = mid;
    }
    if (lo == 0) return nullptr;
    const FdeEntry& e = entries_[lo - 1];
    return pc < e.pc_end ? &e : nullptr;
}

CompiledFdeTable compile_fde_table(const VirtualBinary& binary) {
    std::vector<FdeEntry> entries;
    for (const auto& f : binary.functions()) {
        for (const auto& r : f.cfi) {
            FdeEntry e;
            e.pc_start = r.pc_start;
            e.pc_end = r.pc_end;
            e.kind = r.kind;
            e.base = r.base;
            e.cfa_offset = r.cfa_offset;
            e.load_offset = r.load_offset;
            e.add_offset = r.add_offset;
            e.ra_slot_offset = r.ra_slot_offset;
            e.complex = r.kind == CfiRule::Kind::Indirect;
            entries.push_back(e);
        }
    }
    return CompiledFdeTable(std::move(entries));
}

}  // namespace strata

#pragma once

#include <cstdint>
#include <vector>

#include "strata/vbin.hpp"

namespace strata {

struct FdeEntry {
    uint64_t pc_start = 0;
    uint64_t pc_end = 0;
    CfiRule::Kind kind = CfiRule::Kind::Simple;
    CfaBase base = CfaBase::SP;
    int64_t cfa_offset = 0;
    int64_t load_offset = 0;
    int64_t add_offset = 0;
    int64_t ra_slot_offset = -8;
    bool complex = false;  // Indirect rules take the slow path
};

/// Sorted per-binary FDE array with binary-search lookup. A lookup over M
/// entries makes at most ceil(log2(M)) + 1 probes (one per bisection step).
class CompiledFdeTable {
  public:
    CompiledFdeTable() = default;
    explicit CompiledFdeTable(std::vector<FdeEntry> entries);

    /// Entry covering pc, or nullptr. When probe_counter is non-null it is
    /// incremented once per entry inspected by the search.
    const FdeEntry* lookup(uint64_t pc, uint64_t* probe_counter = nullptr) const;

    size_t size() const { return entries_.size(); }
    const std::vector<FdeEntry>& entries() const { return entries_; }

  private:
    std::vector<FdeEntry> entries_;
};

/// Compiles a binary's CFI rules into a sorted FDE array.
/// Throws on overlapping PC ranges.
CompiledFdeTable compile_fde_table(const VirtualBinary& binary);

}  // namespace strata

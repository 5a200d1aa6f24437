#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "strata/fde.hpp"
#include "strata/vprocess.hpp"

namespace strata {

enum class Marker : uint8_t { Unmarked = 0, Fp = 1, Dwarf = 2 };

/// Persistent (BuildId, call-site key) -> Marker cache. Keys are function
/// start offsets (raw offsets fall back to a side map). Writes are set-once
/// with first-writer-wins CAS semantics; dense lookups never block.
class MarkerMap {
  public:
    /// Pre-sizes one lock-free slot per function of the binary.
    void register_binary(const VirtualBinary& binary);

    Marker get(const BuildId& id, uint64_t key) const;

    /// Set-once: returns the winning marker (the existing one if the key
    /// was already marked by an earlier writer).
    Marker mark(const BuildId& id, uint64_t key, Marker m);

    size_t marked_count() const;
    size_t dwarf_count() const;

  private:
    struct BinarySlots {
        std::vector<uint64_t> starts;  // sorted function start offsets
        std::unique_ptr<std::atomic<uint8_t>[]> slots;
    };

    const std::atomic<uint8_t>* slot(const BuildId& id, uint64_t key) const;

    std::unordered_map<BuildId, BinarySlots, BuildIdHash> dense_;
    mutable std::shared_mutex fallback_mu_;
    std::unordered_map<std::string, uint8_t> fallback_;  // hex-id:offset
};

struct UnwindConfig {
    uint32_t max_frames = 127;
    bool validation_enabled = true;
    bool cost_accounting = true;
};

struct CostCounters {
    uint64_t stack_reads = 0;   // 8-byte loads from thread stack images
    uint64_t table_probes = 0;  // FDE entries inspected by binary search
    uint64_t validations = 0;
    uint64_t unmarked_branches = 0;
    uint64_t frames_fp = 0;
    uint64_t frames_dwarf = 0;
    uint64_t reads_fp_frames = 0;
    uint64_t reads_dwarf_frames = 0;

    /// All memory the unwinder touched: stack loads plus FDE-array loads.
    uint64_t total_accesses() const { return stack_reads + table_probes; }

    CostCounters& operator+=(const CostCounters& o);
};

struct UnwindStep {
    enum class Status : uint8_t { Ok, MemoryFault, NoFde };
    Status status = Status::Ok;
    uint64_t pc = 0;
    uint64_t sp = 0;
    uint64_t fp = 0;
};

enum class Termination : uint8_t { Completed, MaxFrames, InvalidStep, MemoryFault };

struct UnwindResult {
    std::vector<FrameRef> frames;      // leaf first
    std::vector<Marker> methods;       // per-frame method (Fp or Dwarf)
    std::vector<uint64_t> frame_sp;    // SP observed at each frame
    Termination termination = Termination::Completed;
    CostCounters cost;
};

enum class UnwindMode : uint8_t { FpOnly, DwarfOnly, Hybrid };

using TableSet = std::unordered_map<BuildId, CompiledFdeTable, BuildIdHash>;

TableSet compile_tables(const VirtualProcess& process);

/// saved-FP at [FP], RA at [FP+8], caller SP = FP + 16.
UnwindStep unwind_fp(const VirtualProcess& process, uint64_t pc, uint64_t sp,
                     uint64_t fp, CostCounters* cost = nullptr);

/// CFA per the covering FDE (one extra dereference for Indirect rules),
/// pc' from the RA slot, sp' = CFA, fp' carried through unchanged.
UnwindStep unwind_dwarf(const VirtualProcess& process, uint64_t pc, uint64_t sp,
                        uint64_t fp, const TableSet& tables,
                        CostCounters* cost = nullptr);

/// True iff pc' lands in a mapped executable region and the stack pointer
/// made progress upward.
bool validate_caller_pc(uint64_t pc_next, uint64_t sp_next, uint64_t sp,
                        const VirtualProcess& process);

/// Adaptive hybrid walk: unmarked frames try FP, validate, and cache the
/// decision; marked frames take their cached method directly.
UnwindResult unwind_hybrid(const VirtualProcess& process,
                           const RegisterSnapshot& regs, MarkerMap& markers,
                           const TableSet& tables, const UnwindConfig& config = {});

/// Single-method walks used as evaluation baselines. fp-only performs no
/// validation or marker work (models conventional FP profilers).
UnwindResult unwind_single(const VirtualProcess& process,
                           const RegisterSnapshot& regs, UnwindMode mode,
                           const TableSet& tables, const UnwindConfig& config = {});

}  // namespace strata

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "strata/build_id.hpp"
#include "strata/vbin.hpp"

namespace strata {

struct MappedRegion {
    uint64_t base = 0;  // 4 KiB aligned
    uint64_t length = 0;
    BuildId build_id;
    bool executable = true;

    uint64_t end() const { return base + length; }
    bool contains(uint64_t addr) const { return addr >= base && addr < end(); }
};

struct RegisterSnapshot {
    uint64_t pc = 0;
    uint64_t sp = 0;
    uint64_t fp = 0;  // deliberately allowed to be garbage
};

/// Modeled interpreter activation; join_sp anchors it to the native eval
/// frame hosting it. join_sp values strictly increase leaf to root.
struct InterpreterFrame {
    std::string code_name;
    int line = 0;
    uint64_t join_sp = 0;
};

struct ThreadImage {
    uint64_t stack_base = 0;
    std::vector<uint8_t> stack;
    RegisterSnapshot registers;
    std::vector<InterpreterFrame> interpreter_chain;

    uint64_t stack_end() const { return stack_base + stack.size(); }
};

/// (BuildId, code offset) pair; the currency of stacks throughout.
struct FrameRef {
    BuildId build_id;
    uint64_t offset = 0;

    bool operator==(const FrameRef&) const = default;
};

struct GroundTruthStack {
    std::vector<FrameRef> frames;  // leaf first, non-empty
};

enum class ClobberMode : uint8_t { StaleFp, GarbageFp };

class VirtualProcess {
  public:
    /// Maps a binary at the given 4 KiB-aligned base. Rejects overlap.
    const MappedRegion& map_binary(std::shared_ptr<const VirtualBinary> bin,
                                   uint64_t base, bool executable = true);

    size_t add_thread(ThreadImage image);

    const std::vector<MappedRegion>& regions() const { return regions_; }
    const std::vector<ThreadImage>& threads() const { return threads_; }
    ThreadImage& thread(size_t i) { return threads_.at(i); }

    const MappedRegion* region_at(uint64_t addr) const;
    const VirtualBinary* binary(const BuildId& id) const;
    const std::unordered_map<BuildId, std::shared_ptr<const VirtualBinary>,
                             BuildIdHash>&
    binaries() const {
        return binaries_;
    }

    /// Absolute address of a (build id, offset) frame, via its first mapping.
    std::optional<uint64_t> frame_address(const FrameRef& frame) const;
    /// Inverse: address in some mapped region -> (build id, offset).
    std::optional<FrameRef> resolve_address(uint64_t addr) const;

    bool in_executable_region(uint64_t addr) const;

    /// Reads from thread stack images. Out-of-bounds reads return nullopt
    /// (a fault indicator), never abort.
    std::optional<std::vector<uint8_t>> read_memory(uint64_t addr, size_t len) const;
    std::optional<uint64_t> read_u64(uint64_t addr) const;
    bool write_u64(uint64_t addr, uint64_t value);

  private:
    std::vector<MappedRegion> regions_;  // sorted by base
    std::unordered_map<BuildId, std::shared_ptr<const VirtualBinary>, BuildIdHash>
        binaries_;
    std::unordered_map<BuildId, uint64_t, BuildIdHash> first_mapping_;
    std::vector<ThreadImage> threads_;
};

/// Materializes a byte-addressable stack image for a ground-truth call
/// chain, following the x86-64-like convention: preserves-FP frames store
/// saved-FP at [FP] and RA at [FP+8] with caller SP = FP+16; omits-FP
/// frames store RA at CFA + ra_slot_offset only.
///
/// Clobber mode shapes the leaf FP register when the leaf omits FP:
/// stale-fp leaves it at the nearest enclosing preserves-FP frame,
/// garbage-fp points it at junk bytes outside all mapped regions.
ThreadImage synthesize_stack_image(const VirtualProcess& process,
                                   const GroundTruthStack& chain,
                                   ClobberMode clobber = ClobberMode::GarbageFp,
                                   uint64_t stack_base = 0x7f0000000000ull,
                                   size_t stack_len = 1 << 20);

}  // namespace strata

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strata/build_id.hpp"
#include "strata/vbin.hpp"

namespace strata {

/// Parsed in-memory view of a SYMR symbol file. The on-disk format is
/// little-endian and self-contained:
///   header  : magic "SYMR", version u32, build id (20 bytes),
///             entry count u32, string-table offset u32   (36 bytes)
///   entries : n * { start u64, size u32, name_offset u32 } sorted by start
///   strtab  : u16 length-prefixed names
class SymbolFile {
  public:
    static constexpr uint32_t kVersion = 1;

    SymbolFile() = default;
    SymbolFile(BuildId id, std::vector<SymbolEntry> entries);

    const BuildId& build_id() const { return build_id_; }
    const std::vector<SymbolEntry>& entries() const { return entries_; }

    enum class LookupMode : uint8_t { ExactRange, NearestLower };

    /// Greatest entry with start <= offset; exact-range additionally
    /// requires offset < start+size (size=0 matches only at start).
    /// Bisection touches at most ceil(log2(n)) + 1 entries.
    std::optional<std::string> lookup(uint64_t offset, LookupMode mode,
                                      uint64_t* probes = nullptr) const;

  private:
    BuildId build_id_;
    std::vector<SymbolEntry> entries_;  // sorted strictly by start
};

/// Serializes to the bit-exact SYMR layout.
std::vector<uint8_t> pack_symbols(const BuildId& build_id,
                                  const std::vector<SymbolEntry>& entries);

/// Strict parse; throws strata::Error on any malformed input.
SymbolFile parse_symbols(const std::vector<uint8_t>& bytes);

/// Renders an unresolved frame as "[<hex build id>+0xOFF]".
std::string unknown_frame_label(const BuildId& id, uint64_t offset);

}  // namespace strata

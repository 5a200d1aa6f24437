#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strata/build_id.hpp"

namespace strata {

enum class CfaBase : uint8_t { SP, FP };
enum class FpConvention : uint8_t { Preserves, Omits };

/// One CFI record covering [pc_start, pc_end) of a binary.
///
/// Simple rules: CFA = base + cfa_offset, evaluable without extra memory
/// reads. Indirect rules: CFA = mem[base + load_offset] + add_offset, one
/// extra memory read (models complex FDEs served by a slow path).
struct CfiRule {
    enum class Kind : uint8_t { Simple, Indirect };

    uint64_t pc_start = 0;
    uint64_t pc_end = 0;
    Kind kind = Kind::Simple;
    CfaBase base = CfaBase::SP;
    int64_t cfa_offset = 0;    // Simple only
    int64_t load_offset = 0;   // Indirect only
    int64_t add_offset = 0;    // Indirect only
    int64_t ra_slot_offset = -8;
};

struct FunctionDef {
    std::string name;
    uint64_t offset = 0;
    uint64_t length = 0;
    FpConvention fp_convention = FpConvention::Preserves;
    uint64_t frame_size = 32;
    std::vector<CfiRule> cfi;  // total coverage of [offset, offset+length)

    uint64_t end() const { return offset + length; }
};

struct SymbolEntry {
    uint64_t start = 0;
    uint32_t size = 0;  // 0 = unknown extent (sparse tables)
    std::string name;
};

/// Declarative description consumed by build_binary. The BuildId is a
/// content digest of this spec, so identical specs map to identical ids.
struct BinarySpec {
    std::string label;  // participates in the digest only
    uint64_t code_size = 0;
    std::vector<FunctionDef> functions;
    // When absent, full_symbols is derived from the function list.
    std::optional<std::vector<SymbolEntry>> full_symbols;
    std::optional<std::vector<SymbolEntry>> sparse_symbols;
};

class VirtualBinary {
  public:
    VirtualBinary() = default;

    const BuildId& build_id() const { return build_id_; }
    uint64_t code_size() const { return code_size_; }
    const std::vector<FunctionDef>& functions() const { return functions_; }
    const std::vector<SymbolEntry>& full_symbols() const { return full_symbols_; }
    const std::optional<std::vector<SymbolEntry>>& sparse_symbols() const {
        return sparse_symbols_;
    }

    /// Function containing the code offset, or nullptr.
    const FunctionDef* function_at(uint64_t offset) const;
    /// CFI rule covering the code offset, or nullptr.
    const CfiRule* cfi_at(uint64_t offset) const;

    std::string to_json() const;
    static VirtualBinary from_json(const std::string& text);

    friend VirtualBinary build_binary(const BinarySpec& spec);

  private:
    BuildId build_id_;
    uint64_t code_size_ = 0;
    std::vector<FunctionDef> functions_;  // sorted by offset
    std::vector<SymbolEntry> full_symbols_;
    std::optional<std::vector<SymbolEntry>> sparse_symbols_;
};

/// Validates the spec (non-overlapping functions, total CFI coverage,
/// frame-size minimums) and seals it with a digest-derived BuildId.
/// Throws strata::Error naming the offending range on invalid input.
VirtualBinary build_binary(const BinarySpec& spec);

}  // namespace strata

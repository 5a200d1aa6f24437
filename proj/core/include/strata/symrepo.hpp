#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "strata/symfile.hpp"
#include "strata/vprocess.hpp"

namespace strata {

enum class IngestOutcome : uint8_t { Stored, AlreadyPresent };

/// Build-ID-keyed on-disk symbol repository. Files live under
/// <root>/symbols/<first 2 hex chars>/<build id>.symr. Ingest writes to a
/// temp file and renames, so a concurrent lookup sees either nothing or
/// the complete file.
class SymbolRepository {
  public:
    static constexpr size_t kSegmentSize = 64ull << 20;  // 64 MiB

    explicit SymbolRepository(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path path_for(const BuildId& id) const;
    bool contains(const BuildId& id) const;

    /// Idempotent, all-or-nothing ingest. The payload is consumed in 64 MiB
    /// segments; each segment's digest is checked against the expected list
    /// (computed by the sender over the same segmentation). A mismatch
    /// aborts the ingest with the repository unchanged. The payload header
    /// must carry `id`.
    IngestOutcome ingest(const BuildId& id, const std::vector<uint8_t>& payload,
                         const std::vector<BuildId>& segment_digests);

    /// Convenience: digests computed locally (trusted sender).
    IngestOutcome ingest(const BuildId& id, const std::vector<uint8_t>& payload);

    std::optional<SymbolFile> load(const BuildId& id) const;

  private:
    std::filesystem::path root_;
};

/// Per-segment SHA-1 digests over a 64 MiB segmentation of the payload.
std::vector<BuildId> segment_digests(const std::vector<uint8_t>& payload);

/// Frame-wise symbolization. Missing build ids or unresolved offsets render
/// as "[<build id>+0xOFF]"; resolution never fails a whole stack.
std::vector<std::string> resolve_stack(const std::vector<FrameRef>& stack,
                                       const SymbolRepository& repo,
                                       SymbolFile::LookupMode mode);

std::vector<std::vector<std::string>> resolve_stacks(
    const std::vector<std::vector<FrameRef>>& stacks,
    const SymbolRepository& repo, SymbolFile::LookupMode mode);

}  // namespace strata

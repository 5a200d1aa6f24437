#pragma once

#include <map>
#include <string>
#include <vector>

#include "strata/samples.hpp"
#include "strata/symrepo.hpp"

namespace strata {

/// Folded flame-graph profile: `frame;frame;... count` lines, root first,
/// sorted lexicographically. Lines with identical symbolized stacks are
/// merged.
struct FoldedProfile {
    struct Line {
        std::vector<std::string> frames;  // root first
        uint64_t count = 0;
    };
    std::vector<Line> lines;
    uint64_t total = 0;

    std::string to_string() const;

    /// Inclusive sample fraction per function name (a frame appearing
    /// multiple times in one stack is counted once for that stack).
    std::map<std::string, double> inclusive_fractions() const;
};

FoldedProfile to_folded(const ProfileWindow& window, const SymbolRepository& repo,
                        SymbolFile::LookupMode mode);

/// Merges several windows (e.g. all windows of one rank) into one profile.
FoldedProfile to_folded(const std::vector<ProfileWindow>& windows,
                        const SymbolRepository& repo, SymbolFile::LookupMode mode);

/// Folded profile over already-symbolized stacks (leaf-first input).
FoldedProfile fold_symbolized(
    const std::vector<std::pair<std::vector<std::string>, uint64_t>>& stacks);

/// Two-profile diff in folded form: `frames countA countB`, including
/// stacks present in only one side (the other count is 0).
std::string diff_folded(const FoldedProfile& a, const FoldedProfile& b);

}  // namespace strata

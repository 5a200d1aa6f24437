#include "strata/folded.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace strata {

namespace {

FoldedProfile finish(std::map<std::vector<std::string>, uint64_t>&& merged) {
    FoldedProfile out;
    out.lines.reserve(merged.size());
    for (auto& [frames, count] : merged) {
        out.total += count;
        out.lines.push_back({frames, count});
    }
    return out;  // std::map iteration order is already lexicographic
}

void add_window(std::map<std::vector<std::string>, uint64_t>& merged,
                const ProfileWindow& window, const SymbolRepository& repo,
                SymbolFile::LookupMode mode) {
    for (const auto& rec : window.records) {
        std::vector<std::string> names = resolve_stack(rec.frames, repo, mode);
        std::reverse(names.begin(), names.end());  // leaf-first -> root-first
        merged[std::move(names)] += rec.count;
    }
}

}  // namespace

std::string FoldedProfile::to_string() const {
    std::ostringstream os;
    for (const Line& l : lines) {
        for (size_t i = 0; i < l.frames.size(); ++i) {
            if (i) os << ';';
            os << l.frames[i];
        }
        os << ' ' << l.count << '\n';
    }
    return os.str();
}

std::map<std::string, double> FoldedProfile::inclusive_fractions() const {
    std::map<std::string, double> out;
    if (total == 0) return out;
    for (const Line& l : lines) {
        std::set<std::string> seen(l.frames.begin(), l.frames.end());
        for (const std::string& name : seen)
            out[name] += double(l.count) / double(total);
    }
    return out;
}

FoldedProfile to_folded(const ProfileWindow& window, const SymbolRepository& repo,
                        SymbolFile::LookupMode mode) {
    if (window.records.empty()) throw Error("empty profile window");
    std::map<std::vector<std::string>, uint64_t> merged;
    add_window(merged, window, repo, mode);
    return finish(std::move(merged));
}

FoldedProfile to_folded(const std::vector<ProfileWindow>& windows,
                        const SymbolRepository& repo,
                        SymbolFile::LookupMode mode) {
    std::map<std::vector<std::string>, uint64_t> merged;
    for (const ProfileWindow& w : windows) add_window(merged, w, repo, mode);
    if (merged.empty()) throw Error("empty profile window");
    return finish(std::move(merged));
}

FoldedProfile fold_symbolized(
    const std::vector<std::pair<std::vector<std::string>, uint64_t>>& stacks) {
    std::map<std::vector<std::string>, uint64_t> merged;
    for (const auto& [frames, count] : stacks) {
        std::vector<std::string> rooted(frames.rbegin(), frames.rend());
        merged[std::move(rooted)] += count;
    }
    return finish(std::move(merged));
}

std::string diff_folded(const FoldedProfile& a, const FoldedProfile& b) {
    std::map<std::vector<std::string>, std::pair<uint64_t, uint64_t>> merged;
    for (const auto& l : a.lines) merged[l.frames].first += l.count;
    for (const auto& l : b.lines) merged[l.frames].second += l.count;
    std::ostringstream os;
    for (const auto& [frames, counts] : merged) {
        for (size_t i = 0; i < frames.size(); ++i) {
            if (i) os << ';';
            os << frames[i];
        }
        os << ' ' << counts.first << ' ' << counts.second << '\n';
    }
    return os.str();
}

}  // namespace strata

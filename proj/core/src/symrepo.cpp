#include "strata/symrepo.hpp"

#include <fstream>
#include <random>

namespace strata {

namespace fs = std::filesystem;

SymbolRepository::SymbolRepository(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "symbols");
}

fs::path SymbolRepository::path_for(const BuildId& id) const {
    std::string hex = id.hex();
    return root_ / "symbols" / hex.substr(0, 2) / (hex + ".symr");
}

bool SymbolRepository::contains(const BuildId& id) const {
    return fs::exists(path_for(id));
}

std::vector<BuildId> segment_digests(const std::vector<uint8_t>& payload) {
    std::vector<BuildId> digests;
    size_t off = 0;
    do {
        size_t len = std::min(SymbolRepository::kSegmentSize, payload.size() - off);
        digests.push_back(
            BuildId::digest(std::span<const uint8_t>(payload.data() + off, len)));
        off += len;
    } while (off < payload.size());
    return digests;
}

IngestOutcome SymbolRepository::ingest(const BuildId& id,
                                       const std::vector<uint8_t>& payload,
                                       const std::vector<BuildId>& digests) {
    if (contains(id)) return IngestOutcome::AlreadyPresent;

    // Validate before anything touches the repository: header key match,
    // parseability, and every segment digest.
    SymbolFile parsed = parse_symbols(payload);
    if (parsed.build_id() != id)
        throw Error("symbol file build id does not match ingest key");
    std::vector<BuildId> actual = segment_digests(payload);
    if (actual.size() != digests.size())
        throw Error("segment count mismatch during ingest");
    for (size_t i = 0; i < actual.size(); ++i)
        if (actual[i] != digests[i])
            throw Error("segment digest mismatch at segment " + std::to_string(i));

    fs::path dest = path_for(id);
    fs::create_directories(dest.parent_path());
    // Unique temp name so concurrent ingests of the same id cannot collide;
    // rename makes the file visible atomically.
    std::random_device rd;
    fs::path tmp = dest;
    tmp += ".tmp" + std::to_string(rd());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open temp file for ingest");
        for (size_t off = 0; off < payload.size();
             off += SymbolRepository::kSegmentSize) {
            size_t len =
                std::min(SymbolRepository::kSegmentSize, payload.size() - off);
            out.write(reinterpret_cast<const char*>(payload.data() + off),
                      std::streamsize(len));
        }
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw Error("short write during ingest");
        }
    }
    std::error_code ec;
    fs::rename(tmp, dest, ec);
    if (ec) {
        fs::remove(tmp);
        if (fs::exists(dest)) return IngestOutcome::AlreadyPresent;
        throw Error("rename failed during ingest: " + ec.message());
    }
    return IngestOutcome::Stored;
}

IngestOutcome SymbolRepository::ingest(const BuildId& id,
                                       const std::vector<uint8_t>& payload) {
    return ingest(id, payload, segment_digests(payload));
}

std::optional<SymbolFile> SymbolRepository::load(const BuildId& id) const {
    fs::path p = path_for(id);
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_symbols(bytes);
}

std::vector<std::string> resolve_stack(const std::vector<FrameRef>& stack,
                                       const SymbolRepository& repo,
                                       SymbolFile::LookupMode mode) {
    // Cache loaded files across frames of one stack; callers resolving many
    // stacks should prefer resolve_stacks, which shares the cache further.
    std::unordered_map<BuildId, std::optional<SymbolFile>, BuildIdHash> cache;
    std::vector<std::string> out;
    out.reserve(stack.size());
    for (const FrameRef& f : stack) {
        auto it = cache.find(f.build_id);
        if (it == cache.end())
            it = cache.emplace(f.build_id, repo.load(f.build_id)).first;
        if (it->second) {
            if (auto name = it->second->lookup(f.offset, mode)) {
                out.push_back(*name);
                continue;
            }
        }
        out.push_back(unknown_frame_label(f.build_id, f.offset));
    }
    return out;
}

std::vector<std::vector<std::string>> resolve_stacks(
    const std::vector<std::vector<FrameRef>>& stacks,
    const SymbolRepository& repo, SymbolFile::LookupMode mode) {
    std::unordered_map<BuildId, std::optional<SymbolFile>, BuildIdHash> cache;
    std::vector<std::vector<std::string>> out;
    out.reserve(stacks.size());
    for (const auto& stack : stacks) {
        std::vector<std::string> names;
        names.reserve(stack.size());
        for (const FrameRef& f : stack) {
            auto it = cache.find(f.build_id);
            if (it == cache.end())
                it = cache.emplace(f.build_id, repo.load(f.build_id)).first;
            std::optional<std::string> name;
            if (it->second) name = it->second->lookup(f.offset, mode);
            names.push_back(name ? *name
                                 : unknown_frame_label(f.build_id, f.offset));
        }
        out.push_back(std::move(names));
    }
    return out;
}

}  // namespace strata

#include "strata/symfile.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace strata {

namespace {

constexpr char kMagic[4] = {'S', 'Y', 'M', 'R'};
constexpr size_t kHeaderSize = 4 + 4 + BuildId::kSize + 4 + 4;
constexpr size_t kEntrySize = 8 + 4 + 4;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }
uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
    return v;
}
uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
    return v;
}

}  // namespace

SymbolFile::SymbolFile(BuildId id, std::vector<SymbolEntry> entries)
    : build_id_(id), entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const SymbolEntry& a, const SymbolEntry& b) {
                  return a.start < b.start;
              });
    for (size_t i = 1; i < entries_.size(); ++i)
        if (entries_[i].start == entries_[i - 1].start)
            throw Error("duplicate symbol start " +
                        std::to_string(entries_[i].start));
    for (const auto& e : entries_)
        if (e.name.empty()) throw Error("empty symbol name");
}

std::optional<std::string> SymbolFile::lookup(uint64_t offset, LookupMode mode,
                                              uint64_t* probes) const {
    // Bisection over [lo, hi): invariant entries_[lo-1].start <= offset
    // (when lo > 0) and entries_[hi].start > offset (when hi < n).
    size_t lo = 0, hi = entries_.size();
    while (lo < hi) {
        size_t mid = lo + (hi - lo) / 2;
        if (probes) ++*probes;
        if (entries_[mid].start <= offset)
            lo = mid + 1;
        else
            hi = mid;
    }
    if (lo == 0) return std::nullopt;  // below first entry
    const SymbolEntry& e = entries_[lo - 1];
    if (mode == LookupMode::ExactRange) {
        bool in_range = e.size == 0 ? offset == e.start
                                    : offset < e.start + e.size;
        if (!in_range) return std::nullopt;
    }
    return e.name;
}

std::vector<uint8_t> pack_symbols(const BuildId& build_id,
                                  const std::vector<SymbolEntry>& entries) {
    std::vector<SymbolEntry> sorted = entries;
    std::sort(sorted.begin(), sorted.end(),
              [](const SymbolEntry& a, const SymbolEntry& b) {
                  return a.start < b.start;
              });
    for (size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].start == sorted[i - 1].start)
            throw Error("duplicate symbol start");

    std::vector<uint8_t> strtab;
    std::vector<uint32_t> name_offsets;
    name_offsets.reserve(sorted.size());
    for (const auto& e : sorted) {
        if (e.name.empty()) throw Error("empty symbol name");
        if (e.name.size() > 0xffff) throw Error("symbol name too long");
        if (strtab.size() > 0xffffffffull - e.name.size() - 2)
            throw Error("string table overflows u32 offsets");
        name_offsets.push_back(uint32_t(strtab.size()));
        put_u16(strtab, uint16_t(e.name.size()));
        strtab.insert(strtab.end(), e.name.begin(), e.name.end());
    }

    std::vector<uint8_t> out;
    out.reserve(kHeaderSize + sorted.size() * kEntrySize + strtab.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, SymbolFile::kVersion);
    out.insert(out.end(), build_id.bytes().begin(), build_id.bytes().end());
    put_u32(out, uint32_t(sorted.size()));
    put_u32(out, uint32_t(kHeaderSize + sorted.size() * kEntrySize));
    for (size_t i = 0; i < sorted.size(); ++i) {
        put_u64(out, sorted[i].start);
        put_u32(out, sorted[i].size);
        put_u32(out, name_offsets[i]);
    }
    out.insert(out.end(), strtab.begin(), strtab.end());
    return out;
}

SymbolFile parse_symbols(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < kHeaderSize) throw Error("symbol file truncated header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error("symbol file bad magic");
    uint32_t version = get_u32(bytes.data() + 4);
    if (version != SymbolFile::kVersion)
        throw Error("unsupported symbol file version " + std::to_string(version));
    std::array<uint8_t, BuildId::kSize> raw{};
    std::memcpy(raw.data(), bytes.data() + 8, BuildId::kSize);
    BuildId id(raw);
    uint32_t n = get_u32(bytes.data() + 8 + BuildId::kSize);
    uint32_t strtab_off = get_u32(bytes.data() + 12 + BuildId::kSize);

    if (strtab_off != kHeaderSize + uint64_t(n) * kEntrySize ||
        strtab_off > bytes.size())
        throw Error("symbol file bad string-table offset");
    size_t strtab_len = bytes.size() - strtab_off;
    const uint8_t* strtab = bytes.data() + strtab_off;

    std::vector<SymbolEntry> entries;
    entries.reserve(n);
    uint64_t prev_start = 0;
    for (uint32_t i = 0; i < n; ++i) {
        const uint8_t* p = bytes.data() + kHeaderSize + size_t(i) * kEntrySize;
        SymbolEntry e;
        e.start = get_u64(p);
        e.size = get_u32(p + 8);
        uint32_t name_off = get_u32(p + 12);
        if (i > 0 && e.start <= prev_start)
            throw Error("symbol entries not strictly sorted");
        prev_start = e.start;
        if (uint64_t(name_off) + 2 > strtab_len)
            throw Error("symbol name offset out of range");
        uint16_t len = get_u16(strtab + name_off);
        if (len == 0 || uint64_t(name_off) + 2 + len > strtab_len)
            throw Error("symbol name out of range");
        e.name.assign(reinterpret_cast<const char*>(strtab + name_off + 2), len);
        entries.push_back(std::move(e));
    }
    return SymbolFile(id, std::move(entries));
}

std::string unknown_frame_label(const BuildId& id, uint64_t offset) {
    std::ostringstream os;
    os << "[" << id.hex() << "+0x" << std::hex << offset << "]";
    return os.str();
}

}  // namespace strata

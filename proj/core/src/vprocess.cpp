#include "strata/vprocess.hpp"

#include <algorithm>
#include <cstring>

namespace strata {

const MappedRegion& VirtualProcess::map_binary(
    std::shared_ptr<const VirtualBinary> bin, uint64_t base, bool executable) {
    if (base % 4096 != 0) throw Error("region base not 4 KiB aligned");
    MappedRegion region{base, bin->code_size(), bin->build_id(), executable};
    for (const auto& r : regions_)
        if (region.base < r.end() && r.base < region.end())
            throw Error("mapped regions overlap");
    auto it = std::lower_bound(
        regions_.begin(), regions_.end(), base,
        [](const MappedRegion& r, uint64_t b) { return r.base < b; });
    it = regions_.insert(it, region);
    first_mapping_.emplace(bin->build_id(), base);
    binaries_.emplace(bin->build_id(), std::move(bin));
    return *it;
}

size_t VirtualProcess::add_thread(ThreadImage image) {
    const auto& regs = image.registers;
    if (regs.sp < image.stack_base || regs.sp >= image.stack_end())
        throw Error("thread SP outside its stack image");
    threads_.push_back(std::move(image));
    return threads_.size() - 1;
}

const MappedRegion* VirtualProcess::region_at(uint64_t addr) const {
    auto it = std::upper_bound(
        regions_.begin(), regions_.end(), addr,
        [](uint64_t a, const MappedRegion& r) { return a < r.base; });
    if (it == regions_.begin()) return nullptr;
    --it;
    return it->contains(addr) ? &*it : nullptr;
}

const VirtualBinary* VirtualProcess::binary(const BuildId& id) const {
    auto it = binaries_.find(id);
    return it == binaries_.end() ? nullptr : it->second.get();
}

std::optional<uint64_t> VirtualProcess::frame_address(const FrameRef& frame) const {
    auto it = first_mapping_.find(frame.build_id);
    if (it == first_mapping_.end()) return std::nullopt;
    return it->second + frame.offset;
}

std::optional<FrameRef> VirtualProcess::resolve_address(uint64_t addr) const {
    const MappedRegion* r = region_at(addr);
    if (!r) return std::nullopt;
    return FrameRef{r->build_id, addr - r->base};
}

bool VirtualProcess::in_executable_region(uint64_t addr) const {
    const MappedRegion* r = region_at(addr);
    return r != nullptr && r->executable;
}

std::optional<std::vector<uint8_t>> VirtualProcess::read_memory(uint64_t addr,
                                                               size_t len) const {
    for (const auto& t : threads_) {
        if (addr >= t.stack_base && addr + len <= t.stack_end() &&
            addr + len >= addr) {
            auto off = size_t(addr - t.stack_base);
            return std::vector<uint8_t>(t.stack.begin() + off,
                                        t.stack.begin() + off + len);
        }
    }
    return std::nullopt;
}

std::optional<uint64_t> VirtualProcess::read_u64(uint64_t addr) const {
    auto bytes = read_memory(addr, 8);
    if (!bytes) return std::nullopt;
    uint64_t v = 0;
    std::memcpy(&v, bytes->data(), 8);
    return v;  // little-endian host assumed throughout
}

bool VirtualProcess::write_u64(uint64_t addr, uint64_t value) {
    for (auto& t : threads_) {
        if (addr >= t.stack_base && addr + 8 <= t.stack_end()) {
            std::memcpy(t.stack.data() + (addr - t.stack_base), &value, 8);
            return true;
        }
    }
    return false;
}

namespace {

struct FrameInfo {
    const FunctionDef* fn = nullptr;
    const CfiRule* rule = nullptr;
    uint64_t pc = 0;   // absolute
    uint64_t cfa = 0;  // absolute
};

void store_u64(ThreadImage& img, uint64_t addr, uint64_t value) {
    if (addr < img.stack_base || addr + 8 > img.stack_end())
        throw Error("stack image overflow while synthesizing frame slots");
    std::memcpy(img.stack.data() + (addr - img.stack_base), &value, 8);
}

}  // namespace

ThreadImage synthesize_stack_image(const VirtualProcess& process,
                                   const GroundTruthStack& chain,
                                   ClobberMode clobber, uint64_t stack_base,
                                   size_t stack_len) {
    if (chain.frames.empty()) throw Error("empty ground-truth chain");

    const size_t n = chain.frames.size();
    std::vector<FrameInfo> info(n);
    for (size_t i = 0; i < n; ++i) {
        const FrameRef& f = chain.frames[i];
        const VirtualBinary* bin = process.binary(f.build_id);
        if (!bin) throw Error("chain frame references unmapped binary");
        info[i].fn = bin->function_at(f.offset);
        if (!info[i].fn) throw Error("chain frame offset outside any function");
        info[i].rule = bin->cfi_at(f.offset);
        if (!info[i].rule) throw Error("chain frame missing CFI");
        auto addr = process.frame_address(f);
        if (!addr) throw Error("chain frame has no mapping");
        info[i].pc = *addr;
    }

    ThreadImage img;
    img.stack_base = stack_base;
    img.stack.assign(stack_len, 0);

    // CFA of an activation is its caller's SP at the call site. Lay frames
    // out top-down: cfa[i-1] = cfa[i] - frame_size[i].
    uint64_t top = stack_base + stack_len - 64;
    top &= ~uint64_t(15);
    info[n - 1].cfa = top;
    for (size_t i = n - 1; i > 0; --i) {
        info[i - 1].cfa = info[i].cfa - info[i].fn->frame_size;
        if (info[i - 1].cfa < stack_base + 4096)
            throw Error("chain does not fit the stack image");
    }
    const uint64_t leaf_sp = info[0].cfa - info[0].fn->frame_size;
    if (leaf_sp < stack_base + 4096)
        throw Error("chain does not fit the stack image");

    // Junk bytes low in the image, outside every mapped region. A garbage FP
    // pointed here reads zeros, so the FP step yields a non-executable pc'.
    const uint64_t junk = stack_base + 256;

    auto fp_of = [&](size_t i) { return info[i].cfa - 16; };
    auto nearest_preserves_above = [&](size_t i) -> std::optional<size_t> {
        for (size_t j = i + 1; j < n; ++j)
            if (info[j].fn->fp_convention == FpConvention::Preserves) return j;
        return std::nullopt;
    };

    for (size_t i = 0; i < n; ++i) {
        const FrameInfo& fi = info[i];
        const uint64_t ra = (i + 1 < n) ? info[i + 1].pc : 0;
        store_u64(img, fi.cfa + fi.rule->ra_slot_offset, ra);
        if (fi.fn->fp_convention == FpConvention::Preserves) {
            store_u64(img, fi.cfa - 8, ra);  // RA at [FP+8]
            auto j = nearest_preserves_above(i);
            store_u64(img, fp_of(i), j ? fp_of(*j) : junk);
        }
        if (fi.rule->kind == CfiRule::Kind::Indirect) {
            // The slow path loads the CFA through one extra dereference.
            uint64_t reg = fi.rule->base == CfaBase::FP
                               ? fp_of(i)
                               : fi.cfa - fi.fn->frame_size;
            store_u64(img, reg + fi.rule->load_offset,
                      fi.cfa - fi.rule->add_offset);
        }
    }

    img.registers.pc = info[0].pc;
    img.registers.sp = leaf_sp;
    if (info[0].fn->fp_convention == FpConvention::Preserves) {
        img.registers.fp = fp_of(0);
    } else if (clobber == ClobberMode::StaleFp) {
        auto j = nearest_preserves_above(0);
        img.registers.fp = j ? fp_of(*j) : junk;
    } else {
        img.registers.fp = junk;
    }
    return img;
}

}  // namespace strata

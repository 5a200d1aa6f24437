#include "strata/unwinder.hpp"

#include <algorithm>

namespace strata {

void MarkerMap::register_binary(const VirtualBinary& binary) {
    if (dense_.count(binary.build_id())) return;
    BinarySlots bs;
    bs.starts.reserve(binary.functions().size());
    for (const auto& f : binary.functions()) bs.starts.push_back(f.offset);
    bs.slots = std::make_unique<std::atomic<uint8_t>[]>(bs.starts.size());
    for (size_t i = 0; i < bs.starts.size(); ++i)
        bs.slots[i].store(0, std::memory_order_relaxed);
    dense_.emplace(binary.build_id(), std::move(bs));
}

const std::atomic<uint8_t>* MarkerMap::slot(const BuildId& id, uint64_t key) const {
    auto it = dense_.find(id);
    if (it == dense_.end()) return nullptr;
    const auto& bs = it->second;
    auto pos = std::lower_bound(bs.starts.begin(), bs.starts.end(), key);
    if (pos == bs.starts.end() || *pos != key) return nullptr;
    return &bs.slots[size_t(pos - bs.starts.begin())];
}

Marker MarkerMap::get(const BuildId& id, uint64_t key) const {
    if (const auto* s = slot(id, key))
        return Marker(s->load(std::memory_order_acquire));
    std::shared_lock lock(fallback_mu_);
    auto it = fallback_.find(id.hex() + ":" + std::to_string(key));
    return it == fallback_.end() ? Marker::Unmarked : Marker(it->second);
}

Marker MarkerMap::mark(const BuildId& id, uint64_t key, Marker m) {
    if (const auto* cs = slot(id, key)) {
        auto* s = const_cast<std::atomic<uint8_t>*>(cs);
        uint8_t expected = 0;
        if (s->compare_exchange_strong(expected, uint8_t(m),
                                       std::memory_order_acq_rel))
            return m;
        return Marker(expected);  // earlier writer wins
    }
    std::unique_lock lock(fallback_mu_);
    auto [it, inserted] =
        fallback_.emplace(id.hex() + ":" + std::to_string(key), uint8_t(m));
    return Marker(it->second);
}

size_t MarkerMap::marked_count() const {
    size_t n = 0;
    for (const auto& [id, bs] : dense_)
        for (size_t i = 0; i < bs.starts.size(); ++i)
            if (bs.slots[i].load(std::memory_order_relaxed) != 0) ++n;
    std::shared_lock lock(fallback_mu_);
    for (const auto& [k, v] : fallback_)
        if (v != 0) ++n;
    return n;
}

size_t MarkerMap::dwarf_count() const {
    size_t n = 0;
    for (const auto& [id, bs] : dense_)
        for (size_t i = 0; i < bs.starts.size(); ++i)
            if (bs.slots[i].load(std::memory_order_relaxed) == uint8_t(Marker::Dwarf))
                ++n;
    std::shared_lock lock(fallback_mu_);
    for (const auto& [k, v] : fallback_)
        if (v == uint8_t(Marker::Dwarf)) ++n;
    return n;
}

CostCounters& CostCounters::operator+=(const CostCounters& o) {
    stack_reads += o.stack_reads;
    table_probes += o.table_probes;
    validations += o.validations;
    unmarked_branches += o.unmarked_branches;
    frames_fp += o.frames_fp;
    frames_dwarf += o.frames_dwarf;
    reads_fp_frames += o.reads_fp_frames;
    reads_dwarf_frames += o.reads_dwarf_frames;
    return *this;
}

TableSet compile_tables(const VirtualProcess& process) {
    TableSet tables;
    for (const auto& [id, bin] : process.binaries())
        tables.emplace(id, compile_fde_table(*bin));
    return tables;
}

UnwindStep unwind_fp(const VirtualProcess& process, uint64_t /*pc*/, uint64_t /*sp*/,
                     uint64_t fp, CostCounters* cost) {
    UnwindStep step;
    auto saved_fp = process.read_u64(fp);
    if (cost) ++cost->stack_reads;
    if (!saved_fp) {
        step.status = UnwindStep::Status::MemoryFault;
        return step;
    }
    auto ra = process.read_u64(fp + 8);
    if (cost) ++cost->stack_reads;
    if (!ra) {
        step.status = UnwindStep::Status::MemoryFault;
        return step;
    }
    step.pc = *ra;
    step.sp = fp + 16;
    step.fp = *saved_fp;
    return step;
}

UnwindStep unwind_dwarf(const VirtualProcess& process, uint64_t pc, uint64_t sp,
                        uint64_t fp, const TableSet& tables, CostCounters* cost) {
    UnwindStep step;
    auto frame = process.resolve_address(pc);
    if (!frame) {
        step.status = UnwindStep::Status::NoFde;
        return step;
    }
    auto tit = tables.find(frame->build_id);
    if (tit == tables.end()) {
        step.status = UnwindStep::Status::NoFde;
        return step;
    }
    const FdeEntry* e =
        tit->second.lookup(frame->offset, cost ? &cost->table_probes : nullptr);
    if (!e) {
        step.status = UnwindStep::Status::NoFde;
        return step;
    }
    uint64_t base = e->base == CfaBase::FP ? fp : sp;
    uint64_t cfa;
    if (e->kind == CfiRule::Kind::Simple) {
        cfa = base + uint64_t(e->cfa_offset);
    } else {
        auto loaded = process.read_u64(base + uint64_t(e->load_offset));
        if (cost) ++cost->stack_reads;
        if (!loaded) {
            step.status = UnwindStep::Status::MemoryFault;
            return step;
        }
        cfa = *loaded + uint64_t(e->add_offset);
    }
    auto ra = process.read_u64(cfa + uint64_t(e->ra_slot_offset));
    if (cost) ++cost->stack_reads;
    if (!ra) {
        step.status = UnwindStep::Status::MemoryFault;
        return step;
    }
    step.pc = *ra;
    step.sp = cfa;
    step.fp = fp;  // register-rule restoration is not modeled
    return step;
}

bool validate_caller_pc(uint64_t pc_next, uint64_t sp_next, uint64_t sp,
                        const VirtualProcess& process) {
    if (sp_next <= sp) return false;
    // pc' = 0 with upward stack progress is the conventional end-of-chain
    // sentinel (outermost frame), not a broken step; garbage FPs also read
    // 0 but fail the progress check because junk lives low in the image.
    return pc_next == 0 || process.in_executable_region(pc_next);
}

namespace {

uint64_t marker_key(const VirtualBinary* bin, uint64_t offset) {
    if (bin)
        if (const FunctionDef* f = bin->function_at(offset)) return f->offset;
    return offset;  // raw-offset fallback
}

UnwindResult walk(const VirtualProcess& process, const RegisterSnapshot& regs,
                  UnwindMode mode, MarkerMap* markers, const TableSet& tables,
                  const UnwindConfig& config) {
    UnwindResult res;
    CostCounters& cost = res.cost;
    uint64_t pc = regs.pc, sp = regs.sp, fp = regs.fp;

    while (true) {
        if (!process.in_executable_region(pc)) {
            res.termination = Termination::Completed;
            break;
        }
        if (res.frames.size() >= config.max_frames) {
            res.termination = Termination::MaxFrames;
            break;
        }
        auto frame = process.resolve_address(pc);
        res.frames.push_back(*frame);
        res.frame_sp.push_back(sp);

        Marker method;
        UnwindStep step;
        if (mode == UnwindMode::FpOnly) {
            method = Marker::Fp;
            step = unwind_fp(process, pc, sp, fp, &cost);
        } else if (mode == UnwindMode::DwarfOnly) {
            method = Marker::Dwarf;
            step = unwind_dwarf(process, pc, sp, fp, tables, &cost);
        } else {
            const VirtualBinary* bin = process.binary(frame->build_id);
            uint64_t key = marker_key(bin, frame->offset);
            Marker m = markers->get(frame->build_id, key);
            if (m == Marker::Unmarked) {
                ++cost.unmarked_branches;
                uint64_t reads_before = cost.stack_reads;
                step = unwind_fp(process, pc, sp, fp, &cost);
                bool valid = false;
                if (config.validation_enabled) {
                    ++cost.validations;
                    valid = step.status == UnwindStep::Status::Ok &&
                            validate_caller_pc(step.pc, step.sp, sp, process);
                } else {
                    valid = step.status == UnwindStep::Status::Ok;
                }
                Marker winner = markers->mark(frame->build_id, key,
                                              valid ? Marker::Fp : Marker::Dwarf);
                if (winner == Marker::Fp && !valid) {
                    // Lost the race to an fp writer; redo the FP step result.
                    cost.stack_reads = reads_before;
                    step = unwind_fp(process, pc, sp, fp, &cost);
                } else if (winner == Marker::Dwarf) {
                    step = unwind_dwarf(process, pc, sp, fp, tables, &cost);
                }
                method = winner;
            } else if (m == Marker::Fp) {
                method = Marker::Fp;
                step = unwind_fp(process, pc, sp, fp, &cost);
            } else {
                method = Marker::Dwarf;
                step = unwind_dwarf(process, pc, sp, fp, tables, &cost);
            }
        }

        res.methods.push_back(method);
        if (method == Marker::Fp) {
            ++cost.frames_fp;
            cost.reads_fp_frames += 2;
        } else {
            ++cost.frames_dwarf;
            cost.reads_dwarf_frames += 1;
        }

        if (step.status == UnwindStep::Status::MemoryFault) {
            res.termination = Termination::MemoryFault;
            break;
        }
        if (step.status == UnwindStep::Status::NoFde) {
            res.termination = Termination::InvalidStep;
            break;
        }
        if (step.sp <= sp) {
            // A step that makes no upward progress cannot be a caller frame.
            res.termination = Termination::InvalidStep;
            break;
        }
        pc = step.pc;
        sp = step.sp;
        fp = step.fp;
    }
    return res;
}

}  // namespace

UnwindResult unwind_hybrid(const VirtualProcess& process,
                           const RegisterSnapshot& regs, MarkerMap& markers,
                           const TableSet& tables, const UnwindConfig& config) {
    return walk(process, regs, UnwindMode::Hybrid, &markers, tables, config);
}

UnwindResult unwind_single(const VirtualProcess& process,
                           const RegisterSnapshot& regs, UnwindMode mode,
                           const TableSet& tables, const UnwindConfig& config) {
    return walk(process, regs, mode, nullptr, tables, config);
}

}  // namespace strata

#include "strata/vbin.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace strata {

using nlohmann::json;

namespace {

void check_function(const FunctionDef& f) {
    if (f.length == 0) throw Error("function " + f.name + " has zero length");
    if (f.fp_convention == FpConvention::Preserves && f.frame_size < 16)
        throw Error("function " + f.name +
                    " preserves FP but frame_size < 16");
    if (f.frame_size < 8)
        throw Error("function " + f.name + " frame_size < 8 (no RA slot)");
    // CFI must cover [offset, offset+length) without gaps or overlap.
    auto rules = f.cfi;
    std::sort(rules.begin(), rules.end(),
              [](const CfiRule& a, const CfiRule& b) { return a.pc_start < b.pc_start; });
    uint64_t at = f.offset;
    for (const auto& r : rules) {
        if (r.pc_start >= r.pc_end)
            throw Error("function " + f.name + " has empty CFI range");
        if (r.pc_start != at) {
            std::ostringstream os;
            os << "CFI gap in " << f.name << " at [" << at << ", " << r.pc_start << ")";
            throw Error(os.str());
        }
        at = r.pc_end;
    }
    if (at != f.end()) {
        std::ostringstream os;
        os << "CFI gap in " << f.name << " at [" << at << ", " << f.end() << ")";
        throw Error(os.str());
    }
}

std::string canonical_spec_bytes(const BinarySpec& spec) {
    // Stable serialization feeding the BuildId digest.
    std::ostringstream os;
    os << "strata-binary-v1\n" << spec.label << '\n' << spec.code_size << '\n';
    for (const auto& f : spec.functions) {
        os << f.name << ' ' << f.offset << ' ' << f.length << ' '
           << (f.fp_convention == FpConvention::Omits ? 'o' : 'p') << ' '
           << f.frame_size << '\n';
        for (const auto& r : f.cfi)
            os << "  " << r.pc_start << ' ' << r.pc_end << ' '
               << (r.kind == CfiRule::Kind::Indirect ? 'i' : 's') << ' '
               << (r.base == CfaBase::FP ? "FP" : "SP") << ' ' << r.cfa_offset
               << ' ' << r.load_offset << ' ' << r.add_offset << ' '
               << r.ra_slot_offset << '\n';
    }
    return os.str();
}

json rule_to_json(const CfiRule& r) {
    json j{{"pc_start", r.pc_start},
           {"pc_end", r.pc_end},
           {"ra_slot_offset", r.ra_slot_offset},
           {"base", r.base == CfaBase::FP ? "FP" : "SP"}};
    if (r.kind == CfiRule::Kind::Simple) {
        j["kind"] = "simple";
        j["cfa_offset"] = r.cfa_offset;
    } else {
        j["kind"] = "indirect";
        j["load_offset"] = r.load_offset;
        j["add_offset"] = r.add_offset;
    }
    return j;
}

CfiRule rule_from_json(const json& j) {
    CfiRule r;
    r.pc_start = j.at("pc_start").get<uint64_t>();
    r.pc_end = j.at("pc_end").get<uint64_t>();
    r.ra_slot_offset = j.at("ra_slot_offset").get<int64_t>();
    r.base = j.at("base").get<std::string>() == "FP" ? CfaBase::FP : CfaBase::SP;
    if (j.at("kind").get<std::string>() == "simple") {
        r.kind = CfiRule::Kind::Simple;
        r.cfa_offset = j.at("cfa_offset").get<int64_t>();
    } else {
        r.kind = CfiRule::Kind::Indirect;
        r.load_offset = j.at("load_offset").get<int64_t>();
        r.add_offset = j.at("add_offset").get<int64_t>();
    }
    return r;
}

json symbols_to_json(const std::vector<SymbolEntry>& entries) {
    json a = json::array();
    for (const auto& e : entries)
        a.push_back({{"start", e.start}, {"size", e.size}, {"name", e.name}});
    return a;
}

std::vector<SymbolEntry> symbols_from_json(const json& a) {
    std::vector<SymbolEntry> out;
    for (const auto& j : a)
        out.push_back({j.at("start").get<uint64_t>(), j.at("size").get<uint32_t>(),
                       j.at("name").get<std::string>()});
    return out;
}

}  // namespace

VirtualBinary build_binary(const BinarySpec& spec) {
    VirtualBinary bin;
    bin.code_size_ = spec.code_size;
    bin.functions_ = spec.functions;
    std::sort(bin.functions_.begin(), bin.functions_.end(),
              [](const FunctionDef& a, const FunctionDef& b) { return a.offset < b.offset; });
    uint64_t prev_end = 0;
    for (const auto& f : bin.functions_) {
        check_function(f);
        if (f.offset < prev_end) {
            std::ostringstream os;
            os << "overlapping functions at [" << f.offset << ", " << f.end()
               << ") (previous ends at " << prev_end << ")";
            throw Error(os.str());
        }
        if (f.end() > spec.code_size)
            throw Error("function " + f.name + " extends past code_size");
        prev_end = f.end();
    }

    if (spec.full_symbols) {
        bin.full_symbols_ = *spec.full_symbols;
    } else {
        for (const auto& f : bin.functions_)
            bin.full_symbols_.push_back({f.offset, uint32_t(f.length), f.name});
    }
    std::sort(bin.full_symbols_.begin(), bin.full_symbols_.end(),
              [](const SymbolEntry& a, const SymbolEntry& b) { return a.start < b.start; });
    bin.sparse_symbols_ = spec.sparse_symbols;
    if (bin.sparse_symbols_)
        std::sort(bin.sparse_symbols_->begin(), bin.sparse_symbols_->end(),
                  [](const SymbolEntry& a, const SymbolEntry& b) { return a.start < b.start; });

    bin.build_id_ = BuildId::digest(canonical_spec_bytes(spec));
    return bin;
}

const FunctionDef* VirtualBinary::function_at(uint64_t offset) const {
    auto it = std::upper_bound(
        functions_.begin(), functions_.end(), offset,
        [](uint64_t off, const FunctionDef& f) { return off < f.offset; });
    if (it == functions_.begin()) return nullptr;
    --it;
    return offset < it->end() ? &*it : nullptr;
}

const CfiRule* VirtualBinary::cfi_at(uint64_t offset) const {
    const FunctionDef* f = function_at(offset);
    if (!f) return nullptr;
    for (const auto& r : f->cfi)
        if (offset >= r.pc_start && offset < r.pc_end) return &r;
    return nullptr;
}

std::string VirtualBinary::to_json() const {
    json funcs = json::array();
    for (const auto& f : functions_) {
        json rules = json::array();
        for (const auto& r : f.cfi) rules.push_back(rule_to_json(r));
        funcs.push_back({{"name", f.name},
                         {"offset", f.offset},
                         {"length", f.length},
                         {"fp_convention",
                          f.fp_convention == FpConvention::Omits ? "omits" : "preserves"},
                         {"frame_size", f.frame_size},
                         {"cfi", rules}});
    }
    json j{{"build_id", build_id_.hex()},
           {"code_size", code_size_},
           {"functions", funcs},
           {"full_symbols", symbols_to_json(full_symbols_)}};
    if (sparse_symbols_) j["sparse_symbols"] = symbols_to_json(*sparse_symbols_);
    return j.dump(2);
}

VirtualBinary VirtualBinary::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("bad binary json: ") + e.what());
    }
    VirtualBinary bin;
    bin.build_id_ = BuildId::from_hex(j.at("build_id").get<std::string>());
    bin.code_size_ = j.at("code_size").get<uint64_t>();
    for (const auto& jf : j.at("functions")) {
        FunctionDef f;
        f.name = jf.at("name").get<std::string>();
        f.offset = jf.at("offset").get<uint64_t>();
        f.length = jf.at("length").get<uint64_t>();
        f.fp_convention = jf.at("fp_convention").get<std::string>() == "omits"
                              ? FpConvention::Omits
                              : FpConvention::Preserves;
        f.frame_size = jf.at("frame_size").get<uint64_t>();
        for (const auto& jr : jf.at("cfi")) f.cfi.push_back(rule_from_json(jr));
        bin.functions_.push_back(std::move(f));
    }
    bin.full_symbols_ = symbols_from_json(j.at("full_symbols"));
    if (j.contains("sparse_symbols"))
        bin.sparse_symbols_ = symbols_from_json(j.at("sparse_symbols"));
    return bin;
}

}  // namespace strata

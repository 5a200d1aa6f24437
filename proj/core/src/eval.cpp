#include "strata/eval.hpp"

#include <numeric>
#include <sstream>

#include "json.hpp"

namespace strata {

double frame_accuracy(const std::vector<FrameRef>& produced,
                      const GroundTruthStack& truth) {
    if (truth.frames.empty()) throw Error("empty ground truth");
    size_t matched = 0;
    size_t limit = std::min(produced.size(), truth.frames.size());
    for (size_t i = 0; i < limit; ++i)
        if (produced[i] == truth.frames[i]) ++matched;
    return double(matched) / double(truth.frames.size());
}

double ModeEval::reads_per_frame() const {
    return total_frames ? double(cost.stack_reads) / double(total_frames) : 0.0;
}
double ModeEval::probes_per_frame() const {
    return total_frames ? double(cost.table_probes) / double(total_frames) : 0.0;
}
double ModeEval::accesses_per_frame() const {
    return total_frames ? double(cost.total_accesses()) / double(total_frames) : 0.0;
}

ModeEval unwind_corpus_eval(const std::vector<CorpusSample>& corpus,
                            UnwindMode mode, const TableSet& tables,
                            MarkerMap* markers, const UnwindConfig& config) {
    if (corpus.empty()) throw Error("empty unwind corpus");
    ModeEval out;
    out.mode = mode;
    out.accuracies.reserve(corpus.size());
    for (const auto& sample : corpus) {
        const RegisterSnapshot& regs = sample.process.threads().front().registers;
        UnwindResult r =
            mode == UnwindMode::Hybrid
                ? unwind_hybrid(sample.process, regs, *markers, tables, config)
                : unwind_single(sample.process, regs, mode, tables, config);
        out.accuracies.push_back(frame_accuracy(r.frames, sample.truth));
        out.cost += r.cost;
        out.total_frames += r.frames.size();
    }
    out.mean_accuracy =
        std::accumulate(out.accuracies.begin(), out.accuracies.end(), 0.0) /
        double(out.accuracies.size());
    return out;
}

EvalReport evaluate_corpus(const std::vector<CorpusSample>& corpus,
                           double omit_function_fraction,
                           const UnwindConfig& config) {
    if (corpus.empty()) throw Error("empty unwind corpus");
    TableSet tables = compile_tables(corpus.front().process);
    MarkerMap markers;
    for (const auto& [id, bin] : corpus.front().process.binaries())
        markers.register_binary(*bin);

    EvalReport rep;
    rep.omit_function_fraction = omit_function_fraction;
    rep.fp_only = unwind_corpus_eval(corpus, UnwindMode::FpOnly, tables, nullptr, config);
    rep.dwarf_only =
        unwind_corpus_eval(corpus, UnwindMode::DwarfOnly, tables, nullptr, config);
    rep.hybrid_first_pass =
        unwind_corpus_eval(corpus, UnwindMode::Hybrid, tables, &markers, config);
    rep.hybrid_steady =
        unwind_corpus_eval(corpus, UnwindMode::Hybrid, tables, &markers, config);
    rep.marker_keys = markers.marked_count();
    rep.dwarf_keys = markers.dwarf_count();
    return rep;
}

namespace {

const char* mode_name(UnwindMode m) {
    switch (m) {
        case UnwindMode::FpOnly: return "fp-only";
        case UnwindMode::DwarfOnly: return "dwarf-only";
        case UnwindMode::Hybrid: return "hybrid";
    }
    return "?";
}

nlohmann::json mode_json(const ModeEval& m) {
    // 10-bin accuracy histogram.
    std::vector<int> hist(10, 0);
    for (double a : m.accuracies) {
        int b = std::min(9, int(a * 10.0));
        ++hist[b];
    }
    return {{"mode", mode_name(m.mode)},
            {"mean_accuracy", m.mean_accuracy},
            {"accuracy_histogram", hist},
            {"samples", m.accuracies.size()},
            {"frames", m.total_frames},
            {"stack_reads_per_frame", m.reads_per_frame()},
            {"table_probes_per_frame", m.probes_per_frame()},
            {"accesses_per_frame", m.accesses_per_frame()},
            {"validations", m.cost.validations},
            {"unmarked_branches", m.cost.unmarked_branches}};
}

void mode_text(std::ostringstream& os, const ModeEval& m) {
    os << "  " << mode_name(m.mode);
    if (m.mode == UnwindMode::Hybrid) os << " (pass)";
    os << ": mean accuracy " << m.mean_accuracy << ", reads/frame "
       << m.reads_per_frame() << ", probes/frame " << m.probes_per_frame()
       << ", accesses/frame " << m.accesses_per_frame() << "\n";
}

}  // namespace

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "unwind corpus evaluation (" << fp_only.accuracies.size()
       << " samples)\n";
    mode_text(os, fp_only);
    mode_text(os, dwarf_only);
    os << "  hybrid pass 1: mean accuracy " << hybrid_first_pass.mean_accuracy
       << ", unmarked branches " << hybrid_first_pass.cost.unmarked_branches
       << "\n";
    os << "  hybrid steady: mean accuracy " << hybrid_steady.mean_accuracy
       << ", reads/frame " << hybrid_steady.reads_per_frame()
       << ", accesses/frame " << hybrid_steady.accesses_per_frame()
       << ", unmarked branches " << hybrid_steady.cost.unmarked_branches
       << "\n";
    os << "  markers: " << marker_keys << " keys, " << dwarf_keys
       << " dwarf (fraction "
       << (marker_keys ? double(dwarf_keys) / double(marker_keys) : 0.0)
       << ", configured omit fraction " << omit_function_fraction << ")\n";
    return os.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json j{
        {"fp_only", mode_json(fp_only)},
        {"dwarf_only", mode_json(dwarf_only)},
        {"hybrid_first_pass", mode_json(hybrid_first_pass)},
        {"hybrid_steady", mode_json(hybrid_steady)},
        {"marker_keys", marker_keys},
        {"dwarf_keys", dwarf_keys},
        {"dwarf_key_fraction",
         marker_keys ? double(dwarf_keys) / double(marker_keys) : 0.0},
        {"omit_function_fraction", omit_function_fraction}};
    return j.dump(2);
}

}  // namespace strata

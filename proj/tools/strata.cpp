// strata: operator CLI for the simulation + profiling + diagnosis pipeline.
//
// Exit codes: 0 success (diagnose: healthy verdict), 2 usage/input error,
// 3 diagnose produced a non-healthy verdict.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "strata/bundle.hpp"
#include "strata/svg.hpp"
#include "strata/unwind_corpus.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitUnhealthy = 3;

// Config-file values act as defaults: they apply only to options the user
// did not pass on the command line (flags > config file > built-ins).
class ConfigFile {
  public:
    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw strata::Error("cannot read config file: " + path);
        values_ = json::parse(in);
        if (!values_.is_object())
            throw strata::Error("config file must hold a JSON object");
    }

    template <typename T>
    void apply(const CLI::Option* opt, const std::string& key, T& target) const {
        if (opt->count() > 0) return;
        if (values_.contains(key)) target = values_.at(key).get<T>();
    }

  private:
    json values_ = json::object();
};

void write_text(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw strata::Error("cannot write " + p.string());
    out << content;
}

std::vector<uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw strata::Error("cannot read " + p.string());
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& scenario_name_arg, int ranks,
                 int iterations, uint64_t seed, double magnitude,
                 bool magnitude_set, const std::string& out) {
    strata::Scenario scenario = strata::scenario_from_name(scenario_name_arg);
    strata::ScenarioSpec spec = strata::default_spec(scenario, seed);
    spec.ranks = ranks;
    spec.iterations = iterations;
    if (scenario == strata::Scenario::Logging ||
        scenario == strata::Scenario::IoBottleneck)
        spec.onset_iteration = iterations / 2;
    if (magnitude_set) spec.magnitude = magnitude;

    strata::SimulationResult result = strata::simulate(spec);
    strata::write_bundle(result, out);
    std::cout << "bundle " << out << " digest "
              << strata::bundle_digest(out).hex() << "\n";
    return kExitOk;
}

int cmd_diagnose(const std::string& bundle_dir, int window, double k,
                 double delta, const std::string& out) {
    strata::LoadedBundle bundle = strata::load_bundle(bundle_dir);
    strata::DiagnosisConfig config;
    config.window_iterations = window;
    config.k = k;
    config.delta = delta;

    strata::GroupData data = strata::build_group_data(bundle, config);
    strata::DiagnosisReport report = strata::diagnose(data, config);

    fs::create_directories(out);
    write_text(fs::path(out) / "report.json", report.to_json() + "\n");
    if (report.reference_rank) {
        for (int rank : report.flagged_ranks) {
            if (!data.cpu_profiles.count(rank) ||
                !data.cpu_profiles.count(*report.reference_rank))
                continue;
            write_text(fs::path(out) / "diffs" /
                           ("rank_" + std::to_string(rank) + "_vs_" +
                            std::to_string(*report.reference_rank) + ".folded"),
                       strata::diff_folded(
                           data.cpu_profiles.at(rank),
                           data.cpu_profiles.at(*report.reference_rank)));
        }
    }
    std::cout << report.to_text();
    return report.verdict == strata::Verdict::Healthy ? kExitOk
                                                      : kExitUnhealthy;
}

strata::FoldedProfile rank_profile(const strata::GroupData& data, int rank) {
    auto it = data.cpu_profiles.find(rank);
    if (it == data.cpu_profiles.end())
        throw strata::Error("unknown rank id: " + std::to_string(rank));
    return it->second;
}

int cmd_flamegraph(const std::string& bundle_dir, int rank,
                   const std::string& out) {
    strata::LoadedBundle bundle = strata::load_bundle(bundle_dir);
    strata::GroupData data = strata::build_group_data(bundle);
    strata::FoldedProfile profile = rank_profile(data, rank);
    strata::SvgOptions opts;
    opts.title = "rank " + std::to_string(rank) + " (" + bundle.scenario + ")";
    write_text(out + ".folded", profile.to_string());
    write_text(out + ".svg", strata::render_flamegraph(profile, opts));
    std::cout << "wrote " << out << ".folded and " << out << ".svg\n";
    return kExitOk;
}

int cmd_diff(const std::string& bundle_dir, int rank_a, int rank_b,
             const std::string& out) {
    strata::LoadedBundle bundle = strata::load_bundle(bundle_dir);
    strata::GroupData data = strata::build_group_data(bundle);
    strata::FoldedProfile a = rank_profile(data, rank_a);
    strata::FoldedProfile b = rank_profile(data, rank_b);
    strata::SvgOptions opts;
    opts.title = "rank " + std::to_string(rank_a) + " vs rank " +
                 std::to_string(rank_b) + " (" + bundle.scenario + ")";
    write_text(out + ".folded", strata::diff_folded(a, b));
    write_text(out + ".svg", strata::render_diff_flamegraph(a, b, opts));
    std::cout << "wrote " << out << ".folded and " << out << ".svg\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// symbols subcommands

int cmd_symbols_pack(const std::string& binary_path, const std::string& table,
                     const std::string& out) {
    std::ifstream in(binary_path);
    if (!in) throw strata::Error("cannot read " + binary_path);
    std::ostringstream os;
    os << in.rdbuf();
    strata::VirtualBinary bin = strata::VirtualBinary::from_json(os.str());
    const std::vector<strata::SymbolEntry>* entries = &bin.full_symbols();
    if (table == "sparse") {
        if (!bin.sparse_symbols())
            throw strata::Error("binary has no sparse symbol table");
        entries = &*bin.sparse_symbols();
    } else if (table != "full") {
        throw strata::Error("table must be 'full' or 'sparse'");
    }
    std::vector<uint8_t> bytes = strata::pack_symbols(bin.build_id(), *entries);
    write_text(out, std::string(bytes.begin(), bytes.end()));
    std::cout << "packed " << entries->size() << " entries for "
              << bin.build_id().hex() << "\n";
    return kExitOk;
}

int cmd_symbols_ingest(const std::string& repo_dir, const std::string& file) {
    std::vector<uint8_t> payload = read_bytes(file);
    strata::SymbolFile parsed = strata::parse_symbols(payload);
    strata::SymbolRepository repo(repo_dir);
    strata::IngestOutcome outcome = repo.ingest(parsed.build_id(), payload);
    std::cout << (outcome == strata::IngestOutcome::Stored ? "stored "
                                                           : "already-present ")
              << parsed.build_id().hex() << "\n";
    return kExitOk;
}

int cmd_symbols_resolve(const std::string& repo_dir, const std::string& mode,
                        const std::string& stacks_path) {
    strata::SymbolFile::LookupMode lookup;
    if (mode == "exact-range")
        lookup = strata::SymbolFile::LookupMode::ExactRange;
    else if (mode == "nearest-lower")
        lookup = strata::SymbolFile::LookupMode::NearestLower;
    else
        throw strata::Error("mode must be 'exact-range' or 'nearest-lower'");

    std::ifstream in(stacks_path);
    if (!in) throw strata::Error("cannot read " + stacks_path);
    std::vector<std::vector<strata::FrameRef>> stacks;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        json j = json::parse(line);
        std::vector<strata::FrameRef> stack;
        for (const auto& f : j)
            stack.push_back({strata::BuildId::from_hex(f.at(0).get<std::string>()),
                             f.at(1).get<uint64_t>()});
        stacks.push_back(std::move(stack));
    }

    strata::SymbolRepository repo(repo_dir);
    auto resolved = strata::resolve_stacks(stacks, repo, lookup);
    std::map<std::string, size_t> leaf_counts;
    size_t total = 0;
    for (const auto& stack : resolved) {
        std::string joined;
        for (size_t i = 0; i < stack.size(); ++i) {
            if (i) joined += ";";
            joined += stack[i];
        }
        std::cout << joined << "\n";
        if (!stack.empty()) {
            ++leaf_counts[stack.front()];
            ++total;
        }
    }
    if (total > 0) {
        auto top = std::max_element(leaf_counts.begin(), leaf_counts.end(),
                                    [](const auto& a, const auto& b) {
                                        return a.second < b.second;
                                    });
        std::cout << "# concentration: " << top->first << " "
                  << double(top->second) / double(total) << "\n";
    }
    return kExitOk;
}

int cmd_symbols_demo(const std::string& out) {
    strata::MisattributionCorpus corpus =
        strata::generate_misattribution_corpus();
    fs::create_directories(out);
    write_text(fs::path(out) / "binary.json", corpus.binary->to_json());
    auto full = strata::pack_symbols(corpus.binary->build_id(),
                                     corpus.binary->full_symbols());
    auto sparse = strata::pack_symbols(corpus.binary->build_id(),
                                       *corpus.binary->sparse_symbols());
    write_text(fs::path(out) / "full.symr",
               std::string(full.begin(), full.end()));
    write_text(fs::path(out) / "sparse.symr",
               std::string(sparse.begin(), sparse.end()));
    std::ostringstream os;
    for (const auto& stack : corpus.stacks) {
        json j = json::array();
        for (const auto& f : stack) j.push_back({f.build_id.hex(), f.offset});
        os << j.dump() << "\n";
    }
    write_text(fs::path(out) / "stacks.jsonl", os.str());
    std::cout << "wrote misattribution corpus to " << out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_unwind_eval(size_t samples, double omit_fraction,
                    double indirect_fraction, uint64_t seed,
                    const std::string& mode, const std::string& out) {
    strata::UnwindCorpusParams params;
    params.samples = samples;
    params.omit_fraction = omit_fraction;
    params.indirect_fraction = indirect_fraction;
    params.seed = seed;
    strata::UnwindCorpus corpus = strata::generate_unwind_corpus(params);
    strata::EvalReport report =
        strata::evaluate_corpus(corpus.samples, corpus.omit_fraction);

    if (mode == "fp")
        std::cout << "fp-only mean accuracy " << report.fp_only.mean_accuracy
                  << "\n";
    else if (mode == "dwarf")
        std::cout << "dwarf-only mean accuracy "
                  << report.dwarf_only.mean_accuracy << "\n";
    else if (mode == "hybrid")
        std::cout << "hybrid mean accuracy "
                  << report.hybrid_first_pass.mean_accuracy << "\n";
    else
        std::cout << report.to_text();
    if (!out.empty()) write_text(out, report.to_json() + "\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"strata: simulate, profile, and diagnose a virtual training cluster"};
    app.require_subcommand(1);

    ConfigFile config;
    std::string config_path;
    app.add_option("--config", config_path,
                   "JSON config file; flags override its values")
        ->check(CLI::ExistingFile);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a trace bundle");
    std::string scenario = "healthy", sim_out = "bundle";
    int ranks = 8, iterations = 300;
    uint64_t seed = 1;
    double magnitude = 0.0;
    auto* sim_scenario = sim->add_option("--scenario", scenario,
                                         "healthy|thermal|softirq|dentry-lock|"
                                         "logging|io-bottleneck");
    auto* sim_ranks = sim->add_option("--ranks", ranks, "rank count (>= 2)");
    auto* sim_iters = sim->add_option("--iterations", iterations, "iterations");
    auto* sim_seed = sim->add_option("--seed", seed, "rng seed");
    auto* sim_mag = sim->add_option("--magnitude", magnitude,
                                    "override the scenario's fault magnitude");
    sim->add_option("--out", sim_out, "output bundle directory");

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "Diagnose a trace bundle");
    std::string bundle_dir, diag_out = "out";
    int window = 100;
    double k = 2.0, delta = 0.005;
    diag->add_option("--bundle", bundle_dir, "bundle directory")
        ->envname("STRATA_BUNDLE");
    auto* diag_window = diag->add_option("--window", window, "window iterations");
    auto* diag_k = diag->add_option("--k", k, "waterline multiplier");
    auto* diag_delta = diag->add_option("--delta", delta, "degradation delta");
    diag->add_option("--out", diag_out, "report output directory");

    // flamegraph
    auto* flame = app.add_subcommand("flamegraph", "Render one rank's profile");
    std::string flame_bundle, flame_out = "flame";
    int flame_rank = 0;
    flame->add_option("--bundle", flame_bundle, "bundle directory")
        ->envname("STRATA_BUNDLE");
    flame->add_option("--rank", flame_rank, "rank id");
    flame->add_option("--out", flame_out, "output path prefix");

    // diff
    auto* diff = app.add_subcommand("diff", "Differential flame graph");
    std::string diff_bundle, diff_out = "diff";
    int rank_a = 0, rank_b = 1;
    diff->add_option("--bundle", diff_bundle, "bundle directory")
        ->envname("STRATA_BUNDLE");
    diff->add_option("--rank-a", rank_a, "baseline rank");
    diff->add_option("--rank-b", rank_b, "comparison rank");
    diff->add_option("--out", diff_out, "output path prefix");

    // symbols
    auto* symbols = app.add_subcommand("symbols", "Symbol repository tools");
    symbols->require_subcommand(1);
    auto* pack = symbols->add_subcommand("pack", "Pack a symbol file");
    std::string pack_binary, pack_table = "full", pack_out = "symbols.symr";
    pack->add_option("--binary", pack_binary, "virtual binary JSON")->required();
    pack->add_option("--table", pack_table, "full|sparse");
    pack->add_option("--out", pack_out, "output symbol file");
    auto* ingest = symbols->add_subcommand("ingest", "Ingest into a repository");
    std::string ingest_repo = "repo", ingest_file;
    ingest->add_option("--repo", ingest_repo, "repository root");
    ingest->add_option("--file", ingest_file, "symbol file")->required();
    auto* resolve = symbols->add_subcommand("resolve", "Resolve stack files");
    std::string resolve_repo = "repo", resolve_mode = "exact-range",
                resolve_stacks;
    resolve->add_option("--repo", resolve_repo, "repository root");
    resolve->add_option("--mode", resolve_mode, "exact-range|nearest-lower");
    resolve->add_option("--stacks", resolve_stacks, "stacks jsonl")->required();
    auto* demo = symbols->add_subcommand(
        "demo-misattribution", "Emit the misattribution demo corpus");
    std::string demo_out = "misattribution";
    demo->add_option("--out", demo_out, "output directory");

    // unwind-eval
    auto* ue = app.add_subcommand("unwind-eval", "Evaluate unwinder modes");
    size_t ue_samples = 10'000;
    double omit_fraction = 0.20, indirect_fraction = 0.0;
    uint64_t ue_seed = 1;
    std::string ue_mode = "all", ue_out = "unwind_eval.json";
    auto* ue_samples_opt = ue->add_option("--samples", ue_samples, "corpus size");
    auto* ue_omit = ue->add_option("--omit-fraction", omit_fraction,
                                   "omits-FP function fraction");
    ue->add_option("--indirect-fraction", indirect_fraction,
                   "Indirect-CFI fraction of omits functions");
    auto* ue_seed_opt = ue->add_option("--seed", ue_seed, "rng seed");
    ue->add_option("--mode", ue_mode, "fp|dwarf|hybrid|all");
    ue->add_option("--out", ue_out, "json output path (empty to skip)");

    try {
        app.parse(argc, argv);
        if (!config_path.empty()) config.load(config_path);
        config.apply(sim_scenario, "scenario", scenario);
        config.apply(sim_ranks, "ranks", ranks);
        config.apply(sim_iters, "iterations", iterations);
        config.apply(sim_seed, "seed", seed);
        config.apply(diag_window, "window", window);
        config.apply(diag_k, "k", k);
        config.apply(diag_delta, "delta", delta);
        config.apply(ue_samples_opt, "samples", ue_samples);
        config.apply(ue_omit, "omit_fraction", omit_fraction);
        config.apply(ue_seed_opt, "seed", ue_seed);

        if (sim->parsed())
            return cmd_simulate(scenario, ranks, iterations, seed, magnitude,
                                sim_mag->count() > 0, sim_out);
        if (diag->parsed())
            return cmd_diagnose(bundle_dir, window, k, delta, diag_out);
        if (flame->parsed())
            return cmd_flamegraph(flame_bundle, flame_rank, flame_out);
        if (diff->parsed()) return cmd_diff(diff_bundle, rank_a, rank_b, diff_out);
        if (symbols->parsed()) {
            if (pack->parsed())
                return cmd_symbols_pack(pack_binary, pack_table, pack_out);
            if (ingest->parsed())
                return cmd_symbols_ingest(ingest_repo, ingest_file);
            if (resolve->parsed())
                return cmd_symbols_resolve(resolve_repo, resolve_mode,
                                           resolve_stacks);
            if (demo->parsed()) return cmd_symbols_demo(demo_out);
        }
        if (ue->parsed())
            return cmd_unwind_eval(ue_samples, omit_fraction, indirect_fraction,
                                   ue_seed, ue_mode, ue_out);
        std::cerr << "no subcommand\n";
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

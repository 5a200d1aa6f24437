#include "strata/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace strata {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << content;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("missing bundle file: " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json sample_to_json(const StackSample& s) {
    json frames = json::array();
    for (const FrameRef& f : s.frames)
        frames.push_back({f.build_id.hex(), f.offset});
    std::string spaces;
    for (AddressSpace a : s.spaces)
        spaces += a == AddressSpace::Kernel ? 'k' : 'u';
    return {{"ts", s.timestamp_ns},
            {"rank", s.rank},
            {"thread", s.thread},
            {"frames", frames},
            {"spaces", spaces}};
}

StackSample sample_from_json(const json& j) {
    StackSample s;
    s.timestamp_ns = j.at("ts").get<int64_t>();
    s.rank = j.at("rank").get<int>();
    s.thread = j.at("thread").get<int>();
    for (const auto& f : j.at("frames"))
        s.frames.push_back({BuildId::from_hex(f.at(0).get<std::string>()),
                            f.at(1).get<uint64_t>()});
    for (char c : j.at("spaces").get<std::string>())
        s.spaces.push_back(c == 'k' ? AddressSpace::Kernel : AddressSpace::User);
    return s;
}

json os_to_json(const OsCounterRecord& r) {
    return {{"rank", r.rank},
            {"window_start", r.window_start_ns},
            {"interrupts", r.snapshot.interrupts},
            {"softirqs", r.snapshot.softirqs},
            {"sched_delay_p50_ns", r.snapshot.sched_delay_p50_ns},
            {"sched_delay_p99_ns", r.snapshot.sched_delay_p99_ns},
            {"numa_migrations", r.snapshot.numa_migrations}};
}

OsCounterRecord os_from_json(const json& j) {
    OsCounterRecord r;
    r.rank = j.at("rank").get<int>();
    r.window_start_ns = j.at("window_start").get<int64_t>();
    r.snapshot.interrupts =
        j.at("interrupts").get<std::map<std::string, int64_t>>();
    r.snapshot.softirqs = j.at("softirqs").get<std::map<std::string, int64_t>>();
    r.snapshot.sched_delay_p50_ns = j.at("sched_delay_p50_ns").get<int64_t>();
    r.snapshot.sched_delay_p99_ns = j.at("sched_delay_p99_ns").get<int64_t>();
    r.snapshot.numa_migrations = j.at("numa_migrations").get<int64_t>();
    return r;
}

}  // namespace

void write_bundle(const SimulationResult& result, const fs::path& dir) {
    fs::create_directories(dir);

    json meta{{"scenario", scenario_name(result.spec.scenario)},
              {"seed", result.spec.seed},
              {"ranks", result.spec.ranks},
              {"iterations", result.spec.iterations},
              {"sample_rate_hz", result.spec.sample_rate_hz},
              {"group", 0},
              {"max_skew_ns", 50'000'000},
              {"window_start_ns", result.window_start_ns},
              {"window_end_ns", result.window_end_ns},
              {"baseline",
               {{"epoch", result.baseline.epoch},
                {"delta", result.baseline.delta},
                {"iteration_ms", result.baseline_iteration_ms},
                {"fractions", result.baseline.fractions}}}};
    std::vector<int> group_ranks;
    for (int r = 0; r < result.spec.ranks; ++r) group_ranks.push_back(r);
    meta["group_ranks"] = group_ranks;
    write_file(dir / "meta.json", meta.dump(2) + "\n");

    {
        std::ostringstream os;
        for (const auto& [rank, stream] : result.samples)
            for (const StackSample& s : stream)
                os << sample_to_json(s).dump() << "\n";
        write_file(dir / "samples.jsonl", os.str());
    }
    {
        std::ostringstream os;
        for (const GpuEvent& e : result.gpu_events)
            os << json{{"rank", e.rank},
                       {"iter", e.iteration},
                       {"kernel", e.kernel},
                       {"start", e.start_ns},
                       {"dur", e.duration_ns}}
                      .dump()
               << "\n";
        write_file(dir / "gpu_events.jsonl", os.str());
    }
    {
        std::ostringstream os;
        for (const CollectiveEvent& e : result.collectives)
            os << json{{"rank", e.rank},
                       {"group", e.group},
                       {"kind", collective_kind_name(e.kind)},
                       {"entry", e.host_entry_ns},
                       {"exit", e.host_exit_ns},
                       {"gpu_duration", e.gpu_duration_ns}}
                      .dump()
               << "\n";
        write_file(dir / "collectives.jsonl", os.str());
    }
    {
        std::ostringstream os;
        for (const OsCounterRecord& r : result.os_counters)
            os << os_to_json(r).dump() << "\n";
        write_file(dir / "os_counters.jsonl", os.str());
    }

    for (const auto& bin : result.binaries)
        write_file(dir / "binaries" / (bin->build_id().hex() + ".json"),
                   bin->to_json());

    SymbolRepository repo(dir);
    for (const auto& bin : result.binaries) {
        std::vector<uint8_t> payload =
            pack_symbols(bin->build_id(), bin->full_symbols());
        repo.ingest(bin->build_id(), payload);
    }

    json labels{{"verdict", verdict_name(result.label.expected_verdict)},
                {"affected_ranks", result.label.affected_ranks},
                {"injected_path", result.label.injected_path},
                {"onset_iteration", result.label.onset_iteration}};
    json skews = json::object();
    for (const auto& [rank, skew] : result.injected_skew_ns)
        skews[std::to_string(rank)] = skew;
    labels["injected_skew_ns"] = skews;
    write_file(dir / "labels.json", labels.dump(2) + "\n");
}

BuildId bundle_digest(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::string blob;
    for (const fs::path& p : files) {
        blob += fs::relative(p, dir).generic_string();
        blob += '\0';
        blob += read_file(p);
        blob += '\0';
    }
    return BuildId::digest(blob);
}

LoadedBundle load_bundle(const fs::path& dir) {
    LoadedBundle b;
    b.dir = dir;

    json meta = json::parse(read_file(dir / "meta.json"));
    b.scenario = meta.at("scenario").get<std::string>();
    b.seed = meta.at("seed").get<uint64_t>();
    b.ranks = meta.at("ranks").get<int>();
    b.group = meta.at("group").get<int>();
    b.group_ranks = meta.at("group_ranks").get<std::vector<int>>();
    b.max_skew_ns = meta.at("max_skew_ns").get<int64_t>();
    b.window_start_ns = meta.at("window_start_ns").get<int64_t>();
    b.window_end_ns = meta.at("window_end_ns").get<int64_t>();
    const json& base = meta.at("baseline");
    b.baseline.group = b.group;
    b.baseline.epoch = base.at("epoch").get<std::string>();
    b.baseline.delta = base.at("delta").get<double>();
    b.baseline.fractions =
        base.at("fractions").get<std::map<std::string, double>>();
    b.baseline_iteration_ms = base.at("iteration_ms").get<double>();

    std::istringstream samples(read_file(dir / "samples.jsonl"));
    for (std::string line; std::getline(samples, line);) {
        if (line.empty()) continue;
        StackSample s = sample_from_json(json::parse(line));
        b.samples[s.rank].push_back(std::move(s));
    }
    std::istringstream collectives(read_file(dir / "collectives.jsonl"));
    for (std::string line; std::getline(collectives, line);) {
        if (line.empty()) continue;
        json j = json::parse(line);
        b.collectives.push_back(
            {j.at("rank").get<int>(), j.at("group").get<int>(),
             collective_kind_from_name(j.at("kind").get<std::string>()),
             j.at("entry").get<int64_t>(), j.at("exit").get<int64_t>(),
             j.at("gpu_duration").get<int64_t>()});
    }
    std::istringstream gpu(read_file(dir / "gpu_events.jsonl"));
    for (std::string line; std::getline(gpu, line);) {
        if (line.empty()) continue;
        json j = json::parse(line);
        b.gpu_events.push_back({j.at("rank").get<int>(), j.at("iter").get<int>(),
                                j.at("kernel").get<std::string>(),
                                j.at("start").get<int64_t>(),
                                j.at("dur").get<int64_t>()});
    }
    std::istringstream osc(read_file(dir / "os_counters.jsonl"));
    for (std::string line; std::getline(osc, line);) {
        if (line.empty()) continue;
        b.os_counters.push_back(os_from_json(json::parse(line)));
    }
    return b;
}

GroundTruthLabel load_labels(const fs::path& dir) {
    json j = json::parse(read_file(dir / "labels.json"));
    GroundTruthLabel label;
    std::string v = j.at("verdict").get<std::string>();
    for (Verdict cand :
         {Verdict::Healthy, Verdict::GpuUniformSlowdown,
          Verdict::GpuSpecificKernel, Verdict::CpuInterference,
          Verdict::OsInterference, Verdict::TemporalDegradation,
          Verdict::Inconclusive})
        if (verdict_name(cand) == v) label.expected_verdict = cand;
    label.affected_ranks = j.at("affected_ranks").get<std::vector<int>>();
    label.injected_path =
        j.at("injected_path").get<std::vector<std::string>>();
    label.onset_iteration = j.at("onset_iteration").get<int>();
    return label;
}

GroupData build_group_data(const LoadedBundle& bundle,
                           const DiagnosisConfig& config) {
    GroupData data;
    data.group = bundle.group;
    data.baseline = bundle.baseline;
    data.baseline_iteration_ms = bundle.baseline_iteration_ms;

    MatchConfig match_cfg{bundle.max_skew_ns};
    std::vector<CollectiveInstance> instances =
        match_collectives(bundle.collectives, bundle.group_ranks, match_cfg);
    auto offsets = align_clocks(instances);
    std::map<int, int64_t> off =
        offsets ? *offsets : std::map<int, int64_t>{};
    auto offset_of = [&](int rank) {
        auto it = off.find(rank);
        return it == off.end() ? int64_t(0) : it->second;
    };

    // Windowed complete instances, ordered by aligned exit.
    std::vector<std::pair<int64_t, const CollectiveInstance*>> windowed;
    for (const CollectiveInstance& inst : instances) {
        if (inst.partial) continue;
        int64_t max_exit = 0;
        for (const auto& [rank, e] : inst.events)
            max_exit = std::max(max_exit, e.host_exit_ns - offset_of(rank));
        if (max_exit >= bundle.window_start_ns) windowed.emplace_back(max_exit, &inst);
    }
    std::sort(windowed.begin(), windowed.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [exit, inst] : windowed)
        data.lateness_per_instance.push_back(entry_lateness(*inst, off));
    for (size_t i = 1; i < windowed.size(); ++i)
        data.iteration_times_ms.push_back(
            double(windowed[i].first - windowed[i - 1].first) / 1e6);

    // CPU profiles over the window, symbolized exact-range.
    SymbolRepository repo(bundle.dir);
    for (const auto& [rank, stream] : bundle.samples) {
        std::vector<StackSample> in_window;
        for (const StackSample& s : stream)
            if (s.timestamp_ns - offset_of(rank) >= bundle.window_start_ns)
                in_window.push_back(s);
        if (in_window.empty()) continue;
        std::vector<ProfileWindow> windows = aggregate_samples(
            in_window, bundle.window_end_ns - bundle.window_start_ns +
                           2 * bundle.max_skew_ns);
        data.cpu_profiles.emplace(
            rank, to_folded(windows, repo, SymbolFile::LookupMode::ExactRange));
    }

    // GPU kernel totals over the window.
    for (const GpuEvent& e : bundle.gpu_events) {
        if (e.start_ns - offset_of(e.rank) < bundle.window_start_ns) continue;
        data.gpu_profiles[e.rank].kernel_time_ns[e.kernel] += e.duration_ns;
    }

    // OS counters summed over windows intersecting the analysis window.
    for (const OsCounterRecord& r : bundle.os_counters) {
        int64_t start = r.window_start_ns - offset_of(r.rank);
        if (start + 5'000'000'000ll < bundle.window_start_ns) continue;
        OsSnapshot& acc = data.os_snapshots[r.rank];
        for (const auto& [k, v] : r.snapshot.interrupts) acc.interrupts[k] += v;
        for (const auto& [k, v] : r.snapshot.softirqs) acc.softirqs[k] += v;
        acc.sched_delay_p50_ns =
            std::max(acc.sched_delay_p50_ns, r.snapshot.sched_delay_p50_ns);
        acc.sched_delay_p99_ns =
            std::max(acc.sched_delay_p99_ns, r.snapshot.sched_delay_p99_ns);
        acc.numa_migrations += r.snapshot.numa_migrations;
    }

    (void)config;
    return data;
}

}  // namespace strata

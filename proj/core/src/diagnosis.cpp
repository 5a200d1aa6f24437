#include "strata/diagnosis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace strata {

namespace {

double population_stddev(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / double(v.size()));
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Waterline

Waterline compute_waterline(const std::map<int, FoldedProfile>& per_rank,
                            int group, int window_iterations, double k) {
    if (per_rank.size() < 2)
        throw Error("waterline requires at least 2 ranks");
    Waterline w;
    w.group = group;
    w.window_iterations = window_iterations;
    w.k = k;

    std::map<std::string, std::vector<double>> fractions;
    for (const auto& [rank, profile] : per_rank)
        for (const auto& [name, frac] : profile.inclusive_fractions())
            fractions[name].push_back(frac);
    size_t n_ranks = per_rank.size();
    for (auto& [name, v] : fractions) {
        v.resize(n_ranks, 0.0);  // ranks lacking the function contribute 0
        double mu = mean_of(v);
        w.functions[name] = {mu, population_stddev(v, mu)};
    }
    return w;
}

std::vector<FlaggedFunction> flag_ranks(
    const Waterline& waterline, const std::map<int, FoldedProfile>& per_rank) {
    std::vector<FlaggedFunction> out;
    for (const auto& [rank, profile] : per_rank) {
        for (const auto& [name, frac] : profile.inclusive_fractions()) {
            auto it = waterline.functions.find(name);
            if (it == waterline.functions.end()) continue;
            double threshold =
                it->second.mean + waterline.k * it->second.stddev;
            if (frac > threshold)
                out.push_back({rank, name, frac, threshold});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Straggler detection

std::vector<StragglerAlert> detect_straggler(
    const std::vector<std::map<int, double>>& lateness_per_instance, int group,
    double k) {
    std::map<int, size_t> flags;
    std::map<int, std::vector<double>> lateness;
    std::map<int, std::vector<double>> z_scores;
    for (const auto& inst : lateness_per_instance) {
        if (inst.size() < 2) continue;
        std::vector<double> v;
        v.reserve(inst.size());
        for (const auto& [rank, l] : inst) v.push_back(l);
        double mu = mean_of(v);
        double sigma = population_stddev(v, mu);
        for (const auto& [rank, l] : inst) {
            lateness[rank].push_back(l);
            if (sigma > 0.0 && l > mu + k * sigma) {
                ++flags[rank];
                z_scores[rank].push_back((l - mu) / sigma);
            }
        }
    }
    std::vector<StragglerAlert> out;
    size_t n = lateness_per_instance.size();
    for (const auto& [rank, count] : flags) {
        if (count * 2 <= n) continue;  // persistence: > 50% of instances
        StragglerAlert a;
        a.rank = rank;
        a.group = group;
        a.mean_lateness_ms = mean_of(lateness[rank]);
        a.z_score = mean_of(z_scores[rank]);
        a.flagged_instances = count;
        a.window_instances = n;
        out.push_back(a);
    }
    return out;
}

// ---------------------------------------------------------------------------
// GPU differential

int64_t GpuProfile::total_time_ns() const {
    int64_t t = 0;
    for (const auto& [name, ns] : kernel_time_ns) t += ns;
    return t;
}

GpuDiffResult gpu_diff(const GpuProfile& straggler, const GpuProfile& reference,
                       const GpuDiffConfig& config) {
    GpuDiffResult r;
    std::vector<double> slowdowns;
    int64_t total_added = 0;
    for (const auto& [name, t_ref] : reference.kernel_time_ns) {
        if (t_ref < config.ref_floor_ns) continue;
        if (!config.exclude_prefix.empty() &&
            name.rfind(config.exclude_prefix, 0) == 0)
            continue;
        auto it = straggler.kernel_time_ns.find(name);
        if (it == straggler.kernel_time_ns.end()) continue;
        double s = double(it->second) / double(t_ref) - 1.0;
        r.slowdown[name] = s;
        slowdowns.push_back(s);
        int64_t added = it->second - t_ref;
        if (added > 0) {
            total_added += added;
            if (r.top_kernel.empty() ||
                added > straggler.kernel_time_ns.at(r.top_kernel) -
                            reference.kernel_time_ns.at(r.top_kernel)) {
                r.top_kernel = name;
            }
        }
    }
    if (slowdowns.empty()) {
        r.data_insufficient = true;
        return r;
    }
    r.median_slowdown = median_of(slowdowns);
    double mu = mean_of(slowdowns);
    double sigma = population_stddev(slowdowns, mu);
    r.slowdown_cv = mu != 0.0 ? std::abs(sigma / mu) : 0.0;
    if (!r.top_kernel.empty() && total_added > 0) {
        int64_t top_added = straggler.kernel_time_ns.at(r.top_kernel) -
                            reference.kernel_time_ns.at(r.top_kernel);
        r.top_added_share = double(top_added) / double(total_added);
    }

    if (r.median_slowdown <= config.median_none) {
        r.verdict = GpuVerdict::None;
    } else if (r.median_slowdown > config.median_uniform &&
               r.slowdown_cv < config.cv_uniform) {
        r.verdict = GpuVerdict::Uniform;
    } else if (r.top_added_share > config.top_share_specific) {
        r.verdict = GpuVerdict::SpecificKernel;
    } else {
        r.verdict = GpuVerdict::None;
    }
    return r;
}

// ---------------------------------------------------------------------------
// CPU differential

std::vector<CpuPathDelta> cpu_diff(const FoldedProfile& straggler,
                                   const FoldedProfile& reference,
                                   double delta) {
    auto frac_s = straggler.inclusive_fractions();
    auto frac_r = reference.inclusive_fractions();

    // Hottest stack path through each flagged function on the straggler.
    auto hottest_path = [&](const std::string& fn) {
        const FoldedProfile::Line* best = nullptr;
        for (const auto& line : straggler.lines) {
            if (std::find(line.frames.begin(), line.frames.end(), fn) ==
                line.frames.end())
                continue;
            if (!best || line.count > best->count) best = &line;
        }
        return best ? best->frames : std::vector<std::string>{};
    };

    std::vector<CpuPathDelta> out;
    for (const auto& [fn, fs] : frac_s) {
        double fr = frac_r.count(fn) ? frac_r.at(fn) : 0.0;
        double d = fs - fr;
        if (d > delta)
            out.push_back({fn, fs, fr, d, hottest_path(fn)});
    }
    std::sort(out.begin(), out.end(),
              [](const CpuPathDelta& a, const CpuPathDelta& b) {
                  return a.delta != b.delta ? a.delta > b.delta
                                            : a.function < b.function;
              });
    return out;
}

// ---------------------------------------------------------------------------
// OS differential

std::vector<OsCounterDelta> os_diff(const OsSnapshot& straggler,
                                    const OsSnapshot& reference,
                                    const OsDiffConfig& config) {
    std::vector<OsCounterDelta> out;
    auto check = [&](const std::string& name, int64_t s, int64_t r,
                     int64_t floor) {
        if (s - r < floor) return;
        if (r == 0) {
            out.push_back({name, s, r, 0.0, true});
            return;
        }
        double ratio = double(s) / double(r);
        if (ratio >= config.min_ratio) out.push_back({name, s, r, ratio, false});
    };

    for (const auto& [vec, count] : straggler.interrupts) {
        auto it = reference.interrupts.find(vec);
        check("interrupt:" + vec, count, it == reference.interrupts.end() ? 0 : it->second,
              config.interrupt_floor);
    }
    for (const auto& [type, count] : straggler.softirqs) {
        auto it = reference.softirqs.find(type);
        check("softirq:" + type, count, it == reference.softirqs.end() ? 0 : it->second,
              config.interrupt_floor);
    }
    check("sched_delay_p99_ns", straggler.sched_delay_p99_ns,
          reference.sched_delay_p99_ns, config.sched_delay_floor_ns);
    check("numa_migrations", straggler.numa_migrations,
          reference.numa_migrations, config.migration_floor);
    return out;
}

// ---------------------------------------------------------------------------
// Temporal baseline

std::vector<TemporalCandidate> temporal_diff(const FoldedProfile& current,
                                             const BaselineProfile& baseline) {
    std::vector<TemporalCandidate> out;
    for (const auto& [fn, now] : current.inclusive_fractions()) {
        double base =
            baseline.fractions.count(fn) ? baseline.fractions.at(fn) : 0.0;
        double d = now - base;
        if (d > baseline.delta) out.push_back({fn, now, base, d});
    }
    std::sort(out.begin(), out.end(),
              [](const TemporalCandidate& a, const TemporalCandidate& b) {
                  return a.delta != b.delta ? a.delta > b.delta
                                            : a.function < b.function;
              });
    return out;
}

// ---------------------------------------------------------------------------
// Orchestration

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Healthy: return "healthy";
        case Verdict::GpuUniformSlowdown: return "gpu-uniform-slowdown";
        case Verdict::GpuSpecificKernel: return "gpu-specific-kernel";
        case Verdict::CpuInterference: return "cpu-interference";
        case Verdict::OsInterference: return "os-interference";
        case Verdict::TemporalDegradation: return "temporal-degradation";
        case Verdict::Inconclusive: return "inconclusive";
    }
    throw Error("bad verdict");
}

namespace {

// Reference rank: the rank whose mean lateness is the median across ranks.
std::optional<int> median_lateness_rank(
    const std::vector<std::map<int, double>>& per_instance,
    const std::vector<int>& exclude) {
    std::map<int, std::vector<double>> lateness;
    for (const auto& inst : per_instance)
        for (const auto& [rank, l] : inst) lateness[rank].push_back(l);
    std::vector<std::pair<double, int>> means;
    for (const auto& [rank, v] : lateness)
        if (std::find(exclude.begin(), exclude.end(), rank) == exclude.end())
            means.emplace_back(mean_of(v), rank);
    if (means.empty()) return std::nullopt;
    std::sort(means.begin(), means.end());
    return means[means.size() / 2].second;
}

}  // namespace

DiagnosisReport diagnose(const GroupData& data, const DiagnosisConfig& config) {
    DiagnosisReport rep;

    std::vector<StragglerAlert> alerts =
        detect_straggler(data.lateness_per_instance, data.group, config.k);

    if (!alerts.empty()) {
        for (const auto& a : alerts) rep.flagged_ranks.push_back(a.rank);
        std::sort(rep.flagged_ranks.begin(), rep.flagged_ranks.end());

        rep.reference_rank =
            median_lateness_rank(data.lateness_per_instance, rep.flagged_ranks);
        if (!rep.reference_rank) {
            rep.verdict = Verdict::Inconclusive;
            rep.notes.push_back("no reference rank available");
            return rep;
        }
        int ref = *rep.reference_rank;
        int straggler = rep.flagged_ranks.front();
        Verdict concluded = Verdict::Inconclusive;
        std::vector<EvidenceItem> gpu_ev, cpu_ev, os_ev;

        // GPU layer.
        if (data.gpu_profiles.count(straggler) && data.gpu_profiles.count(ref)) {
            GpuDiffResult g = gpu_diff(data.gpu_profiles.at(straggler),
                                       data.gpu_profiles.at(ref), config.gpu);
            for (const auto& [name, s] : g.slowdown) {
                gpu_ev.push_back(
                    {"gpu", name,
                     double(data.gpu_profiles.at(straggler).kernel_time_ns.at(name)),
                     double(data.gpu_profiles.at(ref).kernel_time_ns.at(name)), s});
            }
            if (g.verdict == GpuVerdict::Uniform)
                concluded = Verdict::GpuUniformSlowdown;
            else if (g.verdict == GpuVerdict::SpecificKernel) {
                concluded = Verdict::GpuSpecificKernel;
                rep.top_path = {g.top_kernel};
            }
        } else {
            rep.notes.push_back("gpu profiles missing; gpu layer skipped");
        }

        // CPU layer.
        std::vector<CpuPathDelta> cpu;
        if (data.cpu_profiles.count(straggler) && data.cpu_profiles.count(ref)) {
            cpu = cpu_diff(data.cpu_profiles.at(straggler),
                           data.cpu_profiles.at(ref), config.delta);
            for (const auto& c : cpu)
                cpu_ev.push_back({"cpu", c.function, c.straggler_fraction,
                                  c.reference_fraction, c.delta});
            if (concluded == Verdict::Inconclusive && !cpu.empty()) {
                concluded = Verdict::CpuInterference;
                rep.top_path = cpu.front().hottest_path;
            }
        } else {
            rep.notes.push_back("cpu profiles missing; cpu layer skipped");
        }

        // OS layer.
        if (data.os_snapshots.count(straggler) && data.os_snapshots.count(ref)) {
            std::vector<OsCounterDelta> os =
                os_diff(data.os_snapshots.at(straggler),
                        data.os_snapshots.at(ref), config.os);
            for (const auto& o : os)
                os_ev.push_back({"os", o.counter, double(o.straggler),
                                 double(o.reference),
                                 o.unbounded ? 0.0 : o.ratio});
            if (concluded == Verdict::Inconclusive && !os.empty())
                concluded = Verdict::OsInterference;
        } else {
            rep.notes.push_back("os snapshots missing; os layer skipped");
        }

        rep.verdict = concluded;
        rep.evidence.insert(rep.evidence.end(), gpu_ev.begin(), gpu_ev.end());
        rep.evidence.insert(rep.evidence.end(), cpu_ev.begin(), cpu_ev.end());
        rep.evidence.insert(rep.evidence.end(), os_ev.begin(), os_ev.end());
        if (rep.verdict == Verdict::Inconclusive)
            rep.notes.push_back("straggler detected but no layer concluded");
        return rep;
    }

    // No straggler: temporal route, gated on iteration-time regression.
    if (data.baseline_iteration_ms && !data.iteration_times_ms.empty()) {
        double now = mean_of(data.iteration_times_ms);
        double base = *data.baseline_iteration_ms;
        if (base > 0.0 &&
            now > base * (1.0 + config.iteration_regression_gate)) {
            if (!data.baseline) {
                rep.verdict = Verdict::Inconclusive;
                rep.notes.push_back(
                    "iteration time regressed but no baseline profile");
                return rep;
            }
            // Group-wide profile: merge all ranks.
            std::vector<std::pair<std::vector<std::string>, uint64_t>> all;
            for (const auto& [rank, profile] : data.cpu_profiles)
                for (const auto& line : profile.lines)
                    all.emplace_back(std::vector<std::string>(
                                         line.frames.rbegin(), line.frames.rend()),
                                     line.count);
            FoldedProfile merged = fold_symbolized(all);
            std::vector<TemporalCandidate> cands =
                temporal_diff(merged, *data.baseline);
            if (!cands.empty()) {
                rep.verdict = Verdict::TemporalDegradation;
                for (const auto& [rank, p] : data.cpu_profiles)
                    rep.flagged_ranks.push_back(rank);
                for (const auto& c : cands)
                    rep.evidence.push_back(
                        {"temporal", c.function, c.now, c.baseline, c.delta});
                // Hottest straggling path for the top candidate.
                const FoldedProfile::Line* best = nullptr;
                for (const auto& line : merged.lines) {
                    if (std::find(line.frames.begin(), line.frames.end(),
                                  cands.front().function) == line.frames.end())
                        continue;
                    if (!best || line.count > best->count) best = &line;
                }
                if (best) rep.top_path = best->frames;
                return rep;
            }
            rep.verdict = Verdict::Inconclusive;
            rep.notes.push_back(
                "iteration time regressed but no profile delta above delta");
            return rep;
        }
    }

    rep.verdict = Verdict::Healthy;
    return rep;
}

// ---------------------------------------------------------------------------
// Report serialization

std::string DiagnosisReport::to_json() const {
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& e : evidence)
        ev.push_back({{"layer", e.layer},
                      {"item", e.item},
                      {"straggler_value", e.straggler_value},
                      {"reference_value", e.reference_value},
                      {"delta", e.delta}});
    nlohmann::json j{{"verdict", verdict_name(verdict)},
                     {"flagged_ranks", flagged_ranks},
                     {"evidence", ev},
                     {"top_path", top_path},
                     {"notes", notes}};
    if (reference_rank)
        j["reference_rank"] = *reference_rank;
    else
        j["reference_rank"] = nullptr;
    return j.dump(2);
}

std::string DiagnosisReport::to_text() const {
    std::ostringstream os;
    os << "verdict: " << verdict_name(verdict) << "\n";
    os << "flagged ranks:";
    if (flagged_ranks.empty()) os << " none";
    for (int r : flagged_ranks) os << " " << r;
    os << "\n";
    if (reference_rank) os << "reference rank: " << *reference_rank << "\n";
    if (!top_path.empty()) {
        os << "top path: ";
        for (size_t i = 0; i < top_path.size(); ++i) {
            if (i) os << ";";
            os << top_path[i];
        }
        os << "\n";
    }
    if (!evidence.empty()) {
        os << "evidence (" << evidence.size() << " items):\n";
        for (const auto& e : evidence)
            os << "  [" << e.layer << "] " << e.item << ": " << e.straggler_value
               << " vs " << e.reference_value << " (delta " << e.delta << ")\n";
    }
    for (const auto& n : notes) os << "note: " << n << "\n";
    return os.str();
}

}  // namespace strata

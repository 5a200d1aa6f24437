#include "strata/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace strata {

namespace {

// ---------------------------------------------------------------------------
// Deterministic sub-streams

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::mt19937_64 sub_rng(uint64_t seed, uint64_t stream, uint64_t rank) {
    return std::mt19937_64(
        splitmix64(splitmix64(seed ^ 0x5747524154414e31ull) + stream * 1000003 +
                   rank));
}

// Mean-one lognormal multiplier.
double noise_mul(std::mt19937_64& rng, double sigma) {
    std::normal_distribution<double> n(-sigma * sigma / 2.0, sigma);
    return std::exp(n(rng));
}

// ---------------------------------------------------------------------------
// Virtual binaries and the stack vocabulary

struct Vocabulary {
    std::shared_ptr<const VirtualBinary> app;
    std::shared_ptr<const VirtualBinary> kernel;
    std::map<std::string, FrameRef> frames;
    std::set<std::string> kernel_names;

    std::vector<FrameRef> leaf_first(const std::vector<std::string>& rooted) const {
        std::vector<FrameRef> out;
        for (auto it = rooted.rbegin(); it != rooted.rend(); ++it) {
            auto f = frames.find(*it);
            if (f == frames.end()) throw Error("unknown stack function: " + *it);
            out.push_back(f->second);
        }
        return out;
    }

    std::vector<AddressSpace> spaces(const std::vector<std::string>& rooted) const {
        std::vector<AddressSpace> out;
        for (auto it = rooted.rbegin(); it != rooted.rend(); ++it)
            out.push_back(kernel_names.count(*it) ? AddressSpace::Kernel
                                                  : AddressSpace::User);
        return out;
    }
};

std::shared_ptr<const VirtualBinary> make_binary(
    const std::string& label, const std::vector<std::string>& names) {
    BinarySpec spec;
    spec.label = label;
    spec.code_size = 0x1000 + names.size() * 64;
    for (size_t i = 0; i < names.size(); ++i) {
        FunctionDef fn;
        fn.name = names[i];
        fn.offset = 0x1000 + i * 64;
        fn.length = 64;
        fn.fp_convention = FpConvention::Preserves;
        fn.frame_size = 48;
        fn.cfi.push_back({fn.offset, fn.end(), CfiRule::Kind::Simple, CfaBase::SP,
                          48, 0, 0, -8});
        spec.functions.push_back(std::move(fn));
    }
    return std::make_shared<VirtualBinary>(build_binary(spec));
}

Vocabulary make_vocabulary() {
    std::vector<std::string> app_names = {
        "main", "train_loop", "forward_pass", "matmul_dispatch",
        "softmax_dispatch", "backward_pass", "matmul_grad_dispatch",
        "bias_grad_dispatch", "allreduce_wait", "optimizer_step",
        "data_loader_next", "checkpoint_maybe", "log_metrics",
        "SLS::LogClient::Send", "SLS::LogClient::Serialize",
        "cpfs_checkpoint_write", "cpfs_write_block", "ossutils_download",
        "oss_http_get", "open64", "stat64", "unlink"};
    std::vector<std::string> kernel_names = {
        "asm_common_interrupt", "common_interrupt", "irq_exit_rcu",
        "__do_softirq", "net_rx_action", "napi_poll", "virtnet_poll",
        "virtnet_receive", "napi_gro_receive", "do_sys_openat2", "path_openat",
        "d_alloc_parallel", "queued_spin_lock_slowpath", "vfs_statx",
        "filename_lookup", "do_unlinkat", "d_invalidate"};

    Vocabulary v;
    v.app = make_binary("training-app", app_names);
    v.kernel = make_binary("kernel", kernel_names);
    auto index = [&](const std::shared_ptr<const VirtualBinary>& bin) {
        for (const auto& fn : bin->functions())
            v.frames[fn.name] = FrameRef{bin->build_id(), fn.offset + 8};
    };
    index(v.app);
    index(v.kernel);
    v.kernel_names.insert(kernel_names.begin(), kernel_names.end());
    return v;
}

struct WeightedStack {
    std::vector<std::string> rooted;
    double weight = 0.0;
    bool injected = false;
};

const std::vector<WeightedStack>& base_pool() {
    static const std::vector<WeightedStack> pool = {
        {{"main", "train_loop", "forward_pass", "matmul_dispatch"}, 0.22, false},
        {{"main", "train_loop", "forward_pass", "softmax_dispatch"}, 0.08, false},
        {{"main", "train_loop", "backward_pass", "matmul_grad_dispatch"}, 0.25,
         false},
        {{"main", "train_loop", "backward_pass", "bias_grad_dispatch"}, 0.05,
         false},
        {{"main", "train_loop", "allreduce_wait"}, 0.20, false},
        {{"main", "train_loop", "optimizer_step"}, 0.10, false},
        {{"main", "train_loop", "data_loader_next"}, 0.06, false},
        {{"main", "train_loop", "checkpoint_maybe"}, 0.04, false},
    };
    return pool;
}

std::vector<std::string> softirq_path() {
    return {"asm_common_interrupt", "common_interrupt", "irq_exit_rcu",
            "__do_softirq",         "net_rx_action",    "napi_poll",
            "virtnet_poll",         "virtnet_receive",  "napi_gro_receive"};
}

std::vector<std::vector<std::string>> dentry_paths() {
    return {
        {"main", "train_loop", "data_loader_next", "open64", "do_sys_openat2",
         "path_openat", "d_alloc_parallel", "queued_spin_lock_slowpath"},
        {"main", "train_loop", "data_loader_next", "stat64", "vfs_statx",
         "filename_lookup", "d_alloc_parallel", "queued_spin_lock_slowpath"},
        {"main", "train_loop", "checkpoint_maybe", "unlink", "do_unlinkat",
         "d_invalidate", "queued_spin_lock_slowpath"},
    };
}

std::vector<std::string> logging_path() {
    return {"main", "train_loop", "log_metrics", "SLS::LogClient::Send",
            "SLS::LogClient::Serialize"};
}

std::vector<std::string> cpfs_path() {
    return {"main", "train_loop", "checkpoint_maybe", "cpfs_checkpoint_write",
            "cpfs_write_block"};
}

std::vector<std::string> ossutils_path() {
    return {"main", "train_loop", "data_loader_next", "ossutils_download",
            "oss_http_get"};
}

std::vector<WeightedStack> injected_pool(const ScenarioSpec& spec) {
    switch (spec.scenario) {
        case Scenario::Softirq:
            return {{softirq_path(), spec.magnitude, true}};
        case Scenario::DentryLock: {
            auto paths = dentry_paths();
            return {{paths[0], spec.magnitude * 65.0 / 110.0, true},
                    {paths[1], spec.magnitude * 34.0 / 110.0, true},
                    {paths[2], spec.magnitude * 11.0 / 110.0, true}};
        }
        case Scenario::Logging:
            return {{logging_path(), spec.magnitude, true}};
        case Scenario::IoBottleneck:
            return {{cpfs_path(), spec.magnitude * 2.0 / 3.0, true},
                    {ossutils_path(), spec.magnitude / 3.0, true}};
        default:
            return {};
    }
}

// GPU compute-kernel mix (shares of compute time per iteration).
const std::vector<std::pair<std::string, double>>& gpu_kernel_mix() {
    static const std::vector<std::pair<std::string, double>> mix = {
        {"fused_matmul", 0.481},
        {"softmax_kernel", 0.191},
        {"dropout_kernel", 0.153},
        {"layernorm_kernel", 0.175},
    };
    return mix;
}

// ---------------------------------------------------------------------------
// Stack assignment: injected stacks get exact rounded counts placed evenly
// inside the segment; base stacks fill the rest by error diffusion, so the
// realized mix tracks the weights as closely as integer counts allow.

std::vector<size_t> assign_stacks(size_t n_ticks,
                                  const std::vector<WeightedStack>& pool) {
    std::vector<size_t> assignment(n_ticks, SIZE_MAX);
    double injected_weight = 0.0;
    for (size_t s = 0; s < pool.size(); ++s) {
        if (!pool[s].injected) continue;
        injected_weight += pool[s].weight;
        size_t c = size_t(std::llround(pool[s].weight * double(n_ticks)));
        if (c == 0) continue;
        double stride = double(n_ticks) / double(c);
        for (size_t k = 0; k < c; ++k) {
            size_t pos = size_t(stride * (double(k) + 0.5));
            while (pos < n_ticks && assignment[pos] != SIZE_MAX) ++pos;
            if (pos >= n_ticks) {
                pos = n_ticks;
                while (pos > 0 && assignment[pos - 1] != SIZE_MAX) --pos;
                if (pos == 0) break;
                --pos;
            }
            assignment[pos] = s;
        }
    }

    std::vector<double> base_weight(pool.size(), 0.0);
    double base_total = 0.0;
    for (size_t s = 0; s < pool.size(); ++s)
        if (!pool[s].injected) base_total += pool[s].weight;
    if (base_total <= 0.0) throw Error("stack pool has no base weight");
    for (size_t s = 0; s < pool.size(); ++s)
        if (!pool[s].injected) base_weight[s] = pool[s].weight / base_total;

    std::vector<double> deficit(pool.size(), 0.0);
    for (size_t i = 0; i < n_ticks; ++i) {
        if (assignment[i] != SIZE_MAX) continue;
        for (size_t s = 0; s < pool.size(); ++s) deficit[s] += base_weight[s];
        size_t best = SIZE_MAX;
        for (size_t s = 0; s < pool.size(); ++s) {
            if (pool[s].injected) continue;
            if (best == SIZE_MAX || deficit[s] > deficit[best]) best = s;
        }
        assignment[i] = best;
        deficit[best] -= 1.0;
    }
    return assignment;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Healthy: return "healthy";
        case Scenario::Thermal: return "thermal";
        case Scenario::Softirq: return "softirq";
        case Scenario::DentryLock: return "dentry-lock";
        case Scenario::Logging: return "logging";
        case Scenario::IoBottleneck: return "io-bottleneck";
    }
    throw Error("bad scenario");
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "healthy") return Scenario::Healthy;
    if (name == "thermal") return Scenario::Thermal;
    if (name == "softirq") return Scenario::Softirq;
    if (name == "dentry-lock") return Scenario::DentryLock;
    if (name == "logging") return Scenario::Logging;
    if (name == "io-bottleneck") return Scenario::IoBottleneck;
    throw Error("unknown scenario: " + name);
}

ScenarioSpec default_spec(Scenario scenario, uint64_t seed) {
    ScenarioSpec spec;
    spec.scenario = scenario;
    spec.seed = seed;
    switch (scenario) {
        case Scenario::Healthy:
            break;
        case Scenario::Thermal:
            spec.target_ranks = {0};
            spec.magnitude = 1.175;  // uniform GPU slowdown factor
            break;
        case Scenario::Softirq:
            spec.target_ranks = {4};
            spec.magnitude = 0.0174;  // interference sample share
            spec.entry_delay_ns = 600'000;
            break;
        case Scenario::DentryLock:
            spec.target_ranks = {2};
            spec.magnitude = 0.30;  // lock sample share
            spec.entry_delay_ns = 2'000'000;
            break;
        case Scenario::Logging:
            spec.magnitude = 0.03;  // logging sample share, all ranks
            spec.slowdown_factor = 1.08;
            spec.onset_iteration = spec.iterations / 2;
            break;
        case Scenario::IoBottleneck:
            spec.magnitude = 0.06;  // io sample share, all ranks
            spec.slowdown_factor = 1.10;
            spec.onset_iteration = spec.iterations / 2;
            break;
    }
    return spec;
}

SimulationResult simulate(const ScenarioSpec& spec) {
    if (spec.ranks < 2) throw Error("simulation requires at least 2 ranks");
    if (spec.iterations < 2) throw Error("simulation requires >= 2 iterations");
    if (spec.onset_iteration < 0 || spec.onset_iteration >= spec.iterations)
        throw Error("onset iteration out of range");
    if (spec.analysis_window_iterations < 2 ||
        spec.analysis_window_iterations > spec.iterations)
        throw Error("analysis window out of range");
    bool targeted_scenario = spec.scenario == Scenario::Thermal ||
                             spec.scenario == Scenario::Softirq ||
                             spec.scenario == Scenario::DentryLock;
    if (targeted_scenario && spec.target_ranks.empty())
        throw Error("scenario requires target ranks");
    if (spec.scenario != Scenario::Healthy && spec.magnitude <= 0.0)
        throw Error("scenario requires a positive magnitude");
    int64_t injected_budget =
        spec.entry_delay_ns +
        int64_t((std::max(spec.magnitude, spec.slowdown_factor) - 1.0) *
                double(spec.forward_ns + spec.backward_ns));
    if (injected_budget > spec.iteration_base_ns())
        throw Error("fault magnitude exceeds the iteration budget");

    SimulationResult res;
    res.spec = spec;

    Vocabulary vocab = make_vocabulary();
    res.binaries = {vocab.app, vocab.kernel};

    auto is_target = [&](int rank) {
        if (!targeted_scenario)
            return spec.scenario == Scenario::Logging ||
                   spec.scenario == Scenario::IoBottleneck;
        return std::find(spec.target_ranks.begin(), spec.target_ranks.end(),
                         rank) != spec.target_ranks.end();
    };

    // Per-rank clock skews.
    {
        auto rng = sub_rng(spec.seed, 1, 0);
        std::uniform_int_distribution<int64_t> skew(-spec.max_clock_skew_ns,
                                                    spec.max_clock_skew_ns);
        for (int r = 0; r < spec.ranks; ++r) res.injected_skew_ns[r] = skew(rng);
    }

    // ---------------------------------------------------------------------
    // Iteration timeline (true time).
    std::vector<int64_t> iter_start(spec.iterations);
    std::vector<int64_t> iter_end(spec.iterations);
    std::vector<std::mt19937_64> phase_rng, jitter_rng, gpu_rng;
    for (int r = 0; r < spec.ranks; ++r) {
        phase_rng.push_back(sub_rng(spec.seed, 2, uint64_t(r)));
        jitter_rng.push_back(sub_rng(spec.seed, 3, uint64_t(r)));
        gpu_rng.push_back(sub_rng(spec.seed, 4, uint64_t(r)));
    }

    int64_t t = 0;
    for (int i = 0; i < spec.iterations; ++i) {
        iter_start[i] = t;
        bool post_onset = i >= spec.onset_iteration;
        int64_t barrier = 0;
        std::vector<int64_t> entry(spec.ranks);
        for (int r = 0; r < spec.ranks; ++r) {
            double fwd = double(spec.forward_ns) *
                         noise_mul(phase_rng[r], spec.phase_noise_sigma);
            double bwd = double(spec.backward_ns) *
                         noise_mul(phase_rng[r], spec.phase_noise_sigma);
            double mult = 1.0;
            int64_t delay = 0;
            if (post_onset && is_target(r)) {
                if (spec.scenario == Scenario::Thermal) mult = spec.magnitude;
                if (spec.slowdown_factor > 1.0) mult = spec.slowdown_factor;
                delay = spec.entry_delay_ns;
            }
            int64_t compute = int64_t((fwd + bwd) * mult) + delay;
            entry[r] = t + compute;
            barrier = std::max(barrier, entry[r] + spec.collective_ns);

            // GPU compute kernels, back to back from iteration start.
            double gmult =
                post_onset && is_target(r) && spec.scenario == Scenario::Thermal
                    ? spec.magnitude
                    : 1.0;
            int64_t kstart = t;
            for (const auto& [kernel, share] : gpu_kernel_mix()) {
                int64_t dur = int64_t(share * (fwd + bwd) * gmult *
                                      noise_mul(gpu_rng[r], 0.01));
                res.gpu_events.push_back({r, i, kernel,
                                          kstart + res.injected_skew_ns[r], dur});
                kstart += dur;
            }
        }
        for (int r = 0; r < spec.ranks; ++r) {
            std::uniform_int_distribution<int64_t> jit(-spec.exit_jitter_ns / 2,
                                                       spec.exit_jitter_ns / 2);
            int64_t exit_r = barrier + jit(jitter_rng[r]);
            int64_t skew = res.injected_skew_ns[r];
            res.collectives.push_back({r, 0, CollectiveKind::AllReduce,
                                       entry[r] + skew, exit_r + skew,
                                       barrier - entry[r]});
            res.gpu_events.push_back({r, i, "nccl_all_reduce", entry[r] + skew,
                                      barrier - entry[r]});
        }
        t = barrier + spec.optimizer_ns;
        iter_end[i] = t;
    }

    int64_t onset_true = iter_start[spec.onset_iteration];
    res.window_start_ns =
        iter_start[spec.iterations - spec.analysis_window_iterations];
    res.window_end_ns = iter_end.back();
    res.baseline_iteration_ms = double(spec.iteration_base_ns()) / 1e6;

    // ---------------------------------------------------------------------
    // Baseline profile: analytic inclusive fractions of the base mix.
    res.baseline.group = 0;
    res.baseline.epoch = "pre-onset";
    res.baseline.delta = 0.005;
    for (const auto& ws : base_pool()) {
        std::set<std::string> seen(ws.rooted.begin(), ws.rooted.end());
        for (const auto& name : seen) res.baseline.fractions[name] += ws.weight;
    }

    // ---------------------------------------------------------------------
    // CPU samples: jittered ticks, segment-wise stack assignment.
    std::vector<WeightedStack> faulted_pool = base_pool();
    {
        auto injected = injected_pool(spec);
        faulted_pool.insert(faulted_pool.end(), injected.begin(), injected.end());
    }
    const double period_ns = 1e9 / spec.sample_rate_hz;
    for (int r = 0; r < spec.ranks; ++r) {
        auto rng = sub_rng(spec.seed, 5, uint64_t(r));
        std::uniform_real_distribution<double> tick_jit(-0.02, 0.02);
        std::vector<int64_t> ticks;
        double tt = std::uniform_real_distribution<double>(0.0, period_ns)(rng);
        while (tt < double(res.window_end_ns)) {
            ticks.push_back(int64_t(tt));
            tt += period_ns * (1.0 + tick_jit(rng));
        }

        // Segment boundary at fault onset (targets only).
        size_t onset_idx = ticks.size();
        if (is_target(r)) {
            onset_idx = size_t(std::lower_bound(ticks.begin(), ticks.end(),
                                                onset_true) -
                               ticks.begin());
        }

        std::vector<size_t> stacks(ticks.size(), SIZE_MAX);
        {
            std::vector<size_t> pre = assign_stacks(onset_idx, base_pool());
            for (size_t i = 0; i < pre.size(); ++i) stacks[i] = pre[i];
            std::vector<size_t> post =
                assign_stacks(ticks.size() - onset_idx, faulted_pool);
            for (size_t i = 0; i < post.size(); ++i)
                stacks[onset_idx + i] = post[i];
        }

        std::vector<StackSample> stream;
        stream.reserve(ticks.size());
        auto pool_for = [&](size_t i) -> const WeightedStack& {
            return i < onset_idx ? base_pool()[stacks[i]]
                                 : faulted_pool[stacks[i]];
        };
        for (size_t i = 0; i < ticks.size(); ++i) {
            const WeightedStack& ws = pool_for(i);
            StackSample s;
            s.timestamp_ns = ticks[i] + res.injected_skew_ns[r];
            s.rank = r;
            s.thread = 1000 + r;
            s.frames = vocab.leaf_first(ws.rooted);
            s.spaces = vocab.spaces(ws.rooted);
            stream.push_back(std::move(s));
        }
        res.samples.emplace(r, std::move(stream));
    }

    // ---------------------------------------------------------------------
    // OS counter windows (5 s, rank clock).
    for (int r = 0; r < spec.ranks; ++r) {
        auto rng = sub_rng(spec.seed, 6, uint64_t(r));
        std::uniform_real_distribution<double> jit(0.98, 1.02);
        bool storm = spec.scenario == Scenario::Softirq && is_target(r);
        for (int64_t w = 0; w * 5'000'000'000ll < res.window_end_ns; ++w) {
            OsCounterRecord rec;
            rec.rank = r;
            rec.window_start_ns = w * 5'000'000'000ll + res.injected_skew_ns[r];
            OsSnapshot& os = rec.snapshot;
            os.interrupts["LOC"] = int64_t(10000 * jit(rng));
            os.interrupts["PCI-MSI-eth0"] =
                int64_t(2000 * jit(rng) * (storm ? 8.0 : 1.0));
            os.softirqs["TIMER"] = int64_t(8000 * jit(rng));
            os.softirqs["RCU"] = int64_t(6000 * jit(rng));
            os.softirqs["NET_RX"] =
                int64_t(5000 * jit(rng) * (storm ? 10.0 : 1.0));
            os.sched_delay_p50_ns = int64_t(50'000 * jit(rng));
            os.sched_delay_p99_ns =
                int64_t(400'000 * jit(rng) * (storm ? 6.0 : 1.0));
            os.numa_migrations = int64_t(5 * jit(rng));
            res.os_counters.push_back(std::move(rec));
        }
    }

    // ---------------------------------------------------------------------
    // Ground-truth label.
    res.label.onset_iteration = spec.onset_iteration;
    switch (spec.scenario) {
        case Scenario::Healthy:
            res.label.expected_verdict = Verdict::Healthy;
            break;
        case Scenario::Thermal:
            res.label.expected_verdict = Verdict::GpuUniformSlowdown;
            res.label.affected_ranks = spec.target_ranks;
            break;
        case Scenario::Softirq:
            res.label.expected_verdict = Verdict::CpuInterference;
            res.label.affected_ranks = spec.target_ranks;
            res.label.injected_path = softirq_path();
            break;
        case Scenario::DentryLock:
            res.label.expected_verdict = Verdict::CpuInterference;
            res.label.affected_ranks = spec.target_ranks;
            res.label.injected_path = dentry_paths()[0];
            break;
        case Scenario::Logging:
            res.label.expected_verdict = Verdict::TemporalDegradation;
            for (int r = 0; r < spec.ranks; ++r)
                res.label.affected_ranks.push_back(r);
            res.label.injected_path = logging_path();
            break;
        case Scenario::IoBottleneck:
            res.label.expected_verdict = Verdict::TemporalDegradation;
            for (int r = 0; r < spec.ranks; ++r)
                res.label.affected_ranks.push_back(r);
            res.label.injected_path = cpfs_path();
            break;
    }
    return res;
}

}  // namespace strata

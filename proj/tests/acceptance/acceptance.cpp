// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "nvbleed/covert.hpp"
#include "nvbleed/extract.hpp"
#include "nvbleed/kv.hpp"
#include "nvbleed/link.hpp"
#include "nvbleed/rng.hpp"
#include "nvbleed/sidechan.hpp"
#include "oracles.hpp"
#include "properties.hpp"

#ifndef NVBLEED_CLI
#define NVBLEED_CLI "nvbleed"
#endif

namespace {

using namespace nvbleed;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [violated: " << what << "]";
        }
    }
};

std::string pct(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f%%", 100 * v);
    return b;
}

std::string fmt(double v, const char* f = "%.4g") {
    char b[32];
    std::snprintf(b, sizeof b, f, v);
    return b;
}

// ---- 1 ---------------------------------------------------------------------------

void packet_schedule(Outcome& o) {
    long long mismatches = 0;
    for (int slots : {1, 3, 6})
        for (std::uint64_t b = 0; b <= 4096; ++b) {
            const PacketSchedule s = schedule_transfer(b, slots);
            const oracle::Schedule r = oracle::schedule(b, slots);
            if (s.per_slot_payload_flits != r.payload_flits || s.per_slot_overhead_flits != r.overhead_flits ||
                s.packet_count != r.packets)
                ++mismatches;
        }
    std::set<std::uint64_t> first;
    bool stair = true;
    for (std::uint64_t b = 1; b <= 256; ++b) {
        const std::uint64_t w = schedule_transfer(b, 1).wire_bytes();
        stair = stair && w == (b + 31) / 32 * 32 + 32;
        first.insert(w);
    }
    bool eight = true, sequential = true;
    for (int slots : {3, 6})
        for (std::uint64_t blk = 0; blk < 16; ++blk) {
            std::set<std::uint64_t> steps;
            for (std::uint64_t b = blk * 256 + 1; b <= (blk + 1) * 256; ++b) {
                const PacketSchedule s = schedule_transfer(b, slots);
                steps.insert(s.wire_bytes());
                int active = 0;
                for (int j = 0; j < slots; ++j) active += s.slot_wire_bytes(j) > 0;
                sequential = sequential && active == std::min<int>(slots, static_cast<int>(blk) + 1);
            }
            eight = eight && steps.size() == 8;
        }
    o.detail << "oracle mismatches=" << mismatches << " first-packet steps=" << first.size();
    o.check(mismatches == 0, "schedule equals the 32-byte-unit oracle");
    o.check(stair && first.size() == 8, "first packet rises in 8 steps of 32 B");
    o.check(eight, "8 distinct steps per 256 B");
    o.check(sequential, "slots activate one per packet");
}

// ---- 2 ---------------------------------------------------------------------------

void calibration(Outcome& o) {
    struct Case {
        PlatformProfile base;
        CalibrationTargets tgt;
        double max_err;
    };
    for (Case c : {Case{gcp_profile(), {70590, 1880}, 0.05}, Case{dgx_profile(), {60710, 1390}, 0.025}}) {
        // start away from the shipped constants so the fit has work to do
        c.base.probe_overhead *= 2.0;
        c.base.counter_read_cost *= 0.5;
        const CalibrationResult cal = calibrate_profile(c.base, c.tgt, 1);
        const ChannelReport r =
            evaluate_channel(default_topology(cal.profile), ProtocolConfig{}, 10000, 5, 2024);
        const double rel = r.bandwidth_bps / c.tgt.contenlink_bps - 1;
        o.detail << c.base.name << ": " << fmt(r.bandwidth_bps / 1000, "%.2f") << " Kb/s (" << fmt(100 * rel, "%+.1f")
                 << "%) err " << pct(r.error_rate) << "; ";
        o.check(std::abs(rel) <= 0.20, c.base.name + " bandwidth within 20%");
        o.check(r.error_rate <= c.max_err, c.base.name + " error rate bound");
    }
}

// ---- 3 ---------------------------------------------------------------------------

void sweep_shape(Outcome& o) {
    const auto sizes = default_sweep_sizes();
    for (const PlatformProfile& p : {gcp_profile(), dgx_profile()}) {
        const Topology topo = default_topology(p);
        ProtocolConfig cl;
        ProtocolConfig lk;
        lk.protocol = Protocol::LeakyCounter;
        const auto a = sweep_sender_sizes(topo, cl, sizes, 10000, 5, 3);
        const auto b = sweep_sender_sizes(topo, lk, sizes, 10000, 5, 3);
        double lo = 1, hi = 0, worst_ratio = 0, worst_leaky = 0;
        bool monotone = true;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            if (i > 0 && a[i].bandwidth_bps > a[i - 1].bandwidth_bps) monotone = false;
            lo = std::min(lo, a[i].error_rate);
            hi = std::max(hi, a[i].error_rate);
            worst_ratio = std::max(worst_ratio, b[i].bandwidth_bps / a[i].bandwidth_bps);
            worst_leaky = std::max(worst_leaky, b[i].error_rate);
        }
        o.detail << p.name << ": CL " << fmt(a.front().bandwidth_bps / 1000, "%.1f") << "->"
                 << fmt(a.back().bandwidth_bps / 1000, "%.1f") << " Kb/s, err spread " << fmt(100 * (hi - lo), "%.2f")
                 << " pts, leaky/CL max " << fmt(worst_ratio, "%.3f") << ", leaky err max " << pct(worst_leaky)
                 << "; ";
        o.check(monotone, p.name + " ContenLink bandwidth non-increasing");
        o.check(hi - lo < 0.03, p.name + " error variation < 3 points");
        o.check(worst_ratio <= 0.1, p.name + " leaky bandwidth <= CL/10");
        o.check(worst_leaky <= 0.10, p.name + " leaky error <= 10%");
    }
}

// ---- 4 ---------------------------------------------------------------------------

void counter_semantics(Outcome& o) {
    int failures = 0;
    std::string first;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const std::string err = props::check_counter_scenario(seed);
        if (!err.empty() && failures++ == 0) first = err;
    }
    double ratio = 1e300;
    for (const PlatformProfile& prof : {gcp_profile(), dgx_profile()}) {
        Engine eng(default_topology(prof), EngineConfig{});
        std::vector<act::Transfer> ts(200, act::Transfer{1, 4096, TransferKind::ExplicitCopy, Direction::Read});
        eng.add_process(SimProcess{0, 0, std::make_shared<props::Script>(ts), "reader", true, 0, true});
        eng.run();
        const CounterSnapshot s = eng.counters().peek(0, std::nullopt, true);
        ratio = std::min(ratio, s.sum(Counter::TotalDataReceived) / s.sum(Counter::TotalDataTransmitted));
    }
    o.detail << "1000 scenarios, " << failures << " violations; rx/tx on pure receive " << fmt(ratio, "%.1f") << "x";
    o.check(failures == 0, "counter properties (" + first + ")");
    o.check(ratio >= 8, "receive >= 8x transmit");
}

// ---- 5, 6, 7 ---------------------------------------------------------------------

FingerprintConfig base_config(Scenario s) {
    FingerprintConfig c;
    c.scenario = s;
    c.profile = gcp_profile();
    c.gpus = 2;
    c.traces_per_class = 50;
    c.train_fraction = 0.8;
    c.seed = 1;
    return c;
}

struct Characters {
    std::vector<LabeledTrace> traces;
    FingerprintConfig cfg;
    Split split;
    double f1 = -1;
    double timing_only = -1;
};

Characters& characters() {
    static Characters c;
    return c;
}

void fingerprinting(Outcome& o) {
    FingerprintConfig apps = base_config(Scenario::Apps18);
    const double apps_tpc = fingerprint_experiment(apps).m.f1;
    apps.leakage = Leakage::TimingOnly;
    apps.counters_enabled = false;
    const double apps_to = fingerprint_experiment(apps).m.f1;

    Characters& ch = characters();
    ch.cfg = base_config(Scenario::Characters50);
    ch.traces = collect_traces(ch.cfg);
    ch.split = stratified_split(ch.traces, ch.cfg.train_fraction, ch.cfg.seed);
    EvalOptions opt;
    opt.window = ch.cfg.effective_window();
    opt.max_windows = ch.cfg.max_windows;
    opt.k = ch.cfg.k;
    ch.f1 = evaluate_traces(ch.cfg, ch.traces, ch.split, opt).m.f1;
    FingerprintConfig to = ch.cfg;
    to.leakage = Leakage::TimingOnly;
    to.counters_enabled = false;
    ch.timing_only = fingerprint_experiment(to).m.f1;

    o.detail << "apps18 F1 timing+counters " << pct(apps_tpc) << " timing " << pct(apps_to) << "; characters50 F1 timing "
             << pct(ch.timing_only) << " timing+counters " << pct(ch.f1);
    o.check(apps_tpc >= 0.95, "apps18 timing+counters >= 0.95");
    o.check(ch.timing_only >= 0.80, "characters50 timing-only >= 0.80");
    o.check(apps_tpc >= apps_to - 0.02, "apps18 counters do not hurt");
    o.check(ch.f1 >= ch.timing_only - 0.02, "characters50 counters do not hurt");
}

void cross_vm(Outcome& o) {
    FingerprintConfig c = base_config(Scenario::CrossVm);
    c.alpha = 0.05;
    const auto pts = window_sweep(c, {100, 200, 500, 1000});
    o.detail << "alpha=0.05 F1 by window:";
    for (const SweepPoint& p : pts) o.detail << " " << p.x << "=" << pct(p.report.m.f1);
    const double w100 = pts.front().report.m.f1, w1000 = pts.back().report.m.f1;
    c.alpha = 0;
    c.window = 1000;
    const double none = fingerprint_experiment(c).m.f1;
    o.detail << "; alpha=0 F1 " << pct(none);
    o.check(w1000 >= w100, "F1 at window 1000 >= F1 at window 100");
    o.check(w1000 >= 0.80, "F1 at window 1000 >= 0.80");
    o.check(none <= 0.10, "no-leakage F1 <= 0.10");
}

void mitigation(Outcome& o) {
    Characters& ch = characters();
    if (ch.traces.empty()) {
        ch.cfg = base_config(Scenario::Characters50);
        ch.traces = collect_traces(ch.cfg);
        ch.split = stratified_split(ch.traces, ch.cfg.train_fraction, ch.cfg.seed);
    }
    if (ch.timing_only < 0) {
        FingerprintConfig to = ch.cfg;
        to.leakage = Leakage::TimingOnly;
        to.counters_enabled = false;
        ch.timing_only = fingerprint_experiment(to).m.f1;
    }
    const std::vector<double> rates{100, 50, 20, 10, 5, 2, 1};
    std::vector<double> f1;
    o.detail << "native " << fmt(ch.traces.front().raw.native_rate_hz(), "%.0f") << " Hz; F1 by rate:";
    for (double r : rates) {
        EvalOptions opt;
        opt.window = ch.cfg.effective_window();
        opt.max_windows = ch.cfg.max_windows;
        opt.k = ch.cfg.k;
        opt.rate_hz = r;
        f1.push_back(evaluate_traces(ch.cfg, ch.traces, ch.split, opt).m.f1);
        o.detail << " " << r << "=" << pct(f1.back());
    }
    bool monotone = true;
    for (std::size_t i = 1; i < f1.size(); ++i)
        if (f1[i] > f1[i - 1] + 0.02) monotone = false;
    o.detail << "; counters disabled F1 " << pct(ch.timing_only);
    o.check(monotone, "F1 non-increasing as the rate drops (2-point slack)");
    o.check(f1.back() > 0.02, "lowest-rate F1 above random guess");
    o.check(ch.timing_only >= 0.75, "counters-disabled F1 >= 0.75");
}

// ---- 8 ---------------------------------------------------------------------------

void extraction(Outcome& o) {
    const LayerTypeClassifier clf = LayerTypeClassifier::train(1);
    for (const std::string& name : simple_model_names()) {
        const ModelSpec m = simple_model(name);
        ModelTraceOptions opt;
        const auto trace = transfers_from_counter_csv(record_model_parallel_trace(m, gcp_profile(), opt));
        const ExtractionReport rep = extract_architecture(trace, ExtractOptions{}, clf, &m);
        std::vector<int> want;
        for (const LayerSpec& l : m.layers)
            if (l.type == LayerType::FC) want.push_back(l.n);
        std::vector<int> got;
        for (const ExtractedLayer& l : rep.layers)
            if (l.type == LayerType::FC) got.push_back(static_cast<int>(l.elements / 64));
        const bool truth = rep.all_contain_truth.value_or(false);
        o.detail << name << (truth && got == want ? " ok" : " MISSED") << "; ";
        o.check(got == want, name + " FC widths exact");
        o.check(truth, name + " candidates contain the truth");
        if (name == "CNN_1" && rep.layers.size() >= 2) {
            bool conv = false, pool = false;
            for (const auto& c : rep.layers[0].candidates) conv = conv || (c.f == 5 && c.s == 1 && c.p == 2);
            for (const auto& c : rep.layers[1].candidates) pool = pool || (c.f == 2 && c.s == 2);
            o.check(conv, "CNN_1 conv candidates include F=5,S=1,P=2");
            o.check(pool, "CNN_1 pool candidates include F=2,S=2");
        }
    }
    Rng r = Rng::derive(8, {8});
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
        const bool pool = i % 2 == 1;
        int w_prev, c_prev, w;
        int f, s, p;
        do {
            w_prev = static_cast<int>(r.range(4, 64));
            c_prev = static_cast<int>(r.range(1, 64));
            f = static_cast<int>(r.range(1, w_prev / 2));
            s = static_cast<int>(r.range(1, f));
            p = pool ? 0 : static_cast<int>(r.range(0, f));
            w = pool ? pool_output_width(w_prev, f, s) : conv_output_width(w_prev, f, s, p);
        } while (w <= 0);
        const std::uint64_t per = static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(w) *
                                  static_cast<std::uint64_t>(c_prev);
        const LayerObservation obs = make_observation(0, per * 64 * 4, 4, 64);
        auto got = pool ? infer_pool_candidates(w_prev, c_prev, obs) : infer_conv_candidates(w_prev, c_prev, obs);
        std::sort(got.begin(), got.end());
        const auto want = pool ? oracle::pool_candidates(w_prev, c_prev, per, ShapeRules{})
                               : oracle::conv_candidates(w_prev, c_prev, per, ShapeRules{});
        if (got != want) ++mismatches;
    }
    o.detail << "brute-force mismatches " << mismatches << "/100";
    o.check(mismatches == 0, "candidate enumeration equals brute force");
}

// ---- 9 ---------------------------------------------------------------------------

void numeric_kernels(Outcome& o) {
    Rng r = Rng::derive(9, {9});
    int feat_bad = 0;
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> x(1 + r.below(500));
        const double scale = std::pow(10.0, static_cast<double>(r.range(-3, 9)));
        for (double& v : x) v = r.below(4) == 0 ? std::round(r.uniform() * 5) : r.normal(0, 1) * scale;
        const auto got = window_stats(x.data(), x.size());
        const auto want = oracle::stats(x);
        for (int j = 0; j < kStatCount; ++j) {
            const double rel = std::abs(got[j] - want[j]) / std::max({1.0, std::abs(got[j]), std::abs(want[j])});
            worst = std::max(worst, rel);
            if (rel > 1e-9) ++feat_bad;
        }
    }
    int lev_bad = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string a(r.below(150), '0'), b;
        for (char& c : a) c = r.below(2) ? '1' : '0';
        b = a;
        for (int e = 0, n = static_cast<int>(r.below(10)); e < n; ++e) {
            const auto op = r.below(3);
            if (op == 0 && !b.empty()) b.erase(r.below(b.size()), 1);
            else if (op == 1) b.insert(r.below(b.size() + 1), 1, r.below(2) ? '1' : '0');
            else if (!b.empty()) b[r.below(b.size())] ^= 1;
        }
        if (levenshtein(a, b) != oracle::levenshtein(a, b)) ++lev_bad;
    }
    Matrix x;
    std::vector<int> y;
    for (int i = 0; i < 500; ++i) {
        std::vector<double> row(8);
        for (double& v : row) v = std::round(r.normal(0, 3));
        x.push_back(row);
        y.push_back(static_cast<int>(r.below(10)));
    }
    const KnnClassifier knn = KnnClassifier::fit(x, y, 5);
    int knn_bad = 0;
    for (int q = 0; q < 1000; ++q) {
        std::vector<double> p(8);
        for (double& v : p) v = std::round(r.normal(0, 3));
        const auto got = knn.neighbors(p);
        const auto want = oracle::knn(x, p, 5);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
            same = got[i].index == want[i].i && got[i].dist2 == want[i].d2;
        if (!same || knn.predict(p) != oracle::vote(want, y)) ++knn_bad;
    }
    o.detail << "feature mismatches " << feat_bad << " (max rel " << fmt(worst, "%.1e") << "), levenshtein "
             << lev_bad << "/1000, knn " << knn_bad << "/1000";
    o.check(feat_bad == 0, "features within 1e-9");
    o.check(lev_bad == 0, "levenshtein equals DP");
    o.check(knn_bad == 0, "knn equals brute force");
}

// ---- 10 --------------------------------------------------------------------------

int cli(const std::string& args) {
    const std::string cmd = std::string(NVBLEED_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Every regular file under `dir`, relative path -> contents.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).generic_string()] = read_file(e.path());
    return out;
}

void determinism(Outcome& o) {
    const auto root = std::filesystem::temp_directory_path() / ("nvbleed-accept-" + std::to_string(::getpid()));
    std::filesystem::remove_all(root);
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"covert", "covert run --protocol contenlink --profile gcp --seed 7 --bits 2000 --trials 2 --event-log"},
        {"leaky", "covert run --protocol leakycounter --profile dgx --seed 3 --bits 1000 --trials 1"},
        {"collect", "fingerprint collect --scenario characters50 --classes 3 --traces-per-class 4 --samples 300"},
        {"crossvm", "fingerprint collect --scenario cross-vm --classes 2 --traces-per-class 3 --samples 400 --window 100"},
        {"record", "extract record --model CNN_2 --iterations 10 --seed 5"},
    };
    int files = 0, differ = 0, failed = 0;
    for (const auto& [name, args] : runs) {
        const auto first = root / name;
        if (cli(args + " --out " + first.string()) != 0) {
            ++failed;
            continue;
        }
        const auto a = snapshot(first);
        for (int rep = 1; rep <= 2; ++rep) {
            const auto again = root / (name + "-rerun" + std::to_string(rep));
            if (cli("rerun --manifest " + (first / "manifest.json").string() + " --out " + again.string()) != 0) {
                ++failed;
                continue;
            }
            const auto b = snapshot(again);
            files += static_cast<int>(b.size());
            if (a != b) ++differ;
        }
    }
    std::filesystem::remove_all(root);
    o.detail << runs.size() << " manifests x 2 reruns, " << files << " files compared, " << differ
             << " differing runs, " << failed << " failed invocations (same-word-size cross-machine check not run "
             << "here)";
    o.check(failed == 0, "all runs succeed");
    o.check(differ == 0, "reruns are byte-identical");
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<void(Outcome&)> run;
        double budget_s;  // 0 = no runtime bound
    };
    const std::vector<Criterion> all = {
        {1, "packet-schedule oracle", packet_schedule, 5},
        {2, "covert calibration fidelity", calibration, 120},
        {3, "sweep shape", sweep_shape, 0},
        {4, "counter semantics", counter_semantics, 30},
        {5, "fingerprinting pipelines", fingerprinting, 600},
        {6, "cross-VM attack", cross_vm, 0},
        {7, "mitigation study", mitigation, 0},
        {8, "model extraction", extraction, 60},
        {9, "numeric kernels", numeric_kernels, 0},
        {10, "determinism", determinism, 0},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    int failures = 0;
    for (const Criterion& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) o.check(false, "runtime over " + fmt(c.budget_s, "%.0f") + " s");
        if (!o.pass) ++failures;
        std::printf("criterion %2d %s  %s: %s (%.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.str().c_str(),
                    secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}

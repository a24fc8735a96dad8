#include "nvbleed/sidechan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "nvbleed/error.hpp"
#include "nvbleed/rng.hpp"
#include "nvbleed/workloads.hpp"

namespace nvbleed {

const std::array<std::string_view, kStatCount>& stat_names() {
    static const std::array<std::string_view, kStatCount> n = {"mean", "max",     "min",        "median",
                                                               "std",  "var",     "range",      "sum",
                                                               "count_am", "percent_25", "percent_75", "iqr_val"};
    return n;
}

namespace {

double interp(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

std::array<double, kStatCount> window_stats(const double* x, std::size_t n) {
    require(n > 0, "window_stats: empty window");
    std::vector<double> v(x, x + n);
    std::sort(v.begin(), v.end());
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += x[i];
    const double mean = sum / static_cast<double>(n);
    double ss = 0;
    long long above = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ss += (x[i] - mean) * (x[i] - mean);
        if (x[i] > mean) ++above;
    }
    const double var = ss / static_cast<double>(n);
    const double p25 = interp(v, 0.25), p50 = interp(v, 0.5), p75 = interp(v, 0.75);
    return {mean, v.back(), v.front(), p50, std::sqrt(var), var, v.back() - v.front(), sum,
            static_cast<double>(above), p25, p75, p75 - p25};
}

std::vector<std::vector<double>> sliding_features(const Trace& series, std::size_t window, std::size_t stride) {
    require(window >= 2, "sliding_features: window must be >= 2");
    if (stride == 0) stride = window;
    if (series.size() < window)
        fail(ErrorCode::InvalidArgument, "sliding_features: trace of " + std::to_string(series.size()) +
                                             " samples is shorter than one window of " + std::to_string(window));
    std::vector<std::vector<double>> cols;
    for (std::size_t c = 0; c < series.channel_count(); ++c) cols.push_back(series.column(c));
    std::vector<std::vector<double>> out;
    for (std::size_t s = 0; s + window <= series.size(); s += stride) {
        std::vector<double> row;
        row.reserve(cols.size() * kStatCount);
        for (const auto& col : cols) {
            const auto st = window_stats(col.data() + s, window);
            row.insert(row.end(), st.begin(), st.end());
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<std::string> feature_names(const Trace& series) {
    std::vector<std::string> out;
    for (const auto& c : series.channels)
        for (auto s : stat_names()) out.push_back(c + "." + std::string(s));
    return out;
}

// ---- KNN --------------------------------------------------------------------

Scaler Scaler::fit(const Matrix& x) {
    require(!x.empty(), "scaler: empty matrix");
    const std::size_t d = x[0].size();
    Scaler s;
    s.mean.assign(d, 0);
    s.scale.assign(d, 1);
    for (const auto& r : x) {
        require(r.size() == d, "scaler: ragged matrix");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    }
    for (double& m : s.mean) m /= static_cast<double>(x.size());
    std::vector<double> ss(d, 0);
    for (const auto& r : x)
        for (std::size_t j = 0; j < d; ++j) ss[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(ss[j] / static_cast<double>(x.size()));
        s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])) ? sd : 1.0;
    }
    return s;
}

std::vector<double> Scaler::apply(const std::vector<double>& row) const {
    require(row.size() == mean.size(), "scaler: dimension mismatch");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
    return out;
}

Matrix Scaler::apply(const Matrix& x) const {
    Matrix out;
    out.reserve(x.size());
    for (const auto& r : x) out.push_back(apply(r));
    return out;
}

KnnClassifier KnnClassifier::fit(Matrix x, std::vector<int> labels, int k) {
    require(!x.empty(), "knn: empty training set");
    require(x.size() == labels.size(), "knn: feature/label count mismatch");
    require(k >= 1, "knn: k must be >= 1");
    require(static_cast<std::size_t>(k) <= x.size(), "knn: fewer training points than k");
    const std::size_t d = x[0].size();
    for (const auto& r : x) require(r.size() == d, "knn: dimension mismatch in training set");
    KnnClassifier m;
    m.x_ = std::move(x);
    m.y_ = std::move(labels);
    m.k_ = k;
    return m;
}

std::vector<Neighbor> KnnClassifier::neighbors(const std::vector<double>& q) const {
    if (!trained()) fail(ErrorCode::InvalidArgument, "knn: model is not trained");
    require(q.size() == dim(), "knn: query dimension mismatch");
    std::vector<Neighbor> all(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) {
        const double* p = x_[i].data();
        double d2 = 0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double t = p[j] - q[j];
            d2 += t * t;
        }
        all[i] = {d2, i};
    }
    const auto by = [](const Neighbor& a, const Neighbor& b) {
        return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
    };
    const auto kk = static_cast<std::ptrdiff_t>(k_);
    std::partial_sort(all.begin(), all.begin() + kk, all.end(), by);
    all.resize(static_cast<std::size_t>(k_));
    return all;
}

int KnnClassifier::predict(const std::vector<double>& q) const {
    struct Vote {
        int label;
        int count;
        double dist;
    };
    std::vector<Vote> votes;
    for (const Neighbor& n : neighbors(q)) {
        const int l = y_[n.index];
        auto it = std::find_if(votes.begin(), votes.end(), [&](const Vote& v) { return v.label == l; });
        if (it == votes.end()) votes.push_back({l, 1, std::sqrt(n.dist2)});
        else {
            ++it->count;
            it->dist += std::sqrt(n.dist2);
        }
    }
    const Vote* best = &votes[0];
    for (const Vote& v : votes) {
        if (v.count != best->count) {
            if (v.count > best->count) best = &v;
        } else if (v.dist != best->dist) {
            if (v.dist < best->dist) best = &v;
        } else if (v.label < best->label) {
            best = &v;
        }
    }
    return best->label;
}

std::vector<int> KnnClassifier::predict(const Matrix& q) const {
    std::vector<int> out;
    out.reserve(q.size());
    for (const auto& r : q) out.push_back(predict(r));
    return out;
}

KnnRegressor KnnRegressor::fit(Matrix x, std::vector<double> targets, int k) {
    require(x.size() == targets.size(), "knn: feature/target count mismatch");
    KnnRegressor r;
    r.index_ = KnnClassifier::fit(std::move(x), std::vector<int>(targets.size(), 0), k);
    r.t_ = std::move(targets);
    return r;
}

double KnnRegressor::predict(const std::vector<double>& q) const {
    double s = 0;
    const auto nb = index_.neighbors(q);
    for (const Neighbor& n : nb) s += t_[n.index];
    return s / static_cast<double>(nb.size());
}

// ---- metrics ----------------------------------------------------------------

ClassMetrics metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    require(!y_true.empty(), "metrics: empty input");
    require(y_true.size() == y_pred.size(), "metrics: length mismatch");
    ClassMetrics m;
    m.classes = y_true;
    m.classes.insert(m.classes.end(), y_pred.begin(), y_pred.end());
    std::sort(m.classes.begin(), m.classes.end());
    m.classes.erase(std::unique(m.classes.begin(), m.classes.end()), m.classes.end());
    const std::size_t n = m.classes.size();
    const auto idx = [&](int l) {
        return static_cast<std::size_t>(std::lower_bound(m.classes.begin(), m.classes.end(), l) - m.classes.begin());
    };
    m.confusion.assign(n, std::vector<long long>(n, 0));
    long long correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        ++m.confusion[idx(y_true[i])][idx(y_pred[i])];
        if (y_true[i] == y_pred[i]) ++correct;
    }
    for (std::size_t c = 0; c < n; ++c) {
        long long tp = m.confusion[c][c], fp = 0, fn = 0;
        for (std::size_t o = 0; o < n; ++o) {
            if (o == c) continue;
            fp += m.confusion[o][c];
            fn += m.confusion[c][o];
        }
        const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        m.precision += p;
        m.recall += r;
        m.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    m.precision /= static_cast<double>(n);
    m.recall /= static_cast<double>(n);
    m.f1 /= static_cast<double>(n);
    m.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());
    return m;
}

double r2(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    require(!y_true.empty(), "r2: empty input");
    require(y_true.size() == y_pred.size(), "r2: length mismatch");
    const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) / static_cast<double>(y_true.size());
    double res = 0, tot = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
        tot += (y_true[i] - mean) * (y_true[i] - mean);
    }
    if (tot == 0) fail(ErrorCode::InvalidArgument, "r2: undefined for constant targets");
    return 1.0 - res / tot;
}

// ---- mitigation ---------------------------------------------------------------

Trace downsample(const Trace& raw, double target_rate_hz) {
    require(target_rate_hz > 0, "downsample: target rate must be > 0");
    if (raw.size() < 2) return raw;
    const double native = raw.native_rate_hz();
    if (target_rate_hz > native * (1 + 1e-9))
        fail(ErrorCode::InvalidArgument, "downsample: target rate " + std::to_string(target_rate_hz) +
                                             " Hz exceeds the native rate " + std::to_string(native) + " Hz");
    if (target_rate_hz >= native * (1 - 1e-9)) return raw;
    Trace out;
    out.channels = raw.channels;
    out.cumulative = raw.cumulative;
    out.label = raw.label;
    const double period = 1e9 / target_rate_hz;
    const TimeNs t0 = raw.times.front();
    std::size_t last = raw.size();
    for (long long k = 0;; ++k) {
        const double target = static_cast<double>(t0) + static_cast<double>(k) * period;
        if (target > static_cast<double>(raw.times.back())) break;
        auto it = std::lower_bound(raw.times.begin(), raw.times.end(), static_cast<TimeNs>(std::ceil(target)));
        std::size_t i = static_cast<std::size_t>(it - raw.times.begin());
        if (i == raw.size()) i = raw.size() - 1;
        if (i > 0 && target - static_cast<double>(raw.times[i - 1]) <= static_cast<double>(raw.times[i]) - target) --i;
        if (i == last) continue;
        last = i;
        out.times.push_back(raw.times[i]);
        out.rows.push_back(raw.rows[i]);
    }
    return out;
}

// ---- experiments ------------------------------------------------------------

std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Apps18: return "apps18";
        case Scenario::Characters50: return "characters50";
        case Scenario::CrossVm: return "cross_vm";
    }
    return "?";
}

Scenario scenario_from_name(std::string_view s) {
    if (s == "apps18") return Scenario::Apps18;
    if (s == "characters50") return Scenario::Characters50;
    if (s == "cross_vm" || s == "cross-vm") return Scenario::CrossVm;
    fail(ErrorCode::InvalidArgument, "unknown scenario '" + std::string(s) + "'");
}

std::string_view leakage_name(Leakage l) {
    return l == Leakage::TimingOnly ? "timing_only" : "timing_plus_counters";
}

Leakage leakage_from_name(std::string_view s) {
    if (s == "timing_only" || s == "timing-only") return Leakage::TimingOnly;
    if (s == "timing_plus_counters" || s == "timing+counters" || s == "timing-plus-counters")
        return Leakage::TimingPlusCounters;
    fail(ErrorCode::InvalidArgument, "unknown leakage source '" + std::string(s) + "'");
}

void FingerprintConfig::validate() const {
    profile.validate();
    require(gpus == 2 || gpus == 4 || gpus == 8, "fingerprint: gpus must be 2, 4 or 8");
    if (scenario != Scenario::Apps18 && gpus != 2)
        fail(ErrorCode::InvalidArgument, std::string(scenario_name(scenario)) +
                                             ": the rendering workload only runs on 2-GPU configurations");
    if (scenario == Scenario::CrossVm && leakage == Leakage::TimingOnly)
        fail(ErrorCode::InvalidArgument, "cross_vm: the observer has no timing path to the victim link");
    if (scenario == Scenario::CrossVm && !counters_enabled)
        fail(ErrorCode::InvalidArgument, "cross_vm: the observer needs counter access");
    require(traces_per_class >= 2, "fingerprint: need at least 2 traces per class");
    require(train_fraction > 0 && train_fraction < 1, "fingerprint: train fraction must be in (0, 1)");
    require(max_windows >= 1 && k >= 1, "fingerprint: max_windows and k must be >= 1");
    require(classes >= 0 && classes <= (scenario == Scenario::Apps18 ? 18 : kCharacterCount),
            "fingerprint: class count out of range");
    require(alpha >= 0 && noise_rel >= 0, "fingerprint: alpha and noise must be >= 0");
    require(effective_samples() >= static_cast<long long>(effective_window()),
            "fingerprint: trace shorter than one window");
}

std::size_t FingerprintConfig::effective_window() const {
    if (window) return window;
    switch (scenario) {
        case Scenario::Apps18: return 100;
        case Scenario::Characters50: return 200;
        case Scenario::CrossVm: return 1000;
    }
    return 100;
}

long long FingerprintConfig::effective_samples() const {
    if (samples) return samples;
    switch (scenario) {
        case Scenario::Apps18: return 1000;
        case Scenario::Characters50: return 2000;
        case Scenario::CrossVm: return 2000;
    }
    return 1000;
}

int FingerprintConfig::class_count() const {
    if (classes) return classes;
    return scenario == Scenario::Apps18 ? 18 : kCharacterCount;
}

std::string FingerprintConfig::class_name(int c) const {
    if (scenario == Scenario::Apps18) return app_preset_names().at(static_cast<std::size_t>(c));
    return "character-" + std::to_string(c);
}

Trace record_trace(const FingerprintConfig& cfg, int label, int index) {
    Topology topo = default_topology(cfg.profile);
    if (cfg.scenario == Scenario::CrossVm) topo = topo.cross_vm_split();
    const std::uint64_t seed =
        Rng::derive(cfg.seed, {static_cast<std::uint64_t>(cfg.scenario), static_cast<std::uint64_t>(label),
                               static_cast<std::uint64_t>(index)})
            .next_u64();
    const std::vector<GpuId> gpus = topo.ring_order(cfg.gpus);

    WorkloadSpec w = cfg.scenario == Scenario::Apps18
                         ? gen_app_signature(cfg.class_name(label), seed, cfg.gpus)
                         : gen_blender_character(label, -1, seed);

    EngineConfig ec;
    ec.duration = 3600LL * 1'000'000'000LL;
    ec.seed = seed;
    ec.counters_enabled = cfg.counters_enabled;
    RecorderConfig rc;
    rc.samples = cfg.effective_samples();
    GpuId spy_gpu = gpus[0];
    if (cfg.scenario == Scenario::CrossVm) {
        CrossVmObserver o;
        o.victim_a = gpus[0];
        o.victim_b = gpus[1];
        o.alpha = cfg.alpha;
        o.noise_rel = cfg.noise_rel;
        // First GPU outside the victim VM that touches the victim link.
        o.observer = -1;
        for (GpuId g = 0; g < topo.gpu_count() && o.observer < 0; ++g)
            if (topo.vm_of(g) != topo.vm_of(gpus[0]) && (topo.link_index(g, gpus[0]) || topo.link_index(g, gpus[1])))
                o.observer = g;
        require(o.observer >= 0, "cross_vm: no GPU outside the victim VM shares a link with it");
        ec.observer = o;
        spy_gpu = o.observer;
        rc.peer = -1;
        rc.read_counters = true;
    } else {
        rc.peer = gpus[1];
        rc.throughput_channel = true;
        rc.read_counters = cfg.leakage == Leakage::TimingPlusCounters;
    }

    Engine eng(topo, ec);
    for (SimProcess& p : workload_processes(w, gpus, topo)) eng.add_process(std::move(p));
    if (cfg.ambient && cfg.profile.ambient_rate_hz > 0) {
        SimProcess a;
        a.gpu = gpus[1];
        a.vm = topo.vm_of(a.gpu);
        a.program = std::make_shared<AmbientTraffic>(gpus[0], cfg.profile.ambient_rate_hz, cfg.profile.ambient_bytes,
                                                     Rng::derive(seed, {0xa4b}).next_u64());
        a.name = "ambient";
        eng.add_process(std::move(a));
    }
    const int slots = topo.profile().slots_per_gpu;
    auto trace = SpyRecorder::make_trace(rc, slots);
    SimProcess spy;
    spy.gpu = spy_gpu;
    spy.vm = topo.vm_of(spy_gpu);
    spy.program = std::make_shared<SpyRecorder>(rc, slots, trace);
    spy.name = "spy";
    spy.profiler = rc.read_counters;
    spy.essential = true;
    eng.add_process(std::move(spy));
    eng.run();
    trace->label = label;
    return std::move(*trace);
}

std::vector<LabeledTrace> collect_traces(const FingerprintConfig& cfg) {
    cfg.validate();
    std::vector<LabeledTrace> out;
    for (int c = 0; c < cfg.class_count(); ++c)
        for (int i = 0; i < cfg.traces_per_class; ++i) out.push_back({c, i, record_trace(cfg, c, i)});
    return out;
}

Split stratified_split(const std::vector<LabeledTrace>& traces, double fraction, std::uint64_t seed) {
    require(fraction > 0 && fraction < 1, "split: fraction must be in (0, 1)");
    std::map<int, std::vector<std::size_t>> by;
    for (std::size_t i = 0; i < traces.size(); ++i) by[traces[i].label].push_back(i);
    Split s;
    for (auto& [label, idx] : by) {
        Rng r = Rng::derive(seed, {0x5b11, static_cast<std::uint64_t>(label)});
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[r.below(i)]);
        auto ntrain = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        ntrain = std::clamp<std::size_t>(ntrain, 1, idx.size() - 1);
        s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ntrain));
        s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(ntrain), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Matrix trace_features(const Trace& raw, std::size_t window, int max_windows) {
    const Trace s = raw.series();
    require(s.size() >= 2, "features: trace has fewer than 2 intervals");
    window = std::min(window, s.size());
    const std::size_t count = s.size() / window;
    const std::size_t keep = std::min<std::size_t>(count, static_cast<std::size_t>(max_windows));
    Matrix all = sliding_features(s, window);
    Matrix out;
    for (std::size_t j = 0; j < keep; ++j) out.push_back(all[j * count / keep]);
    return out;
}

Matrix fingerprint_rows(const Trace& raw, const EvalOptions& opt) {
    require(opt.window > 0, "fingerprint: window must be > 0");
    return trace_features(opt.rate_hz > 0 ? downsample(raw, opt.rate_hz) : raw, opt.window, opt.max_windows);
}

TraceClassifier TraceClassifier::fit(const Matrix& x, std::vector<int> labels, int k) {
    TraceClassifier c;
    c.scaler_ = Scaler::fit(x);
    c.knn_ = KnnClassifier::fit(c.scaler_.apply(x), std::move(labels), k);
    return c;
}

int TraceClassifier::classify(const Matrix& rows) const {
    require(!rows.empty(), "classify: trace has no full window");
    std::map<int, int> votes;
    for (const auto& r : rows) ++votes[knn_.predict(scaler_.apply(r))];
    int best = votes.begin()->first, n = 0;
    for (auto [l, c] : votes)
        if (c > n) {
            best = l;
            n = c;
        }
    return best;
}

FingerprintReport evaluate_traces(const FingerprintConfig& cfg, const std::vector<LabeledTrace>& traces,
                                  const Split& split, const EvalOptions& opt) {
    require(!split.train.empty() && !split.test.empty(), "evaluate: empty split");
    EvalOptions o = opt;
    if (!o.window) o.window = cfg.effective_window();
    const std::size_t window = o.window;
    Matrix x;
    std::vector<int> y;
    for (std::size_t i : split.train)
        for (auto& r : fingerprint_rows(traces[i].raw, o)) {
            x.push_back(std::move(r));
            y.push_back(traces[i].label);
        }
    const std::size_t rows = x.size();
    const TraceClassifier clf = TraceClassifier::fit(x, std::move(y), o.k);

    std::vector<int> truth, pred;
    for (std::size_t i : split.test) {
        truth.push_back(traces[i].label);
        pred.push_back(clf.classify(fingerprint_rows(traces[i].raw, o)));
    }

    FingerprintReport rep;
    rep.scenario = std::string(scenario_name(cfg.scenario));
    rep.profile = cfg.profile.name;
    rep.leakage = std::string(leakage_name(cfg.leakage));
    rep.gpus = cfg.gpus;
    rep.window = window;
    rep.rate_hz = opt.rate_hz;
    rep.classes = cfg.class_count();
    rep.train_traces = split.train.size();
    rep.test_traces = split.test.size();
    rep.train_rows = rows;
    rep.m = metrics(truth, pred);
    for (int c = 0; c < cfg.class_count(); ++c) rep.class_names.push_back(cfg.class_name(c));
    return rep;
}

FingerprintReport fingerprint_experiment(const FingerprintConfig& cfg) {
    const auto traces = collect_traces(cfg);
    const Split split = stratified_split(traces, cfg.train_fraction, cfg.seed);
    EvalOptions opt;
    opt.window = cfg.effective_window();
    opt.max_windows = cfg.max_windows;
    opt.k = cfg.k;
    return evaluate_traces(cfg, traces, split, opt);
}

std::vector<SweepPoint> window_sweep(const FingerprintConfig& cfg, const std::vector<std::size_t>& windows) {
    require(!windows.empty(), "window sweep: no windows");
    FingerprintConfig c = cfg;
    const std::size_t widest = *std::max_element(windows.begin(), windows.end());
    c.samples = std::max<long long>(cfg.effective_samples(), static_cast<long long>(widest));
    c.window = widest;
    const auto traces = collect_traces(c);
    const Split split = stratified_split(traces, c.train_fraction, c.seed);
    std::vector<SweepPoint> out;
    for (std::size_t w : windows) {
        EvalOptions opt;
        opt.window = w;
        opt.max_windows = c.max_windows;
        opt.k = c.k;
        out.push_back({static_cast<double>(w), evaluate_traces(c, traces, split, opt)});
    }
    return out;
}

std::vector<SweepPoint> mitigation_sweep(const FingerprintConfig& cfg, const std::vector<double>& rates_hz) {
    require(!rates_hz.empty(), "mitigation sweep: no rates");
    const auto traces = collect_traces(cfg);
    const Split split = stratified_split(traces, cfg.train_fraction, cfg.seed);
    std::vector<SweepPoint> out;
    for (double r : rates_hz) {
        EvalOptions opt;
        opt.window = cfg.effective_window();
        opt.max_windows = cfg.max_windows;
        opt.k = cfg.k;
        opt.rate_hz = r;
        out.push_back({r, evaluate_traces(cfg, traces, split, opt)});
    }
    return out;
}

std::string FingerprintReport::to_json() const {
    nlohmann::ordered_json j;
    j["scenario"] = scenario;
    j["profile"] = profile;
    j["leakage"] = leakage;
    j["gpus"] = gpus;
    j["window"] = window;
    j["rate_hz"] = rate_hz;
    j["classes"] = classes;
    j["train_traces"] = train_traces;
    j["test_traces"] = test_traces;
    j["train_rows"] = train_rows;
    j["averaging"] = "macro";
    j["f1"] = m.f1;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["accuracy"] = m.accuracy;
    auto labels = nlohmann::ordered_json::array();
    for (int c : m.classes)
        labels.push_back(c >= 0 && static_cast<std::size_t>(c) < class_names.size() ? class_names[c]
                                                                                     : std::to_string(c));
    j["labels"] = labels;
    j["confusion"] = m.confusion;
    return j.dump(2) + "\n";
}

}  // namespace nvbleed

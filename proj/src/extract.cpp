#include "nvbleed/extract.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nvbleed/error.hpp"
#include "nvbleed/kv.hpp"
#include "nvbleed/link.hpp"
#include "nvbleed/rng.hpp"
#include "nvbleed/trace.hpp"

namespace nvbleed {

std::optional<std::uint64_t> payload_from_wire(std::uint64_t wire) {
    if (wire == 0) return 0;
    if (wire % kUnitBytes != 0) return std::nullopt;
    // wire / 32 = units + ceil(units / 8) for a single push.
    const std::uint64_t w = wire / kUnitBytes;
    const std::uint64_t guess = w * 8 / 9;
    for (std::uint64_t u = guess > 2 ? guess - 2 : 1; u <= guess + 2; ++u)
        if (u + (u + 7) / 8 == w) return u * kUnitBytes;
    return std::nullopt;
}

std::vector<ObservedTransfer> transfers_from_counter_csv(const std::string& csv, GpuId gpu) {
    std::map<TimeNs, double> totals;
    std::istringstream in(csv);
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line, ',');
        if (!header) {
            require(f.size() == 5 && trim(f[0]) == "time_s", "counter csv: expected header time_s,gpu,counter,slot,value");
            header = true;
            continue;
        }
        require(f.size() == 5, "counter csv: expected 5 columns");
        if (parse_int(trim(f[1]), "gpu") != gpu || parse_int(trim(f[3]), "slot") != -1) continue;
        const Counter c = counter_from_name(trim(f[2]));
        if (c != Counter::TotalDataReceived && c != Counter::TotalDataTransmitted) continue;
        const TimeNs t = std::llround(parse_double(trim(f[0]), "time") * 1e9);
        totals[t] += parse_double(trim(f[4]), "value");
    }
    require(header, "counter csv: missing header");
    std::vector<ObservedTransfer> out;
    double prev = -1;
    for (const auto& [t, v] : totals) {
        if (prev >= 0 && v > prev) {
            ObservedTransfer o;
            o.time = t;
            o.wire_bytes = static_cast<std::uint64_t>(std::llround(v - prev));
            o.payload_bytes = payload_from_wire(o.wire_bytes).value_or(0);
            out.push_back(o);
        }
        prev = v;
    }
    return out;
}

namespace {

// Aggregated counter reads, back to back, rendered as counter CSV rows.
class CounterSampler : public Program {
public:
    explicit CounterSampler(std::shared_ptr<std::string> out) : out_(std::move(out)) {}
    std::optional<Action> next(TimeNs, const StepResult& last) override {
        if (last.kind == StepResult::Kind::Read && last.snapshot) {
            const CounterSnapshot& s = *last.snapshot;
            for (Counter c : {Counter::TotalDataReceived, Counter::TotalDataTransmitted})
                *out_ += counter_trace_csv_row(static_cast<double>(s.time_ns) * 1e-9, s.gpu, c, -1, s[c][0]);
        }
        return act::ReadCounters{ReadOptions{true, false}};
    }

private:
    std::shared_ptr<std::string> out_;
};

}  // namespace

std::string record_model_parallel_trace(const ModelSpec& model, const PlatformProfile& profile,
                                        const ModelTraceOptions& opt) {
    const Topology topo = default_topology(profile);
    const WorkloadSpec w = gen_model_parallel_dnn(model, opt.workload);
    require(w.iterations > 0, "model trace: iterations must be finite");
    const std::vector<GpuId> gpus = {0, 1};
    require(opt.spy_gpu >= 0 && opt.spy_gpu < topo.gpu_count(), "model trace: bad spy GPU");

    EngineConfig ec;
    ec.seed = Rng::derive(opt.workload.seed, {0xe7c}).next_u64();
    const double span = static_cast<double>(w.period_ns) * static_cast<double>(w.iterations) * (1 + 6 * w.jitter);
    ec.duration = w.phase_ns + static_cast<TimeNs>(span) + 100'000'000;
    Engine eng(topo, ec);
    for (SimProcess& p : workload_processes(w, gpus, topo)) eng.add_process(std::move(p));
    auto rows = std::make_shared<std::string>(counter_trace_csv_header());
    SimProcess spy;
    spy.gpu = opt.spy_gpu;
    spy.vm = topo.vm_of(spy.gpu);
    spy.program = std::make_shared<CounterSampler>(rows);
    spy.name = "sampler";
    spy.profiler = true;
    eng.add_process(std::move(spy));
    eng.run();
    return *rows;
}

std::vector<IterationSpan> segment_iterations(const std::vector<TimeNs>& times, double gap_factor) {
    if (times.size() < 2) fail(ErrorCode::InvalidArgument, "segment_iterations: need at least 2 transfers");
    require(gap_factor > 0, "segment_iterations: gap factor must be > 0");
    std::vector<double> gaps;
    for (std::size_t i = 1; i < times.size(); ++i) {
        require(times[i] >= times[i - 1], "segment_iterations: times must be sorted");
        gaps.push_back(static_cast<double>(times[i] - times[i - 1]));
    }
    std::vector<double> sorted = gaps;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    std::vector<IterationSpan> out;
    std::size_t first = 0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (gaps[i] > gap_factor * median) {
            out.push_back({first, i, times[first], times[i]});
            first = i + 1;
        }
    }
    out.push_back({first, times.size() - 1, times[first], times.back()});
    return out;
}

LayerObservation make_observation(int boundary_index, std::uint64_t bytes, int element_bytes, int batch) {
    require(element_bytes > 0 && batch > 0, "observation: element_bytes and batch must be > 0");
    if (bytes % static_cast<std::uint64_t>(element_bytes) != 0)
        fail(ErrorCode::InvalidArgument, "observation: " + std::to_string(bytes) + " bytes is not a whole number of " +
                                             std::to_string(element_bytes) + "-byte elements");
    return {boundary_index, bytes, bytes / static_cast<std::uint64_t>(element_bytes), batch};
}

bool LayerCandidate::operator<(const LayerCandidate& o) const {
    return std::tie(type, n, w, c_in, c, f, s, p, steps) < std::tie(o.type, o.n, o.w, o.c_in, o.c, o.f, o.s, o.p, o.steps);
}

namespace {

std::uint64_t per_sample(const LayerObservation& obs) {
    require(obs.batch > 0, "observation: batch must be > 0");
    if (obs.elements % static_cast<std::uint64_t>(obs.batch) != 0)
        fail(ErrorCode::InvalidArgument, "observation: " + std::to_string(obs.elements) +
                                             " elements is not divisible by batch " + std::to_string(obs.batch));
    return obs.elements / static_cast<std::uint64_t>(obs.batch);
}

// Channels c with per == w^2 * c; `known` pins c when > 0.
std::optional<int> channels_for(std::uint64_t per, int w, int known) {
    const auto area = static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(w);
    if (per % area != 0) return std::nullopt;
    const std::uint64_t c = per / area;
    if (c == 0 || c > 1'000'000) return std::nullopt;
    if (known > 0 && c != static_cast<std::uint64_t>(known)) return std::nullopt;
    return static_cast<int>(c);
}

std::vector<LayerCandidate> conv_set(int w_prev, int c_prev, std::uint64_t per, const ShapeRules& r) {
    std::vector<LayerCandidate> out;
    for (int f = 1; f <= w_prev / 2; ++f)
        for (int s = 1; s <= f; ++s)
            for (int p = 0; p <= f; ++p) {
                const int w = conv_output_width(w_prev, f, s, p, r.rounding);
                if (w <= 0) continue;
                LayerCandidate c{LayerType::Conv, 0, w, c_prev, 0, f, s, p, 0};
                if (r.conv == ConvChannels::AsPrinted) {
                    const auto ch = channels_for(per, w, c_prev);
                    if (!ch) continue;
                    c.c_in = *ch;
                } else {
                    const auto ch = channels_for(per, w, 0);
                    if (!ch) continue;
                    c.c = *ch;
                }
                out.push_back(c);
            }
    return out;
}

std::vector<LayerCandidate> pool_set(int w_prev, int c_prev, std::uint64_t per, const ShapeRules& r) {
    std::vector<LayerCandidate> out;
    for (int f = 1; f <= w_prev / 2; ++f)
        for (int s = 1; s <= f; ++s) {
            const int w = pool_output_width(w_prev, f, s, r.rounding);
            if (w <= 0) continue;
            const auto ch = channels_for(per, w, c_prev);
            if (!ch) continue;
            out.push_back({LayerType::Pool, 0, w, *ch, *ch, f, s, 0, 0});
        }
    return out;
}

}  // namespace

int infer_fc(const LayerObservation& obs) { return static_cast<int>(per_sample(obs)); }

std::vector<LayerCandidate> infer_conv_candidates(int w_prev, int c_prev, const LayerObservation& obs,
                                                  const ShapeRules& rules) {
    require(w_prev >= 2, "infer_conv_candidates: W_prev must be >= 2");
    auto out = conv_set(w_prev, c_prev, per_sample(obs), rules);
    if (out.empty()) fail(ErrorCode::NotFound, "infer_conv_candidates: no convolution fits the observation");
    return out;
}

std::vector<LayerCandidate> infer_pool_candidates(int w_prev, int c_prev, const LayerObservation& obs,
                                                  const ShapeRules& rules) {
    require(w_prev >= 2, "infer_pool_candidates: W_prev must be >= 2");
    auto out = pool_set(w_prev, c_prev, per_sample(obs), rules);
    if (out.empty()) fail(ErrorCode::NotFound, "infer_pool_candidates: no pooling fits the observation");
    return out;
}

// ---- classification -----------------------------------------------------------

std::vector<std::vector<double>> boundary_features(const std::vector<std::uint64_t>& elements, int batch) {
    require(batch > 0, "boundary_features: batch must be > 0");
    std::vector<double> lg;
    for (std::uint64_t e : elements)
        lg.push_back(std::log2(std::max(1.0, static_cast<double>(e) / static_cast<double>(batch))));
    std::vector<std::vector<double>> out;
    const auto n = static_cast<std::ptrdiff_t>(lg.size());
    const auto at = [&](std::ptrdiff_t i) { return i >= 0 && i < n ? lg[static_cast<std::size_t>(i)] : 0.0; };
    const auto step = [&](std::ptrdiff_t a, std::ptrdiff_t b) { return a >= 0 && b < n ? at(b) - at(a) : 0.0; };
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out.push_back({lg[static_cast<std::size_t>(i)], step(i - 1, i), step(i, i + 1), step(i - 2, i - 1),
                       step(i + 1, i + 2), n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0,
                       i + 1 == n ? 1.0 : 0.0});
    }
    return out;
}

ModelSpec random_model(std::uint64_t seed) {
    Rng r = Rng::derive(seed, {0x40de1});
    ModelSpec m;
    m.name = "random";
    const double kind = r.uniform();
    static const int widths[] = {16, 32, 64, 100, 128, 200, 256, 300, 512, 784, 1024};
    static const int filters[] = {4, 6, 8, 16, 20, 32, 48, 64, 96, 128};
    const auto fc = [&] { return LayerSpec{LayerType::FC, widths[r.below(std::size(widths))]}; };
    if (kind < 0.25) {
        const int depth = static_cast<int>(r.range(1, 3));
        for (int i = 0; i < depth; ++i) m.layers.push_back(fc());
    } else if (kind < 0.35) {
        m.layers.push_back({LayerType::LSTM, static_cast<int>(r.range(2, 16)) * 16});
    } else {
        int w = m.input_w;
        int ch = static_cast<int>(filters[r.below(std::size(filters))]);
        const int blocks = static_cast<int>(r.range(1, 3));
        for (int b = 0; b < blocks && w >= 4; ++b) {
            if (b > 0 && r.uniform() < 0.7) ch *= 2;
            const int convs = static_cast<int>(r.range(1, 2));
            for (int k = 0; k < convs; ++k) {
                const int f = r.uniform() < 0.6 ? 3 : 5;
                if (f > w / 2) break;
                const int p = r.uniform() < 0.8 ? f / 2 : 0;
                const int s = r.uniform() < 0.85 ? 1 : 2;
                m.layers.push_back({LayerType::Conv, 0, f, ch, s, p});
                w = conv_output_width(w, f, s, p);
            }
            if (w >= 4 && r.uniform() < 0.9) {
                m.layers.push_back({LayerType::Pool, 0, 2, 0, 2, 0});
                w = pool_output_width(w, 2, 2);
            }
        }
    }
    const int fcs = static_cast<int>(r.range(0, 2));
    for (int i = 0; i < fcs; ++i) m.layers.push_back(fc());
    m.layers.push_back({LayerType::FC, r.uniform() < 0.8 ? 10 : 1});
    return m;
}

std::vector<LayerType> boundary_types(const ModelSpec& m) {
    std::vector<LayerType> out;
    for (const LayerSpec& l : m.layers) {
        if (l.type == LayerType::LSTM) out.insert(out.end(), static_cast<std::size_t>(m.seq_len), LayerType::FC);
        else out.push_back(l.type);
    }
    return out;
}

namespace {

std::vector<std::uint64_t> boundary_elements(const ModelSpec& m, int batch, const ShapeRules& rules) {
    std::vector<std::uint64_t> out;
    for (const LayerOutput& o : layer_outputs(m, batch, rules.conv, rules.rounding))
        out.insert(out.end(), static_cast<std::size_t>(o.transfers), o.elements);
    return out;
}

}  // namespace

LayerTypeClassifier LayerTypeClassifier::fit(const Matrix& x, const std::vector<int>& labels, int k) {
    LayerTypeClassifier c;
    c.scaler_ = Scaler::fit(x);
    c.knn_ = KnnClassifier::fit(c.scaler_.apply(x), labels, k);
    for (auto& row : c.transition_) row.fill(1.0 / 3.0);
    return c;
}

LayerTypeClassifier LayerTypeClassifier::train(std::uint64_t seed, int models, const ShapeRules& rules) {
    require(models > 0, "layer classifier: need training models");
    Matrix x;
    std::vector<int> y;
    std::array<std::array<double, 3>, 4> counts{};
    for (auto& row : counts) row.fill(1.0);
    for (int i = 0; i < models; ++i) {
        const ModelSpec m = random_model(Rng::derive(seed, {static_cast<std::uint64_t>(i)}).next_u64());
        const auto feats = boundary_features(boundary_elements(m, 64, rules), 64);
        const auto types = boundary_types(m);
        int prev = 3;
        for (std::size_t j = 0; j < feats.size(); ++j) {
            x.push_back(feats[j]);
            y.push_back(static_cast<int>(types[j]));
            counts[static_cast<std::size_t>(prev)][static_cast<std::size_t>(types[j])] += 1;
            prev = static_cast<int>(types[j]);
        }
    }
    LayerTypeClassifier c = fit(x, y);
    for (std::size_t a = 0; a < 4; ++a) {
        const double tot = counts[a][0] + counts[a][1] + counts[a][2];
        for (std::size_t b = 0; b < 3; ++b) c.transition_[a][b] = counts[a][b] / tot;
    }
    return c;
}

std::array<double, 3> LayerTypeClassifier::emission(const std::vector<double>& feature) const {
    if (!trained()) fail(ErrorCode::InvalidArgument, "layer classifier: model is not trained");
    std::array<double, 3> e{0.5, 0.5, 0.5};
    for (const Neighbor& n : knn_.neighbors(scaler_.apply(feature))) {
        const int l = knn_.labels()[n.index];
        if (l >= 0 && l < 3) e[static_cast<std::size_t>(l)] += 1;
    }
    const double tot = e[0] + e[1] + e[2];
    for (double& v : e) v /= tot;
    return e;
}

std::vector<LayerType> LayerTypeClassifier::decode(const Matrix& features) const {
    const std::size_t n = features.size();
    if (n == 0) return {};
    std::vector<std::array<double, 3>> score(n);
    std::vector<std::array<int, 3>> back(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = emission(features[i]);
        for (std::size_t t = 0; t < 3; ++t) {
            if (i == 0) {
                score[0][t] = std::log(transition_[3][t]) + std::log(e[t]);
                back[0][t] = -1;
                continue;
            }
            double best = -1e300;
            int arg = 0;
            for (std::size_t p = 0; p < 3; ++p) {
                const double v = score[i - 1][p] + std::log(transition_[p][t]);
                if (v > best) {
                    best = v;
                    arg = static_cast<int>(p);
                }
            }
            score[i][t] = best + std::log(e[t]);
            back[i][t] = arg;
        }
    }
    std::vector<LayerType> out(n);
    int cur = static_cast<int>(std::max_element(score[n - 1].begin(), score[n - 1].end()) - score[n - 1].begin());
    for (std::size_t i = n; i-- > 0;) {
        out[i] = static_cast<LayerType>(cur);
        cur = back[i][static_cast<std::size_t>(cur)];
    }
    return out;
}

std::vector<LayerType> LayerTypeClassifier::rank(const std::vector<double>& feature) const {
    if (!trained()) fail(ErrorCode::InvalidArgument, "layer classifier: model is not trained");
    const auto q = scaler_.apply(feature);
    std::map<int, std::pair<int, double>> votes;
    for (const Neighbor& n : knn_.neighbors(q)) {
        auto& v = votes[knn_.labels()[n.index]];
        ++v.first;
        v.second += std::sqrt(n.dist2);
    }
    std::vector<std::pair<int, std::pair<int, double>>> order(votes.begin(), votes.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second.first != b.second.first) return a.second.first > b.second.first;
        return a.second.second < b.second.second;
    });
    std::vector<LayerType> out;
    for (const auto& o : order) out.push_back(static_cast<LayerType>(o.first));
    for (LayerType t : {LayerType::FC, LayerType::Conv, LayerType::Pool})
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    return out;
}

// ---- pipeline -------------------------------------------------------------------

bool candidate_matches(const LayerCandidate& c, const LayerSpec& t) {
    if (c.type != t.type) return false;
    switch (t.type) {
        case LayerType::FC:
        case LayerType::LSTM: return c.n == t.n;
        case LayerType::Conv: return c.f == t.f && c.s == t.s && c.p == t.p && (c.c == 0 || c.c == t.c);
        case LayerType::Pool: return c.f == t.f && c.s == t.s;
    }
    return false;
}

std::vector<int> ExtractionReport::fc_widths() const {
    std::vector<int> out;
    for (const ExtractedLayer& l : layers)
        if (l.type == LayerType::FC && !l.candidates.empty()) out.push_back(l.candidates.front().n);
    return out;
}

namespace {

template <class T>
T mode_of(const std::vector<T>& v) {
    std::map<T, int> count;
    for (const T& x : v) ++count[x];
    T best = v.front();
    int n = 0;
    for (const auto& [x, c] : count)
        if (c > n) {
            best = x;
            n = c;
        }
    return best;
}

using State = std::pair<int, int>;  // (width, channels); channels 0 = unknown

}  // namespace

ExtractionReport extract_architecture(const std::vector<ObservedTransfer>& trace, const ExtractOptions& opt,
                                      const LayerTypeClassifier& clf, const ModelSpec* truth) {
    require(opt.batch > 0 && opt.element_bytes > 0, "extract: batch and element_bytes must be > 0");
    ExtractionReport rep;
    rep.transfers = trace.size();
    std::vector<TimeNs> times;
    for (const auto& t : trace) times.push_back(t.time);
    const auto spans = segment_iterations(times, opt.gap_factor);
    rep.iterations = spans.size();

    std::vector<std::size_t> lengths;
    for (const auto& s : spans) lengths.push_back(s.last - s.first + 1);
    rep.boundaries = mode_of(lengths);
    std::vector<std::uint64_t> sizes(rep.boundaries);
    for (std::size_t j = 0; j < rep.boundaries; ++j) {
        std::vector<std::uint64_t> v;
        for (const auto& s : spans)
            if (s.last - s.first + 1 == rep.boundaries) v.push_back(trace[s.first + j].payload_bytes);
        sizes[j] = mode_of(v);
    }
    std::vector<std::uint64_t> elements;
    for (std::size_t j = 0; j < sizes.size(); ++j)
        elements.push_back(make_observation(static_cast<int>(j), sizes[j], opt.element_bytes, opt.batch).elements);
    const auto feats = boundary_features(elements, opt.batch);
    const std::vector<LayerType> decoded = clf.decode(feats);

    std::set<State> states = {{opt.input_w, opt.input_c}};
    bool flat = false;
    std::size_t j = 0;
    while (j < elements.size()) {
        std::size_t run = 1;
        while (j + run < elements.size() && elements[j + run] == elements[j]) ++run;
        const LayerObservation obs{static_cast<int>(j), sizes[j], elements[j], opt.batch};
        ExtractedLayer layer;
        layer.elements = elements[j];
        if (static_cast<int>(run) >= opt.lstm_min_steps && elements[j] % static_cast<std::uint64_t>(opt.batch) == 0) {
            layer.type = LayerType::LSTM;
            LayerCandidate c{};
            c.type = LayerType::LSTM;
            c.n = infer_fc(obs);
            c.steps = static_cast<int>(run);
            layer.candidates.push_back(c);
            flat = true;
            rep.layers.push_back(std::move(layer));
            j += run;
            continue;
        }
        std::set<State> consumed, next;
        std::vector<LayerType> ranked = clf.rank(feats[j]);
        std::stable_partition(ranked.begin(), ranked.end(), [&](LayerType t) { return t == decoded[j]; });
        layer.type = ranked.front();
        for (LayerType t : ranked) {
            std::vector<LayerCandidate> cands;
            if (t == LayerType::FC) {
                if (elements[j] % static_cast<std::uint64_t>(opt.batch) == 0)
                    cands.push_back({LayerType::FC, infer_fc(obs), 0, 0, 0, 0, 0, 0, 0});
            } else if (!flat && elements[j] % static_cast<std::uint64_t>(opt.batch) == 0) {
                const std::uint64_t per = elements[j] / static_cast<std::uint64_t>(opt.batch);
                for (const State& st : states) {
                    if (st.first < 2) continue;
                    auto set = t == LayerType::Conv ? conv_set(st.first, st.second, per, opt.rules)
                                                    : pool_set(st.first, st.second, per, opt.rules);
                    for (const auto& c : set) {
                        consumed.insert({st.first, c.c_in});
                        next.insert({c.w, c.c});
                    }
                    cands.insert(cands.end(), set.begin(), set.end());
                }
            }
            if (cands.empty()) {
                consumed.clear();
                next.clear();
                continue;
            }
            std::sort(cands.begin(), cands.end());
            cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
            layer.type = t;
            layer.candidates = std::move(cands);
            break;
        }
        if (layer.type == LayerType::FC) {
            flat = true;
        } else if (!layer.candidates.empty()) {
            // Tighten the previous spatial layer with what this one consumed.
            if (!rep.layers.empty() &&
                (rep.layers.back().type == LayerType::Conv || rep.layers.back().type == LayerType::Pool)) {
                std::vector<LayerCandidate> kept;
                for (const LayerCandidate& c : rep.layers.back().candidates) {
                    if (c.c > 0) {
                        if (consumed.count({c.w, c.c})) kept.push_back(c);
                        continue;
                    }
                    for (const State& s : consumed)
                        if (s.first == c.w && s.second > 0) {
                            LayerCandidate e = c;
                            e.c = s.second;
                            kept.push_back(e);
                        }
                }
                if (!kept.empty()) {
                    std::sort(kept.begin(), kept.end());
                    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
                    rep.layers.back().candidates = std::move(kept);
                }
            }
            states = std::move(next);
        }
        rep.layers.push_back(std::move(layer));
        ++j;
    }

    if (truth) {
        bool all = rep.layers.size() == truth->layers.size();
        bool types = all;
        for (std::size_t i = 0; i < rep.layers.size(); ++i) {
            ExtractedLayer& l = rep.layers[i];
            if (i >= truth->layers.size()) {
                l.contains_truth = false;
                continue;
            }
            const LayerSpec& t = truth->layers[i];
            l.contains_truth = std::any_of(l.candidates.begin(), l.candidates.end(),
                                           [&](const LayerCandidate& c) { return candidate_matches(c, t); });
            all = all && *l.contains_truth;
            types = types && l.type == t.type;
        }
        rep.all_contain_truth = all;
        rep.types_match = types;
    }
    return rep;
}

std::string ExtractionReport::to_json() const {
    nlohmann::ordered_json j;
    j["transfers"] = transfers;
    j["iterations"] = iterations;
    j["boundaries_per_iteration"] = boundaries;
    j["fc_widths"] = fc_widths();
    auto arr = nlohmann::ordered_json::array();
    for (const ExtractedLayer& l : layers) {
        nlohmann::ordered_json o;
        o["type"] = std::string(layer_type_name(l.type));
        o["elements"] = l.elements;
        o["candidate_count"] = l.candidates.size();
        auto cs = nlohmann::ordered_json::array();
        for (const LayerCandidate& c : l.candidates) {
            nlohmann::ordered_json x;
            switch (c.type) {
                case LayerType::FC: x = {{"N", c.n}}; break;
                case LayerType::LSTM: x = {{"hidden", c.n}, {"steps", c.steps}}; break;
                case LayerType::Conv:
                    x = {{"W", c.w}, {"C_in", c.c_in}, {"C", c.c}, {"F", c.f}, {"S", c.s}, {"P", c.p}};
                    break;
                case LayerType::Pool: x = {{"W", c.w}, {"C", c.c}, {"F", c.f}, {"S", c.s}}; break;
            }
            cs.push_back(x);
        }
        o["candidates"] = cs;
        if (l.contains_truth) o["contains_truth"] = *l.contains_truth;
        arr.push_back(o);
    }
    j["layers"] = arr;
    if (all_contain_truth) j["all_contain_truth"] = *all_contain_truth;
    if (types_match) j["types_match"] = *types_match;
    return j.dump(2) + "\n";
}

}  // namespace nvbleed

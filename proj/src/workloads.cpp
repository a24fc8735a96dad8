#include "nvbleed/workloads.hpp"

#include <algorithm>
#include <cmath>

#include "nvbleed/error.hpp"
#include "nvbleed/rng.hpp"

namespace nvbleed {

namespace {

constexpr TimeNs kUs = 1000;
constexpr TimeNs kMs = 1'000'000;
constexpr std::uint64_t kKiB = 1024;
constexpr std::uint64_t kChunkCap = 4 * 1024 * 1024;

struct OpenMmPreset {
    const char* name;
    TimeNs period_us;
    int messages;
    std::uint64_t kib;
    TimeNs gap_us;
};

// Synthetic MD-step exchange patterns; pairwise distinct in period and burst.
constexpr OpenMmPreset kOpenMm[] = {
    {"rf", 400, 2, 64, 30},
    {"pme", 650, 4, 96, 25},
    {"apoa1-rf", 900, 3, 256, 40},
    {"apoa1-pme", 1200, 6, 192, 35},
    {"apoa1-ljpme", 1500, 8, 160, 30},
    {"amoeba-pme", 2600, 12, 48, 60},
    {"amber20-dhfr", 500, 3, 24, 20},
    {"amber20-cellulose", 3200, 5, 768, 50},
};

struct ComputeTime {
    const char* name;
    double ms;
};

// Per-iteration compute between gradient exchanges (synthetic).
constexpr ComputeTime kCompute[] = {
    {"MLP", 2.5},      {"CNN_1", 3.5},     {"CNN_2", 5.0},     {"Regression", 3.0}, {"LSTM", 7.0},
    {"AlexNet", 30.0}, {"VGG16", 60.0},    {"GoogLeNet", 25.0}, {"ResNet-18", 20.0}, {"ResNet-50", 45.0},
};

double compute_ms(std::string_view model) {
    for (const auto& c : kCompute)
        if (model == c.name) return c.ms;
    fail(ErrorCode::NotFound, "unknown DNN model '" + std::string(model) + "'");
}

// Neighbour pairs (k, k+1) that carry exchanges. Only the full 8-GPU ring
// closes the loop; smaller groups form a chain along the ring order.
int ring_pairs(int participants) { return participants == 8 ? 8 : participants - 1; }

TimeNs random_phase(std::uint64_t seed, TimeNs period) {
    Rng r = Rng::derive(seed, {0x9a5e});
    return static_cast<TimeNs>(r.uniform() * static_cast<double>(period));
}

double jitter_factor(Rng& r, double jitter, double floor) { return std::max(floor, 1.0 + jitter * r.normal()); }

}  // namespace

std::string_view workload_kind_name(WorkloadKind k) {
    switch (k) {
        case WorkloadKind::AppSignature: return "app_signature";
        case WorkloadKind::BlenderCharacter: return "blender_character";
        case WorkloadKind::ModelParallelDnn: return "model_parallel_dnn";
        case WorkloadKind::DataParallelDnn: return "data_parallel_dnn";
    }
    return "?";
}

std::uint64_t WorkloadSpec::iteration_bytes() const {
    std::uint64_t s = 0;
    for (const WorkloadStep& st : steps) s += st.bytes;
    return s;
}

void WorkloadSpec::validate() const {
    require(participants >= 2, "workload: needs at least 2 participants");
    require(!steps.empty(), "workload '" + name + "': no steps");
    require(period_ns > 0, "workload '" + name + "': period must be > 0");
    require(jitter >= 0 && jitter < 1, "workload '" + name + "': jitter must be in [0, 1)");
    for (const WorkloadStep& st : steps) {
        require(st.gap_ns >= 0 && st.bytes > 0, "workload '" + name + "': bad step");
        require(st.from >= 0 && st.from < participants && st.to >= 0 && st.to < participants && st.from != st.to,
                "workload '" + name + "': step endpoint out of range");
    }
}

std::uint64_t WorkloadSpec::checksum() const {
    std::string buf = std::string(workload_kind_name(kind)) + '|' + name + '|' + std::to_string(seed) + '|' +
                      std::to_string(participants) + '|' + std::to_string(period_ns) + '|' + std::to_string(jitter) +
                      '|' + std::to_string(iterations) + '|' + std::to_string(phase_ns) + '|' + std::to_string(batch);
    for (const WorkloadStep& s : steps)
        buf += '|' + std::to_string(s.gap_ns) + ',' + std::to_string(s.bytes) + ',' + std::to_string(s.from) + ',' +
               std::to_string(s.to);
    return fnv1a(buf);
}

IterationClock::IterationClock(const WorkloadSpec& spec) : spec_(&spec), start_(spec.phase_ns) {}

void IterationClock::advance() {
    Rng r = Rng::derive(spec_->seed, {0x7e51, static_cast<std::uint64_t>(index_)});
    start_ += static_cast<TimeNs>(static_cast<double>(spec_->period_ns) * jitter_factor(r, spec_->jitter, 0.5));
    ++index_;
}

std::vector<TimedTransfer> expand_iteration(const WorkloadSpec& spec, long long iteration, TimeNs start) {
    Rng r = Rng::derive(spec.seed, {0x57e9, static_cast<std::uint64_t>(iteration)});
    std::vector<TimedTransfer> out;
    out.reserve(spec.steps.size());
    TimeNs t = start;
    for (const WorkloadStep& s : spec.steps) {
        t += static_cast<TimeNs>(static_cast<double>(s.gap_ns) * jitter_factor(r, spec.jitter, 0.25));
        out.push_back({t, s.bytes, s.from, s.to, iteration});
    }
    return out;
}

std::vector<TimedTransfer> expand_schedule(const WorkloadSpec& spec, TimeNs until) {
    spec.validate();
    std::vector<TimedTransfer> out;
    IterationClock clock(spec);
    while (clock.start() < until && (spec.iterations < 0 || clock.index() < spec.iterations)) {
        for (const TimedTransfer& t : expand_iteration(spec, clock.index(), clock.start()))
            if (t.time < until) out.push_back(t);
        clock.advance();
    }
    std::stable_sort(out.begin(), out.end(), [](const TimedTransfer& a, const TimedTransfer& b) { return a.time < b.time; });
    return out;
}

const std::vector<std::string>& app_preset_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& p : kOpenMm) v.emplace_back(p.name);
        for (const auto& m : dnn_model_names()) v.push_back(m);
        return v;
    }();
    return names;
}

WorkloadSpec gen_data_parallel_dnn(std::string_view model, int batch, std::uint64_t seed, int participants) {
    require(participants >= 2, "data-parallel: needs at least 2 participants");
    require(batch > 0, "data-parallel: batch must be > 0");
    const double cms = compute_ms(model);
    const std::uint64_t grad = model_parameters(model) * 4;
    const auto n = static_cast<std::uint64_t>(participants);
    const std::uint64_t share = (grad + n - 1) / n;

    WorkloadSpec w;
    w.kind = WorkloadKind::DataParallelDnn;
    w.name = std::string(model);
    w.seed = seed;
    w.participants = participants;
    w.batch = batch;
    // Ring allreduce: reduce-scatter then all-gather, 2(n-1) phases.
    const int phases = 2 * (participants - 1);
    bool first = true;
    for (int ph = 0; ph < phases; ++ph) {
        for (int k = 0; k < ring_pairs(participants); ++k) {
            const int a = k, b = (k + 1) % participants;
            for (int dir = 0; dir < 2; ++dir) {
                for (std::uint64_t off = 0; off < share; off += kChunkCap) {
                    WorkloadStep s;
                    s.gap_ns = first ? static_cast<TimeNs>(cms * kMs) : 0;
                    s.bytes = std::min(kChunkCap, share - off);
                    s.from = dir == 0 ? a : b;
                    s.to = dir == 0 ? b : a;
                    w.steps.push_back(s);
                    first = false;
                }
            }
        }
    }
    const double comm_ms = static_cast<double>(share) * static_cast<double>(phases) / 10e9 * 1e3;
    w.period_ns = static_cast<TimeNs>((cms + comm_ms) * kMs);
    w.phase_ns = random_phase(seed, w.period_ns);
    return w;
}

WorkloadSpec gen_app_signature(std::string_view preset, std::uint64_t seed, int participants) {
    require(participants >= 2, "app signature: needs at least 2 participants");
    if (is_dnn_model(preset)) return gen_data_parallel_dnn(preset, 64, seed, participants);
    for (const auto& p : kOpenMm) {
        if (preset != p.name) continue;
        WorkloadSpec w;
        w.kind = WorkloadKind::AppSignature;
        w.name = p.name;
        w.seed = seed;
        w.participants = participants;
        for (int m = 0; m < p.messages; ++m) {
            for (int k = 0; k < ring_pairs(participants); ++k) {
                const int a = k, b = (k + 1) % participants;
                WorkloadStep s;
                s.gap_ns = k == 0 ? p.gap_us * kUs : 0;
                s.bytes = p.kib * kKiB;
                s.from = m % 2 == 0 ? a : b;
                s.to = m % 2 == 0 ? b : a;
                w.steps.push_back(s);
            }
        }
        w.period_ns = p.period_us * kUs;
        w.phase_ns = random_phase(seed, w.period_ns);
        return w;
    }
    fail(ErrorCode::NotFound, "unknown app preset '" + std::string(preset) + "'");
}

WorkloadSpec gen_blender_character(int character_index, long long frames, std::uint64_t seed) {
    if (character_index < 0 || character_index >= kCharacterCount)
        fail(ErrorCode::InvalidArgument, "character index " + std::to_string(character_index) + " out of range 0..49");
    require(frames != 0 && frames >= -1, "blender: frames must be positive (or -1 for unbounded)");
    WorkloadSpec w;
    w.kind = WorkloadKind::BlenderCharacter;
    w.name = "character-" + std::to_string(character_index);
    w.seed = seed;
    w.iterations = frames;

    // Background scene shared by every character.
    const std::uint64_t prologue[] = {192 * kKiB, 128 * kKiB, 96 * kKiB};
    for (std::uint64_t b : prologue) w.steps.push_back({15 * kUs, b, 0, 1});

    // Mesh/texture chunks: a fixed function of the character, not of the seed.
    Rng c = Rng::derive(0xb1e4de5, {static_cast<std::uint64_t>(character_index)});
    const int chunks = static_cast<int>(c.range(2, 9));
    TimeNs span = 3 * 15 * kUs;
    for (int i = 0; i < chunks; ++i) {
        const double lg = c.uniform(std::log2(256.0 * 1024), std::log2(4096.0 * 1024));
        const std::uint64_t bytes = (static_cast<std::uint64_t>(std::exp2(lg)) + 4095) / 4096 * 4096;
        const TimeNs gap = c.range(10, 80) * kUs;
        const bool back = c.uniform() < 0.3;
        w.steps.push_back({gap, bytes, back ? 1 : 0, back ? 0 : 1});
        span += gap;
    }
    // Rendered tile results return to the host GPU.
    const TimeNs render = c.range(200, 1500) * kUs;
    const std::uint64_t result = static_cast<std::uint64_t>(c.range(4, 16)) * 4096;
    w.steps.push_back({render, result, 1, 0});
    w.period_ns = span + render + c.range(50, 300) * kUs;
    w.phase_ns = random_phase(seed, w.period_ns);
    return w;
}

WorkloadSpec gen_model_parallel_dnn(const ModelSpec& model, const ModelParallelOptions& opt) {
    require(opt.element_bytes > 0, "model-parallel: element_bytes must be > 0");
    require(opt.iterations != 0 && opt.iterations >= -1, "model-parallel: iterations must be positive");
    const std::vector<LayerOutput> outs = layer_outputs(model, opt.batch, opt.conv, opt.rounding);
    WorkloadSpec w;
    w.kind = WorkloadKind::ModelParallelDnn;
    w.name = model.name.empty() ? format_model(model) : model.name;
    w.seed = opt.seed;
    w.batch = opt.batch;
    w.iterations = opt.iterations;
    w.jitter = 0.02;
    // Layer i runs on participant i % 2 and ships its output to the other GPU.
    // Compute before a boundary grows with the previous transfer so that
    // consecutive boundaries never share one counter sample.
    std::uint64_t prev = 0;
    TimeNs span = 0;
    for (std::size_t i = 0; i < outs.size(); ++i) {
        const std::uint64_t bytes = outs[i].elements * static_cast<std::uint64_t>(opt.element_bytes);
        const int from = static_cast<int>(i % 2);
        for (int t = 0; t < outs[i].transfers; ++t) {
            const TimeNs gap = w.steps.empty() ? 0 : 2 * kMs + static_cast<TimeNs>(prev);
            w.steps.push_back({gap, bytes, from, 1 - from});
            span += gap;
            prev = bytes;
        }
    }
    const TimeNs tail = std::max<TimeNs>(20 * kMs, 4 * span) + static_cast<TimeNs>(prev);
    w.period_ns = span + tail;
    w.phase_ns = 1 * kMs;
    return w;
}

WorkloadProgram::WorkloadProgram(WorkloadSpec spec, int participant, std::vector<GpuId> gpus)
    : spec_(std::move(spec)), participant_(participant), gpus_(std::move(gpus)), clock_(spec_) {
    spec_.validate();
    require(participant_ >= 0 && participant_ < spec_.participants, "workload: participant out of range");
    require(static_cast<int>(gpus_.size()) == spec_.participants, "workload: one GPU per participant required");
    refill();
}

void WorkloadProgram::refill() {
    pending_.clear();
    pos_ = 0;
    while (pending_.empty()) {
        if (spec_.iterations >= 0 && clock_.index() >= spec_.iterations) return;
        for (const TimedTransfer& t : expand_iteration(spec_, clock_.index(), clock_.start()))
            if (t.from == participant_) pending_.push_back(t);
        clock_.advance();
    }
}

std::optional<Action> WorkloadProgram::next(TimeNs now, const StepResult&) {
    if (pos_ >= pending_.size()) refill();
    if (pending_.empty()) return std::nullopt;
    const TimedTransfer& t = pending_[pos_];
    if (!sleeping_ && now < t.time) {
        sleeping_ = true;
        return act::SleepUntil{t.time};
    }
    sleeping_ = false;
    ++pos_;
    return act::Transfer{gpus_[static_cast<std::size_t>(t.to)], t.bytes, TransferKind::ExplicitCopy, Direction::Write};
}

std::vector<SimProcess> workload_processes(const WorkloadSpec& spec, const std::vector<GpuId>& gpus,
                                           const Topology& topo, const std::string& name_prefix) {
    spec.validate();
    require(static_cast<int>(gpus.size()) == spec.participants, "workload: one GPU per participant required");
    std::vector<SimProcess> out;
    for (int i = 0; i < spec.participants; ++i) {
        SimProcess p;
        p.gpu = gpus[static_cast<std::size_t>(i)];
        p.vm = topo.vm_of(p.gpu);
        p.program = std::make_shared<WorkloadProgram>(spec, i, gpus);
        p.name = name_prefix + "." + spec.name + "." + std::to_string(i);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace nvbleed

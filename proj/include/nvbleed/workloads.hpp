#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nvbleed/dnn.hpp"
#include "nvbleed/engine.hpp"

namespace nvbleed {

enum class WorkloadKind { AppSignature, BlenderCharacter, ModelParallelDnn, DataParallelDnn };

std::string_view workload_kind_name(WorkloadKind k);

/// One push inside an iteration. `gap_ns` is measured from the previous step's
/// nominal start; endpoints are participant indices, not GPU ids.
struct WorkloadStep {
    TimeNs gap_ns = 0;
    std::uint64_t bytes = 0;
    int from = 0;
    int to = 1;
};

struct WorkloadSpec {
    WorkloadKind kind = WorkloadKind::AppSignature;
    std::string name;
    std::uint64_t seed = 0;
    int participants = 2;
    std::vector<WorkloadStep> steps;  // one iteration (frame, MD step, training step)
    TimeNs period_ns = 0;             // nominal start-to-start iteration length
    double jitter = 0.02;             // relative sd of gaps and period
    long long iterations = -1;        // -1 runs until the simulation ends
    TimeNs phase_ns = 0;              // offset of the first iteration
    int batch = 0;

    std::uint64_t iteration_bytes() const;
    /// fnv1a over the expanded schedule parameters.
    std::uint64_t checksum() const;
    void validate() const;
};

struct TimedTransfer {
    TimeNs time = 0;
    std::uint64_t bytes = 0;
    int from = 0;
    int to = 1;
    long long iteration = 0;
};

/// Jittered schedule of one iteration; identical in every participant.
std::vector<TimedTransfer> expand_iteration(const WorkloadSpec& spec, long long iteration, TimeNs start);
/// Deterministic start of each iteration.
class IterationClock {
public:
    explicit IterationClock(const WorkloadSpec& spec);
    TimeNs start() const { return start_; }
    long long index() const { return index_; }
    void advance();

private:
    const WorkloadSpec* spec_;
    long long index_ = 0;
    TimeNs start_ = 0;
};

/// All transfers issued before `until`, in time order (tests and trace oracles).
std::vector<TimedTransfer> expand_schedule(const WorkloadSpec& spec, TimeNs until);

/// 8 OpenMM-like apps followed by the 10 data-parallel DNNs.
const std::vector<std::string>& app_preset_names();
WorkloadSpec gen_app_signature(std::string_view preset, std::uint64_t seed, int participants = 2);
WorkloadSpec gen_data_parallel_dnn(std::string_view model, int batch, std::uint64_t seed, int participants = 2);

inline constexpr int kCharacterCount = 50;
WorkloadSpec gen_blender_character(int character_index, long long frames, std::uint64_t seed);

struct ModelParallelOptions {
    int batch = 64;
    long long iterations = 100;
    int element_bytes = 4;
    ConvChannels conv = ConvChannels::AsPrinted;
    ShapeRounding rounding = ShapeRounding::Floor;
    std::uint64_t seed = 0;
};
WorkloadSpec gen_model_parallel_dnn(const ModelSpec& model, const ModelParallelOptions& opt);

/// Runs the steps of one participant on its GPU; pushes go to gpus[to].
class WorkloadProgram : public Program {
public:
    WorkloadProgram(WorkloadSpec spec, int participant, std::vector<GpuId> gpus);
    std::optional<Action> next(TimeNs now, const StepResult& last) override;

private:
    void refill();

    WorkloadSpec spec_;
    int participant_;
    std::vector<GpuId> gpus_;
    IterationClock clock_;
    std::vector<TimedTransfer> pending_;
    std::size_t pos_ = 0;
    bool sleeping_ = false;
};

/// One process per participant, placed on `gpus` (participant index order).
std::vector<SimProcess> workload_processes(const WorkloadSpec& spec, const std::vector<GpuId>& gpus,
                                           const Topology& topo, const std::string& name_prefix = "victim");

}  // namespace nvbleed

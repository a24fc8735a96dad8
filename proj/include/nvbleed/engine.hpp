#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <variant>
#include <vector>

#include "nvbleed/counters.hpp"
#include "nvbleed/link.hpp"
#include "nvbleed/rng.hpp"
#include "nvbleed/topo.hpp"

namespace nvbleed {

namespace act {
struct Transfer {
    GpuId peer = 1;
    std::uint64_t bytes = 0;
    TransferKind kind = TransferKind::ExplicitCopy;
    Direction direction = Direction::Read;  // Read pulls from peer, Write pushes to peer
};
struct SleepUntil {
    TimeNs t = 0;
};
struct NopLoop {
    long long iterations = 0;  // one NOP per virtual nanosecond
};
struct ReadCounters {
    ReadOptions options;
};
}  // namespace act

using Action = std::variant<act::Transfer, act::SleepUntil, act::NopLoop, act::ReadCounters>;

/// What the engine reports back to a program about its previous action.
struct StepResult {
    enum class Kind { Start, Transfer, Sleep, Nop, Read } kind = Kind::Start;
    TimeNs start = 0;
    TimeNs end = 0;
    std::uint64_t contending_bytes = 0;
    std::optional<CounterSnapshot> snapshot;

    TimeNs elapsed() const { return end - start; }
};

class Program {
public:
    virtual ~Program() = default;
    /// Next action at virtual time `now`, or nullopt when the program is done.
    virtual std::optional<Action> next(TimeNs now, const StepResult& last) = 0;
};

struct SimProcess {
    GpuId gpu = 0;
    VmId vm = 0;
    std::shared_ptr<Program> program;
    std::string name;
    bool profiler = false;   // registers as a counter profiler on its GPU
    TimeNs start = 0;
    bool essential = false;  // the run ends once every essential process has exited
};

struct CrossVmObserver {
    GpuId observer = 2;
    GpuId victim_a = 0;
    GpuId victim_b = 1;
    double alpha = 0.05;
    double noise_rel = 0.02;
};

struct EngineConfig {
    TimeNs duration = 1'000'000'000;
    std::uint64_t seed = 0;
    bool counters_enabled = true;
    bool event_log = false;
    std::optional<CrossVmObserver> observer;
};

struct RunStats {
    std::uint64_t events = 0;
    std::uint64_t transfers = 0;
    TimeNs final_time = 0;
};

class Engine {
public:
    Engine(Topology topo, EngineConfig cfg);

    ProcessId add_process(SimProcess p);
    RunStats run();

    const Topology& topology() const { return topo_; }
    const CounterState& counters() const { return counters_; }
    CounterState& counters() { return counters_; }
    const std::string& event_log() const { return log_; }
    TimeNs now() const { return now_; }

private:
    struct Pending {
        TimeNs time;
        ProcessId pid;
        std::uint64_t seq;
        bool operator>(const Pending& o) const {
            if (time != o.time) return time > o.time;
            if (pid != o.pid) return pid > o.pid;
            return seq > o.seq;
        }
    };
    struct Active {
        TimeNs end;
        ProcessId issuer;
        std::uint64_t wire;
    };
    struct Completion {
        TimeNs end;
        std::uint64_t seq;
        TransferRequest req;
        PacketSchedule sched;
        bool operator>(const Completion& o) const { return end != o.end ? end > o.end : seq > o.seq; }
    };
    struct ProcState {
        SimProcess spec;
        Rng rng;
        StepResult last;
        bool done = false;
    };

    void flush_completions(TimeNs t);
    void complete(const Completion& c);
    void execute(ProcessId pid, const Action& a);
    void schedule(ProcessId pid, TimeNs t);
    void log(TimeNs t, const char* kind, ProcessId pid, const std::string& payload);

    Topology topo_;
    EngineConfig cfg_;
    CounterState counters_;
    std::vector<ProcState> procs_;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
    std::priority_queue<Completion, std::vector<Completion>, std::greater<>> completions_;
    std::vector<std::vector<Active>> active_;  // per link
    std::uint64_t seq_ = 0;
    int essential_running_ = 0;
    bool early_stop_ = false;
    TimeNs now_ = 0;
    RunStats stats_;
    std::string log_;
    // cross-VM observer state
    int observer_link_ = -1;
    int victim_link_ = -1;
    double leak_signal_sum_ = 0;
    std::uint64_t leak_signal_n_ = 0;
    Rng leak_rng_;
};

/// Background traffic on one link: Poisson arrivals of small pushes.
class AmbientTraffic : public Program {
public:
    AmbientTraffic(GpuId peer, double rate_hz, std::uint64_t bytes, std::uint64_t seed);
    std::optional<Action> next(TimeNs now, const StepResult& last) override;

private:
    GpuId peer_;
    double rate_hz_;
    std::uint64_t bytes_;
    Rng rng_;
    bool pending_sleep_ = true;
};

}  // namespace nvbleed

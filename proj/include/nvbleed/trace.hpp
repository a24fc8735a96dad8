#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nvbleed/engine.hpp"

namespace nvbleed {

/// Multichannel sample series. Counter channels hold cumulative byte counts,
/// timing channels hold per-sample measurements.
struct Trace {
    std::vector<std::string> channels;
    std::vector<bool> cumulative;
    std::vector<TimeNs> times;
    std::vector<std::vector<double>> rows;  // rows[sample][channel]
    int label = -1;

    std::size_t size() const { return times.size(); }
    std::size_t channel_count() const { return channels.size(); }
    bool empty() const { return times.empty(); }
    void add_channel(std::string name, bool is_cumulative);
    void push(TimeNs t, std::vector<double> row);
    /// Per-interval view: cumulative channels are differenced, the first sample dropped.
    Trace series() const;
    Trace select(const std::vector<std::size_t>& channel_idx) const;
    /// Column-major copy of one channel.
    std::vector<double> column(std::size_t ch) const;
    /// Mean samples per second over the recorded span.
    double native_rate_hz() const;

    std::string to_csv() const;
    static Trace from_csv(const std::string& text);
};

struct RecorderConfig {
    GpuId peer = -1;              // probe target, -1 disables probing
    int probes_per_sample = 8;
    std::uint64_t probe_bytes = 256;
    bool read_counters = true;
    bool per_slot = true;         // one channel per local slot, else one aggregate
    bool throughput_channel = false;
    long long samples = 1000;
};

/// Spy loop: M probes then an optional counter read per sample.
class SpyRecorder : public Program {
public:
    SpyRecorder(RecorderConfig cfg, int slots, std::shared_ptr<Trace> out);
    std::optional<Action> next(TimeNs now, const StepResult& last) override;

    static std::shared_ptr<Trace> make_trace(const RecorderConfig& cfg, int slots);

private:
    void finish_sample(TimeNs t, const CounterSnapshot* snap);

    RecorderConfig cfg_;
    int slots_;
    std::shared_ptr<Trace> out_;
    int probes_done_ = 0;
    double latency_sum_ = 0;
    bool reading_ = false;
    bool started_ = false;
};

/// Ground-truth counter stream for a GPU: `time_s,gpu,counter,slot,value` rows.
std::string counter_trace_csv_header();
std::string counter_trace_csv_row(double time_s, GpuId gpu, Counter c, int slot, double value);

}  // namespace nvbleed

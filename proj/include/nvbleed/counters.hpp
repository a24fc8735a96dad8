#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "nvbleed/link.hpp"
#include "nvbleed/topo.hpp"

namespace nvbleed {

enum class Counter : int {
    ReceiveThroughput,
    TransmitThroughput,
    UserDataReceived,
    UserDataTransmitted,
    UserWriteDataTransmitted,
    UserResponseDataReceived,
    TotalDataReceived,
    TotalDataTransmitted,
    TotalResponseDataReceived,
    TotalWriteDataTransmitted,
    TotalNratomDataTransmitted,
    UserNratomDataTransmitted,
    TotalRatomDataTransmitted,
    UserRatomDataTransmitted,
};
inline constexpr int kCounterCount = 14;

std::string_view counter_name(Counter c);
Counter counter_from_name(std::string_view name);
bool is_user_counter(Counter c);

struct CounterSnapshot {
    GpuId gpu = 0;
    TimeNs time_ns = 0;
    bool aggregated = true;
    // One entry when aggregated, otherwise one per local slot.
    std::array<std::vector<double>, kCounterCount> values;

    const std::vector<double>& operator[](Counter c) const { return values[static_cast<int>(c)]; }
    double sum(Counter c) const;
};

struct ReadOptions {
    bool aggregation = true;
    bool throughput = false;  // throughput counters cost twice as much to read
};

struct CounterRead {
    CounterSnapshot snapshot;
    double cost_s = 0;
};

/// Accounting state for every GPU's counters. Owned by the engine.
class CounterState {
public:
    explicit CounterState(const Topology& topo);

    void set_enabled(bool on) { enabled_ = on; }
    bool enabled() const { return enabled_; }

    void register_profiler(ProcessId pid, GpuId gpu);
    bool is_registered(ProcessId pid, GpuId gpu) const { return profilers_.count({pid, gpu}) > 0; }

    void account_transfer(const PacketSchedule& sched, const TransferRequest& req);
    /// Phantom bytes seen by a cross-VM observer; excluded from conservation.
    void add_leak(GpuId gpu, int slot, double bytes);

    CounterRead read(GpuId gpu, ProcessId reader, TimeNs now, ReadOptions opt);
    /// Raw snapshot with no side effects (tests, final state dumps).
    CounterSnapshot peek(GpuId gpu, std::optional<ProcessId> user, bool aggregation, TimeNs now = 0) const;

    std::uint64_t total(GpuId gpu, int slot, Counter c) const;
    std::uint64_t user(ProcessId pid, GpuId gpu, int slot, Counter c) const;
    double leak(GpuId gpu, int slot) const { return leak_[gpu][slot]; }
    std::uint64_t packet_records(GpuId gpu) const { return packets_[gpu]; }

private:
    using Row = std::array<std::uint64_t, kCounterCount>;
    struct ReaderMark {
        TimeNs time = -1;
        std::vector<double> rx;
        std::vector<double> tx;
        std::uint64_t packets = 0;
    };

    Row& user_row(ProcessId pid, GpuId gpu, int slot);

    const Topology* topo_;
    int slots_;
    bool enabled_ = true;
    std::vector<std::vector<Row>> total_;                      // gpu x slot
    std::map<std::pair<ProcessId, GpuId>, std::vector<Row>> user_;
    std::vector<std::vector<double>> leak_;
    std::vector<std::uint64_t> packets_;
    std::set<std::pair<ProcessId, GpuId>> profilers_;
    std::map<std::pair<ProcessId, GpuId>, ReaderMark> marks_;
};

/// Timing-only substitute for the throughput counters.
double estimate_throughput(std::uint64_t transfer_bytes, double measured_time_s);

}  // namespace nvbleed

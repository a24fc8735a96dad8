#include "nvbleed/counters.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>

namespace nvbleed {

namespace {

constexpr std::array<std::string_view, kCounterCount> kNames = {
    "nvlink_receive_throughput",
    "nvlink_transmit_throughput",
    "nvlink_user_data_received",
    "nvlink_user_data_transmitted",
    "nvlink_user_write_data_transmitted",
    "nvlink_user_response_data_received",
    "nvlink_total_data_received",
    "nvlink_total_data_transmitted",
    "nvlink_total_response_data_received",
    "nvlink_total_write_data_transmitted",
    "nvlink_total_nratom_data_transmitted",
    "nvlink_user_nratom_data_transmitted",
    "nvlink_total_ratom_data_transmitted",
    "nvlink_user_ratom_data_transmitted",
};

constexpr int idx(Counter c) { return static_cast<int>(c); }

}  // namespace

std::string_view counter_name(Counter c) { return kNames[idx(c)]; }

Counter counter_from_name(std::string_view name) {
    for (int i = 0; i < kCounterCount; ++i)
        if (kNames[i] == name || kNames[i].substr(7) == name) return static_cast<Counter>(i);
    fail(ErrorCode::InvalidArgument, "unknown counter '" + std::string(name) + "'");
}

bool is_user_counter(Counter c) { return counter_name(c).find("_user_") != std::string_view::npos; }

double CounterSnapshot::sum(Counter c) const {
    const auto& v = values[idx(c)];
    return std::accumulate(v.begin(), v.end(), 0.0);
}

CounterState::CounterState(const Topology& topo)
    : topo_(&topo),
      slots_(topo.profile().slots_per_gpu),
      total_(topo.gpu_count(), std::vector<Row>(slots_, Row{})),
      leak_(topo.gpu_count(), std::vector<double>(slots_, 0.0)),
      packets_(topo.gpu_count(), 0) {}

void CounterState::register_profiler(ProcessId pid, GpuId gpu) {
    topo_->check_gpu(gpu);
    profilers_.insert({pid, gpu});
}

CounterState::Row& CounterState::user_row(ProcessId pid, GpuId gpu, int slot) {
    auto it = user_.find({pid, gpu});
    if (it == user_.end()) it = user_.emplace(std::make_pair(pid, gpu), std::vector<Row>(slots_, Row{})).first;
    return it->second[slot];
}

void CounterState::account_transfer(const PacketSchedule& sched, const TransferRequest& req) {
    const auto link = topo_->link_index(req.src, req.dst);
    if (!link) fail(ErrorCode::InvalidArgument, "account_transfer: GPUs are not linked");
    const int sbase = topo_->slot_base(req.src, *link);
    const int dbase = topo_->slot_base(req.dst, *link);
    const bool read = req.direction == Direction::Read;

    for (std::size_t j = 0; j < sched.per_slot_payload_flits.size(); ++j) {
        const std::uint64_t wire = sched.slot_wire_bytes(static_cast<int>(j));
        if (wire == 0) continue;
        const std::uint64_t data = sched.per_slot_payload_flits[j] * kFlitBytes;
        Row& rx = total_[req.dst][dbase + j];
        Row& tx = total_[req.src][sbase + j];
        rx[idx(Counter::TotalDataReceived)] += wire;
        tx[idx(Counter::TotalDataTransmitted)] += wire;
        Row& urx = user_row(req.issuer, req.dst, dbase + static_cast<int>(j));
        Row& utx = user_row(req.issuer, req.src, sbase + static_cast<int>(j));
        urx[idx(Counter::UserDataReceived)] += data;
        utx[idx(Counter::UserDataTransmitted)] += data;
        if (read) {
            rx[idx(Counter::TotalResponseDataReceived)] += wire;
            urx[idx(Counter::UserResponseDataReceived)] += data;
        } else {
            tx[idx(Counter::TotalWriteDataTransmitted)] += wire;
            utx[idx(Counter::UserWriteDataTransmitted)] += data;
        }
    }
    std::uint64_t records = sched.packet_count;
    if (read) {
        // Pull: one request packet travels back on the first slot.
        const std::uint64_t req_bytes = kRequestPacketFlits * kFlitBytes;
        total_[req.dst][dbase][idx(Counter::TotalDataTransmitted)] += req_bytes;
        total_[req.src][sbase][idx(Counter::TotalDataReceived)] += req_bytes;
        ++records;
    }
    packets_[req.src] += records;
    packets_[req.dst] += records;
}

void CounterState::add_leak(GpuId gpu, int slot, double bytes) {
    topo_->check_gpu(gpu);
    require(slot >= 0 && slot < slots_, "add_leak: slot out of range");
    leak_[gpu][slot] += bytes;
}

std::uint64_t CounterState::total(GpuId gpu, int slot, Counter c) const { return total_.at(gpu).at(slot)[idx(c)]; }

std::uint64_t CounterState::user(ProcessId pid, GpuId gpu, int slot, Counter c) const {
    auto it = user_.find({pid, gpu});
    return it == user_.end() ? 0 : it->second.at(slot)[idx(c)];
}

CounterSnapshot CounterState::peek(GpuId gpu, std::optional<ProcessId> user, bool aggregation, TimeNs now) const {
    topo_->check_gpu(gpu);
    CounterSnapshot s;
    s.gpu = gpu;
    s.time_ns = now;
    s.aggregated = aggregation;
    const std::vector<Row>* urows = nullptr;
    if (user) {
        auto it = user_.find({*user, gpu});
        if (it != user_.end()) urows = &it->second;
    }
    for (int c = 0; c < kCounterCount; ++c) {
        std::vector<double> v(slots_, 0.0);
        const auto counter = static_cast<Counter>(c);
        if (counter == Counter::ReceiveThroughput || counter == Counter::TransmitThroughput) {
            // filled by read()
        } else if (is_user_counter(counter)) {
            if (urows)
                for (int j = 0; j < slots_; ++j) v[j] = static_cast<double>((*urows)[j][c]);
        } else {
            for (int j = 0; j < slots_; ++j) v[j] = static_cast<double>(total_[gpu][j][c]);
            if (counter == Counter::TotalDataReceived)
                for (int j = 0; j < slots_; ++j) v[j] += leak_[gpu][j];
        }
        s.values[c] = aggregation ? std::vector<double>{std::accumulate(v.begin(), v.end(), 0.0)} : std::move(v);
    }
    return s;
}

CounterRead CounterState::read(GpuId gpu, ProcessId reader, TimeNs now, ReadOptions opt) {
    if (!enabled_) fail(ErrorCode::Unavailable, "performance counters are disabled (driver restriction)");
    topo_->check_gpu(gpu);
    if (!is_registered(reader, gpu))
        fail(ErrorCode::InvalidArgument,
             "process " + std::to_string(reader) + " is not registered as a profiler on GPU " + std::to_string(gpu));
    CounterSnapshot full = peek(gpu, reader, false, now);
    ReaderMark& mark = marks_[{reader, gpu}];
    const auto& rx = full[Counter::TotalDataReceived];
    const auto& tx = full[Counter::TotalDataTransmitted];
    if (opt.throughput && mark.time >= 0 && now > mark.time) {
        const double dt = static_cast<double>(now - mark.time) * 1e-9;
        for (int j = 0; j < slots_; ++j) {
            full.values[idx(Counter::ReceiveThroughput)][j] = (rx[j] - mark.rx[j]) / dt;
            full.values[idx(Counter::TransmitThroughput)][j] = (tx[j] - mark.tx[j]) / dt;
        }
    }
    CounterRead out;
    out.snapshot = full;
    if (opt.aggregation) {
        out.snapshot.aggregated = true;
        for (auto& v : out.snapshot.values) v = {std::accumulate(v.begin(), v.end(), 0.0)};
    }
    const PlatformProfile& p = topo_->profile();
    const std::uint64_t records = std::min(packets_[gpu] - mark.packets, p.counter_record_cap);
    out.cost_s = p.counter_read_cost * (opt.throughput ? 2.0 : 1.0) +
                 p.counter_record_cost * static_cast<double>(records);
    mark = ReaderMark{now, rx, tx, packets_[gpu]};
    return out;
}

double estimate_throughput(std::uint64_t transfer_bytes, double measured_time_s) {
    require(measured_time_s > 0, "estimate_throughput: measured time must be > 0");
    return static_cast<double>(transfer_bytes) / measured_time_s;
}

}  // namespace nvbleed

#include "nvbleed/link.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nvbleed {

const char* kind_name(TransferKind k) {
    switch (k) {
        case TransferKind::ExplicitCopy: return "explicit_copy";
        case TransferKind::UvmAccess: return "uvm_access";
        case TransferKind::Probe: return "probe";
    }
    return "?";
}

const char* direction_name(Direction d) { return d == Direction::Read ? "read" : "write"; }

void TransferRequest::validate(const PlatformProfile& profile) const {
    require(src != dst, "transfer: src and dst must differ");
    require(payload_bytes <= profile.max_transfer_bytes, "transfer: payload exceeds max_transfer_bytes");
}

std::uint64_t PacketSchedule::wire_bytes() const {
    std::uint64_t flits = 0;
    for (std::size_t i = 0; i < per_slot_payload_flits.size(); ++i)
        flits += per_slot_payload_flits[i] + per_slot_overhead_flits[i];
    return flits * kFlitBytes;
}

std::uint64_t PacketSchedule::payload_wire_bytes() const {
    return std::accumulate(per_slot_payload_flits.begin(), per_slot_payload_flits.end(), std::uint64_t{0}) *
           kFlitBytes;
}

std::uint64_t PacketSchedule::max_slot_wire_bytes() const {
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < per_slot_payload_flits.size(); ++i)
        m = std::max(m, slot_wire_bytes(static_cast<int>(i)));
    return m;
}

std::uint64_t wire_payload_bytes(std::uint64_t payload_bytes) {
    return (payload_bytes + kUnitBytes - 1) / kUnitBytes * kUnitBytes;
}

PacketSchedule schedule_transfer(std::uint64_t payload_bytes, int slots) {
    require(slots >= 1, "schedule_transfer: slots must be >= 1");
    PacketSchedule s;
    s.per_slot_payload_flits.assign(slots, 0);
    s.per_slot_overhead_flits.assign(slots, 0);
    const std::uint64_t flits = wire_payload_bytes(payload_bytes) / kFlitBytes;
    const std::uint64_t full = flits / kMaxPacketPayloadFlits;
    const std::uint64_t tail = flits % kMaxPacketPayloadFlits;
    s.packet_count = full + (tail ? 1 : 0);
    // Packets go round-robin, so slot j gets full packets j, j+slots, ...
    const auto n = static_cast<std::uint64_t>(slots);
    for (std::uint64_t j = 0; j < n; ++j) {
        const std::uint64_t full_here = full / n + (j < full % n ? 1 : 0);
        s.per_slot_payload_flits[j] = full_here * kMaxPacketPayloadFlits;
        s.per_slot_overhead_flits[j] = full_here * kPacketOverheadFlits;
    }
    if (tail) {
        const std::uint64_t j = full % n;
        s.per_slot_payload_flits[j] += tail;
        s.per_slot_overhead_flits[j] += kPacketOverheadFlits;
    }
    return s;
}

double contention_multiplier(std::uint64_t contending_wire_bytes, const PlatformProfile& profile) {
    if (contending_wire_bytes == 0) return 1.0;
    const double frac = std::min(1.0, static_cast<double>(contending_wire_bytes) / 256.0);
    const double m = 1.0 + (profile.contention_plateau_multiplier - 1.0) * std::sqrt(frac);
    return std::max(profile.contention_small_multiplier, m);
}

double transfer_time(const PacketSchedule& sched, std::uint64_t contending_wire_bytes,
                     const PlatformProfile& profile) {
    const double wire = static_cast<double>(sched.max_slot_wire_bytes()) / profile.slot_bandwidth;
    return (profile.probe_overhead + wire) * contention_multiplier(contending_wire_bytes, profile);
}

}  // namespace nvbleed

#pragma once

#include <cstdint>
#include <vector>

#include "nvbleed/error.hpp"
#include "nvbleed/topo.hpp"

namespace nvbleed {

inline constexpr int kFlitBytes = 16;
inline constexpr int kUnitBytes = 32;            // minimum wire quantum (2 flits)
inline constexpr int kMaxPacketPayloadFlits = 16;
inline constexpr int kPacketOverheadFlits = 2;   // header + metadata
inline constexpr int kRequestPacketFlits = 2;

enum class TransferKind { ExplicitCopy, UvmAccess, Probe };
// Read: the destination pulls (reply data counts as response traffic).
// Write: the source pushes.
enum class Direction { Read, Write };

const char* kind_name(TransferKind k);
const char* direction_name(Direction d);

struct TransferRequest {
    GpuId src = 0;
    GpuId dst = 1;
    std::uint64_t payload_bytes = 0;
    TransferKind kind = TransferKind::ExplicitCopy;
    Direction direction = Direction::Read;
    ProcessId issuer = 0;
    TimeNs issue_time = 0;

    void validate(const PlatformProfile& profile) const;
    GpuId issuer_gpu() const { return direction == Direction::Read ? dst : src; }
};

struct PacketSchedule {
    std::vector<std::uint64_t> per_slot_payload_flits;
    std::vector<std::uint64_t> per_slot_overhead_flits;
    std::uint64_t packet_count = 0;

    std::uint64_t slot_wire_bytes(int slot) const {
        return (per_slot_payload_flits[slot] + per_slot_overhead_flits[slot]) * kFlitBytes;
    }
    std::uint64_t wire_bytes() const;
    std::uint64_t payload_wire_bytes() const;
    std::uint64_t max_slot_wire_bytes() const;
};

std::uint64_t wire_payload_bytes(std::uint64_t payload_bytes);
PacketSchedule schedule_transfer(std::uint64_t payload_bytes, int slots);
double contention_multiplier(std::uint64_t contending_wire_bytes, const PlatformProfile& profile);
/// Noise-free duration in seconds; the engine adds timing jitter on top.
double transfer_time(const PacketSchedule& sched, std::uint64_t contending_wire_bytes,
                     const PlatformProfile& profile);

}  // namespace nvbleed

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nvbleed/error.hpp"

namespace nvbleed {

enum class NvlinkVersion { V1, V2 };

/// Platform constants shared by every module. Bandwidth and slot counts are
/// hardware facts; the latency/contention constants are fitted by `calibrate`.
struct PlatformProfile {
    std::string name;
    NvlinkVersion nvlink_version = NvlinkVersion::V2;
    int slots_per_gpu = 6;
    int slots_per_peer_link = 3;
    double slot_bandwidth = 25e9;             // bytes per second, per slot
    double probe_overhead = 8.6e-6;           // seconds, fixed per API call
    double counter_read_cost = 5.2e-4;        // seconds per counter read
    double counter_record_cost = 2.0e-7;      // seconds per packet record delivered with a read
    std::uint64_t counter_record_cap = 32768; // records buffered between reads; older ones are dropped
    double contention_plateau_multiplier = 1.30;
    double contention_small_multiplier = 1.10;
    double timing_jitter = 0.08;              // sd of per-call latency noise, fraction of probe_overhead
    double ambient_rate_hz = 250.0;           // background traffic on links in use
    std::uint64_t ambient_bytes = 512;
    std::uint64_t max_transfer_bytes = std::uint64_t{1} << 30;
    std::string calibrated_against;           // provenance of fitted constants

    void validate() const;
};

PlatformProfile gcp_profile();
PlatformProfile dgx_profile();
/// "gcp" / "dgx", or a path to a profile file.
PlatformProfile load_profile(const std::string& name_or_path);
PlatformProfile parse_profile(std::string_view text);
std::string format_profile(const PlatformProfile& p);

struct Link {
    GpuId a = 0;
    GpuId b = 0;
    int slots = 0;
};

enum class TopologyShape { Hypercube8, Ring8, Custom };

std::string_view shape_name(TopologyShape s);
TopologyShape shape_from_name(std::string_view s);

class Topology {
public:
    using Edge = std::pair<GpuId, GpuId>;

    /// Presets are 8-GPU; `custom` takes an explicit undirected edge list over `gpu_count` GPUs.
    static Topology build(const PlatformProfile& profile, TopologyShape shape,
                          std::span<const Edge> custom_edges = {}, int gpu_count = 8);

    /// Same topology with GPUs partitioned into VMs (one VmId per GPU).
    Topology with_vms(std::vector<VmId> vm_of_gpu) const;
    /// GCP 4+4 style split used for the cross-VM scenario: {0,1} / {2,3} / rest.
    Topology cross_vm_split() const;

    const PlatformProfile& profile() const { return profile_; }
    TopologyShape shape() const { return shape_; }
    int gpu_count() const { return gpu_count_; }
    const std::vector<Link>& links() const { return links_; }

    /// Slot count of the direct link; 0 when not directly connected.
    int peer_slots(GpuId a, GpuId b) const;
    std::optional<int> link_index(GpuId a, GpuId b) const;
    /// Local slot index on `gpu` of slot 0 of link `link`.
    int slot_base(GpuId gpu, int link) const;
    std::vector<GpuId> neighbors(GpuId g) const;
    VmId vm_of(GpuId g) const;
    void check_gpu(GpuId g) const;

    /// Order in which a ring-style workload visits `n` GPUs (consecutive entries
    /// are linked wherever the topology allows it).
    std::vector<GpuId> ring_order(int n) const;

    std::string describe() const;
    /// Topology file text (see README for the schema).
    std::string format() const;
    static Topology parse(std::string_view text);

private:
    PlatformProfile profile_;
    TopologyShape shape_ = TopologyShape::Custom;
    int gpu_count_ = 0;
    std::vector<Link> links_;
    std::vector<std::vector<int>> link_of_;     // gpu x gpu -> link index or -1
    std::vector<std::vector<int>> slot_base_;   // gpu x link -> base slot or -1
    std::vector<VmId> vm_;
};

/// The platform's native layout: ring8 for NVLink-V2 profiles, hypercube8 for V1.
Topology default_topology(const PlatformProfile& profile);

}  // namespace nvbleed

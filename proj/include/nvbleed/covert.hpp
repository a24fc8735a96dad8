#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nvbleed/engine.hpp"
#include "nvbleed/topo.hpp"

namespace nvbleed {

enum class Protocol { ContenLink, LeakyCounter };

std::string_view protocol_name(Protocol p);
Protocol protocol_from_name(std::string_view s);

using Bits = std::vector<std::uint8_t>;

/// Random message with equal numbers of 0s and 1s (n rounded down to even).
Bits random_message(std::size_t n, std::uint64_t seed);
std::string bits_to_string(const Bits& b);

struct ProtocolConfig {
    Protocol protocol = Protocol::ContenLink;
    std::uint64_t sender_size = 256;
    std::uint64_t probe_size = 256;
    TimeNs probe_delay_ns = 100;       // receiver probes this long after the slot opens
    int training_bits = 100;           // known preamble used to fit the threshold
    int handshake_pulses = 8;
    int handshake_attempts = 4;
    double guard_sigmas = 4.0;
    TimeNs sender_start_ns = 50'000;   // when the sender begins phase 1
};

/// Fixed timing derived from the profile before any bit is sent.
struct SlotPlan {
    TimeNs slot_ns = 0;
    TimeNs read_at_ns = 0;        // leaky receiver: counter read offset inside a slot
    TimeNs chip_ns = 0;           // handshake chip length
    TimeNs grid_ns = 0;           // handshake start times are multiples of this
    TimeNs lead_ns = 0;           // gap between the end of the ack and the first slot
    long long nop_k = 0;          // NOP iterations for a 0 bit
    double provisional_threshold_ns = 0;
    TimeNs probe_nominal_ns = 0;
};

SlotPlan plan_slots(const PlatformProfile& profile, const Topology& topo, const ProtocolConfig& cfg);

struct TrialOptions {
    bool receiver_present = true;
    bool counters_enabled = true;
    bool ambient = true;
    double third_party_rate_hz = 0;         // extra background pushes on the covert link
    std::uint64_t third_party_bytes = 256;
    bool event_log = false;
};

struct TrialResult {
    Bits sent;
    Bits received;
    double threshold = 0;
    double bandwidth_bps = 0;
    double error_rate = 0;
    std::size_t edit_distance = 0;
    TimeNs sync_time_ns = 0;       // agreed start of the first slot (preamble)
    TimeNs message_start_ns = 0;
    TimeNs message_end_ns = 0;
    int handshake_attempts = 0;
    std::vector<double> raw;       // per-slot measurement (ns or bytes), preamble first
    std::string event_log;
};

struct ChannelReport {
    Protocol protocol = Protocol::ContenLink;
    std::string profile;
    std::uint64_t sender_size = 0;
    int trials = 0;
    std::size_t bits = 0;
    double bandwidth_bps = 0;
    double error_rate = 0;
    std::vector<TrialResult> per_trial;
};

/// One handshake + preamble + message transmission between GPU1 (sender) and GPU0 (receiver).
TrialResult run_trial(const Topology& topo, const ProtocolConfig& cfg, const Bits& message, std::uint64_t seed,
                      const TrialOptions& opt = {});

ChannelReport evaluate_channel(const Topology& topo, const ProtocolConfig& cfg, std::size_t bits, int trials,
                               std::uint64_t seed, const TrialOptions& opt = {});

std::vector<ChannelReport> sweep_sender_sizes(const Topology& topo, ProtocolConfig cfg,
                                              std::span<const std::uint64_t> sizes, std::size_t bits, int trials,
                                              std::uint64_t seed);

/// 256 B, 1 KB, ... 4 MB.
std::vector<std::uint64_t> default_sweep_sizes();

/// Midpoint of the two medians; throws Inseparable when it cannot split the classes.
double calibrate_threshold(std::span<const double> zeros, std::span<const double> ones);

std::size_t levenshtein(std::string_view a, std::string_view b);
std::size_t levenshtein(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct CalibrationTargets {
    double contenlink_bps = 0;
    double leakycounter_bps = 0;
};

struct CalibrationResult {
    PlatformProfile profile;
    double contenlink_bps = 0;
    double leakycounter_bps = 0;
    int iterations = 0;
};

/// Fits probe_overhead then counter_read_cost by bisection so the simulated
/// channels at sender size 256 B hit the targets.
CalibrationResult calibrate_profile(const PlatformProfile& base, CalibrationTargets targets, std::uint64_t seed,
                                    std::size_t bits = 2000);

}  // namespace nvbleed

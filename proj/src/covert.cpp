#include "nvbleed/covert.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>
#include <optional>

namespace nvbleed {

std::string_view protocol_name(Protocol p) { return p == Protocol::ContenLink ? "contenlink" : "leakycounter"; }

Protocol protocol_from_name(std::string_view s) {
    if (s == "contenlink") return Protocol::ContenLink;
    if (s == "leakycounter") return Protocol::LeakyCounter;
    fail(ErrorCode::InvalidArgument, "unknown protocol '" + std::string(s) + "' (contenlink|leakycounter)");
}

Bits random_message(std::size_t n, std::uint64_t seed) {
    Bits b(n / 2 * 2, 0);
    std::fill(b.begin() + static_cast<std::ptrdiff_t>(b.size() / 2), b.end(), 1);
    Rng rng = Rng::derive(seed, {0x3e55a9e});
    for (std::size_t i = b.size(); i > 1; --i) std::swap(b[i - 1], b[rng.below(i)]);
    return b;
}

std::string bits_to_string(const Bits& b) {
    std::string s(b.size(), '0');
    for (std::size_t i = 0; i < b.size(); ++i) s[i] = b[i] ? '1' : '0';
    return s;
}

namespace {

// Ukkonen's banded DP: a band of half-width k gives the exact distance
// whenever that distance is <= k, so the band is doubled until it fits.
template <class Seq>
std::optional<std::size_t> banded_distance(const Seq& a, const Seq& b, std::size_t k) {
    const std::size_t n = a.size(), m = b.size();
    if ((n > m ? n - m : m - n) > k) return std::nullopt;
    constexpr std::size_t inf = std::numeric_limits<std::size_t>::max() / 2;
    std::vector<std::size_t> prev(m + 1, inf), cur(m + 1, inf);
    for (std::size_t j = 0; j <= std::min(m, k); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        const std::size_t lo = i > k ? i - k : 0;
        const std::size_t hi = std::min(m, i + k);
        if (lo > 0) cur[lo - 1] = inf;
        for (std::size_t j = lo; j <= hi; ++j) {
            if (j == 0) {
                cur[0] = i;
                continue;
            }
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    if (prev[m] > k) return std::nullopt;
    return prev[m];
}

template <class Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
    const std::size_t longest = std::max(a.size(), b.size());
    for (std::size_t k = 16;; k *= 2) {
        if (auto d = banded_distance(a, b, std::min(k, longest))) return *d;
    }
}

TimeNs ns(double seconds) { return static_cast<TimeNs>(std::llround(seconds * 1e9)); }

TimeNs ceil_to(TimeNs t, TimeNs grid) { return (t + grid - 1) / grid * grid; }
TimeNs round_to(TimeNs t, TimeNs grid) { return (t + grid / 2) / grid * grid; }

// Matches the 1010... chip pattern in a stream of (probe start, contended) records.
class PatternDetector {
public:
    PatternDetector(TimeNs chip, int pulses, TimeNs back) : chip_(chip), pulses_(pulses), back_(back) {}

    std::optional<TimeNs> add(TimeNs start, bool contended) {
        records_.push_back({start, contended});
        if (contended) anchors_.push_back(start);
        const TimeNs span = 2 * pulses_ * chip_;
        while (!anchors_.empty() && start >= anchors_.front() - back_ + span) {
            const TimeNs a = anchors_.front();
            anchors_.pop_front();
            if (matches(a - back_)) {
                reset();
                return a;
            }
        }
        const TimeNs keep = anchors_.empty() ? start - span : anchors_.front() - back_;
        while (!records_.empty() && records_.front().t < keep) records_.pop_front();
        return std::nullopt;
    }

    void reset() {
        records_.clear();
        anchors_.clear();
    }

private:
    struct Rec {
        TimeNs t;
        bool c;
    };

    bool matches(TimeNs p) const {
        std::vector<bool> hit(pulses_, false);
        std::vector<int> gap_n(pulses_, 0);
        int gap_c = 0, gap_total = 0;
        for (const Rec& r : records_) {
            if (r.t < p) continue;
            const TimeNs off = r.t - p;
            const TimeNs chip = off / chip_;
            if (chip >= 2 * pulses_) break;
            const int i = static_cast<int>(chip / 2);
            if (chip % 2 == 0) {
                if (r.c && off - chip * chip_ < chip_ * 3 / 4) hit[i] = true;
            } else {
                ++gap_n[i];
                ++gap_total;
                gap_c += r.c ? 1 : 0;
            }
        }
        // Jitter can push contended probes under the threshold, so one missing
        // pulse is tolerated.
        int hits = 0;
        for (int i = 0; i < pulses_; ++i) {
            if (gap_n[i] == 0) return false;
            hits += hit[i] ? 1 : 0;
        }
        return hits >= pulses_ - 1 && hit[0] && gap_c * 100 <= gap_total * 35;
    }

    TimeNs chip_;
    int pulses_;
    TimeNs back_;
    std::deque<Rec> records_;
    std::deque<TimeNs> anchors_;
};

struct Session {
    ProtocolConfig cfg;
    SlotPlan plan;
    Bits frame;  // preamble followed by the message
    TimeNs receiver_start = -1;
    TimeNs sender_start = -1;
    bool receiver_timeout = false;
    bool sender_timeout = false;
    int attempts = 0;
    std::vector<double> raw;

    TimeNs attempt_span() const {
        const TimeNs pattern = 2 * cfg.handshake_pulses * plan.chip_ns;
        return 2 * pattern + 2 * plan.grid_ns + 4 * plan.chip_ns;
    }
};

act::Transfer probe_to(GpuId peer, std::uint64_t bytes) {
    return act::Transfer{peer, bytes, TransferKind::Probe, Direction::Read};
}

class Receiver : public Program {
public:
    explicit Receiver(std::shared_ptr<Session> s)
        : s_(std::move(s)),
          det_(s_->plan.chip_ns, s_->cfg.handshake_pulses, s_->plan.probe_nominal_ns * 3 / 2),
          deadline_(s_->cfg.sender_start_ns + s_->cfg.handshake_attempts * s_->attempt_span() + s_->plan.grid_ns) {}

    std::optional<Action> next(TimeNs now, const StepResult& last) override {
        const SlotPlan& plan = s_->plan;
        const ProtocolConfig& cfg = s_->cfg;
        const bool leaky = cfg.protocol == Protocol::LeakyCounter;
        for (;;) {
            switch (phase_) {
                case Phase::Listen: {
                    if (last.kind == StepResult::Kind::Transfer) {
                        const bool contended = static_cast<double>(last.elapsed()) > plan.provisional_threshold_ns;
                        if (det_.add(last.start, contended)) {
                            ack_at_ = ceil_to(now + plan.chip_ns, plan.grid_ns);
                            phase_ = Phase::Ack;
                            continue;
                        }
                    }
                    if (now > deadline_) {
                        s_->receiver_timeout = true;
                        return std::nullopt;
                    }
                    return probe_to(1, cfg.probe_size);
                }
                case Phase::Ack: {
                    if (pulse_ < cfg.handshake_pulses) {
                        const TimeNs t = ack_at_ + 2 * pulse_ * plan.chip_ns;
                        if (now < t) return act::SleepUntil{t};
                        if (now < t + plan.chip_ns / 2) return probe_to(1, cfg.probe_size);
                        ++pulse_;
                        continue;
                    }
                    start_ = ack_at_ + 2 * cfg.handshake_pulses * plan.chip_ns + plan.lead_ns;
                    s_->receiver_start = start_;
                    phase_ = Phase::Slots;
                    if (leaky) {
                        step_ = 5;
                        return act::ReadCounters{};
                    }
                    continue;
                }
                case Phase::Slots: {
                    const TimeNs base = start_ + static_cast<TimeNs>(slot_) * plan.slot_ns;
                    switch (step_) {
                        case 0:
                            if (slot_ == s_->frame.size()) return std::nullopt;
                            step_ = 1;
                            return act::SleepUntil{base + cfg.probe_delay_ns};
                        case 1:
                            step_ = 2;
                            return probe_to(1, cfg.probe_size);
                        case 2:
                            if (!leaky) {
                                s_->raw.push_back(static_cast<double>(last.elapsed()));
                                ++slot_;
                                step_ = 0;
                                continue;
                            }
                            step_ = 3;
                            return act::SleepUntil{base + plan.read_at_ns};
                        case 3:
                            step_ = 4;
                            return act::ReadCounters{};
                        case 4: {
                            const double v = counter_sum(last);
                            s_->raw.push_back(v - prev_);
                            prev_ = v;
                            ++slot_;
                            step_ = 0;
                            continue;
                        }
                        case 5:
                            prev_ = counter_sum(last);
                            step_ = 0;
                            continue;
                    }
                    return std::nullopt;
                }
            }
        }
    }

private:
    enum class Phase { Listen, Ack, Slots };

    static double counter_sum(const StepResult& r) {
        return r.snapshot->sum(Counter::TotalDataReceived) + r.snapshot->sum(Counter::TotalDataTransmitted);
    }

    std::shared_ptr<Session> s_;
    PatternDetector det_;
    TimeNs deadline_;
    Phase phase_ = Phase::Listen;
    TimeNs ack_at_ = 0;
    int pulse_ = 0;
    TimeNs start_ = 0;
    std::size_t slot_ = 0;
    int step_ = 0;
    double prev_ = 0;
};

class Sender : public Program {
public:
    Sender(std::shared_ptr<Session> s)
        : s_(std::move(s)),
          det_(s_->plan.chip_ns, s_->cfg.handshake_pulses, s_->plan.probe_nominal_ns * 3 / 2),
          t0_(s_->cfg.sender_start_ns) {}

    std::optional<Action> next(TimeNs now, const StepResult& last) override {
        const SlotPlan& plan = s_->plan;
        const ProtocolConfig& cfg = s_->cfg;
        const TimeNs pattern = 2 * cfg.handshake_pulses * plan.chip_ns;
        for (;;) {
            switch (phase_) {
                case Phase::Emit: {
                    if (pulse_ < cfg.handshake_pulses) {
                        // A pulse is a burst of back-to-back copies filling half a chip.
                        const TimeNs t = t0_ + 2 * pulse_ * plan.chip_ns;
                        if (now < t) return act::SleepUntil{t};
                        if (now < t + plan.chip_ns / 2) return probe_to(0, cfg.probe_size);
                        ++pulse_;
                        continue;
                    }
                    ++s_->attempts;
                    phase_ = Phase::Listen;
                    deadline_ = t0_ + s_->attempt_span();
                    det_.reset();
                    // Stay quiet for the trailing gap chips of the pattern.
                    if (now < t0_ + pattern) return act::SleepUntil{t0_ + pattern};
                    continue;
                }
                case Phase::Listen: {
                    if (last.kind == StepResult::Kind::Transfer) {
                        const bool contended = static_cast<double>(last.elapsed()) > plan.provisional_threshold_ns;
                        if (auto a = det_.add(last.start, contended)) {
                            const TimeNs ack = round_to(*a, plan.grid_ns);
                            start_ = ack + pattern + plan.lead_ns;
                            s_->sender_start = start_;
                            phase_ = Phase::Slots;
                            continue;
                        }
                    }
                    if (now > deadline_) {
                        if (s_->attempts >= cfg.handshake_attempts) {
                            s_->sender_timeout = true;
                            return std::nullopt;
                        }
                        t0_ = now + 4 * plan.chip_ns;
                        pulse_ = 0;
                        phase_ = Phase::Emit;
                        continue;
                    }
                    return probe_to(0, cfg.probe_size);
                }
                case Phase::Slots: {
                    if (step_ == 0) {
                        if (slot_ == s_->frame.size()) return std::nullopt;
                        step_ = 1;
                        return act::SleepUntil{start_ + static_cast<TimeNs>(slot_) * plan.slot_ns};
                    }
                    step_ = 0;
                    const bool one = s_->frame[slot_++] != 0;
                    if (one) return act::Transfer{0, cfg.sender_size, TransferKind::ExplicitCopy, Direction::Read};
                    return act::NopLoop{plan.nop_k};
                }
            }
        }
    }

private:
    enum class Phase { Emit, Listen, Slots };

    std::shared_ptr<Session> s_;
    PatternDetector det_;
    TimeNs t0_;
    TimeNs deadline_ = 0;
    Phase phase_ = Phase::Emit;
    int pulse_ = 0;
    TimeNs start_ = 0;
    std::size_t slot_ = 0;
    int step_ = 0;
};

Bits preamble(int n) { return random_message(static_cast<std::size_t>(n), 0x9ea3b1e); }

}  // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) { return edit_distance(a, b); }

std::size_t levenshtein(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    return edit_distance(a, b);
}

SlotPlan plan_slots(const PlatformProfile& p, const Topology& topo, const ProtocolConfig& cfg) {
    require(cfg.probe_size > 0, "covert: probe size must be > 0");
    require(cfg.training_bits >= 2, "covert: at least 2 training bits required");
    require(cfg.handshake_pulses >= 2 && cfg.handshake_attempts >= 1, "covert: bad handshake parameters");
    const int slots = topo.peer_slots(0, 1);
    require(slots > 0, "covert: GPU0 and GPU1 must share an NVLink");
    const PacketSchedule probe = schedule_transfer(cfg.probe_size, slots);
    const PacketSchedule sender = schedule_transfer(cfg.sender_size, slots);
    const double probe_idle = transfer_time(probe, 0, p);
    const double probe_busy = transfer_time(probe, sender.wire_bytes(), p);
    const double sender_dur = transfer_time(sender, 0, p);
    const double guard = cfg.guard_sigmas * p.timing_jitter * p.probe_overhead;
    // Third-party traffic can stretch the sender's copy by the plateau factor;
    // the slot absorbs that so one late copy cannot push into the next slot.
    const double sender_worst = transfer_time(sender, 1u << 20, p);
    const double busy_end = std::max(sender_worst, cfg.probe_delay_ns * 1e-9 + probe_busy) + guard;

    SlotPlan plan;
    plan.probe_nominal_ns = ns(probe_idle);
    plan.nop_k = ns(sender_dur);
    plan.provisional_threshold_ns = 0.5 * (probe_idle + transfer_time(probe, 1u << 20, p)) * 1e9;
    plan.chip_ns = 4 * plan.probe_nominal_ns;
    plan.grid_ns = 4 * cfg.handshake_pulses * plan.chip_ns;
    if (cfg.protocol == Protocol::ContenLink) {
        plan.slot_ns = ns(busy_end);
        plan.lead_ns = 2 * plan.chip_ns;
    } else {
        // Records for the probe, the sender's copy and both request packets.
        const double records = static_cast<double>(probe.packet_count + sender.packet_count + 2);
        const double read = p.counter_read_cost + p.counter_record_cost * records;
        plan.read_at_ns = ns(busy_end);
        plan.slot_ns = ns(busy_end + read + guard);
        plan.lead_ns = 2 * plan.chip_ns + ns(2 * p.counter_read_cost + 2e3 * p.counter_record_cost);
    }
    return plan;
}

TrialResult run_trial(const Topology& topo, const ProtocolConfig& cfg, const Bits& message, std::uint64_t seed,
                      const TrialOptions& opt) {
    if (cfg.protocol == Protocol::LeakyCounter && !opt.counters_enabled)
        fail(ErrorCode::Unavailable, "LeakyCounterLink needs performance counters, which are disabled");
    const PlatformProfile& p = topo.profile();
    auto s = std::make_shared<Session>();
    s->cfg = cfg;
    s->plan = plan_slots(p, topo, cfg);
    s->frame = preamble(cfg.training_bits);
    s->frame.insert(s->frame.end(), message.begin(), message.end());

    EngineConfig ec;
    ec.seed = seed;
    ec.counters_enabled = opt.counters_enabled;
    ec.event_log = opt.event_log;
    ec.duration = cfg.sender_start_ns + (cfg.handshake_attempts + 1) * s->attempt_span() + s->plan.lead_ns +
                  static_cast<TimeNs>(s->frame.size() + 2) * s->plan.slot_ns;
    Engine eng(topo, ec);
    if (opt.receiver_present)
        eng.add_process(SimProcess{0, topo.vm_of(0), std::make_shared<Receiver>(s), "receiver",
                                   cfg.protocol == Protocol::LeakyCounter, 0});
    eng.add_process(SimProcess{1, topo.vm_of(1), std::make_shared<Sender>(s), "sender", false, 0});
    if (opt.ambient && p.ambient_rate_hz > 0)
        eng.add_process(SimProcess{1, topo.vm_of(1),
                                   std::make_shared<AmbientTraffic>(0, p.ambient_rate_hz, p.ambient_bytes, seed),
                                   "ambient", false, 0});
    if (opt.third_party_rate_hz > 0)
        eng.add_process(SimProcess{1, topo.vm_of(1),
                                   std::make_shared<AmbientTraffic>(0, opt.third_party_rate_hz,
                                                                    opt.third_party_bytes, seed ^ 0x7411d),
                                   "third-party", false, 0});
    eng.run();

    if (s->sender_timeout) fail(ErrorCode::Timeout, "handshake timed out: sender never saw the receiver's reply");
    if (s->receiver_timeout || s->sender_start < 0 || s->receiver_start < 0)
        fail(ErrorCode::Timeout, "handshake timed out: pattern never detected");

    TrialResult r;
    r.sent = message;
    r.raw = s->raw;
    r.handshake_attempts = s->attempts;
    r.sync_time_ns = s->receiver_start;
    r.event_log = eng.event_log();
    const auto n_train = static_cast<std::size_t>(cfg.training_bits);
    require(s->raw.size() == s->frame.size(), "covert: receiver stopped before the end of the message");
    std::vector<double> zeros, ones;
    for (std::size_t i = 0; i < n_train; ++i) (s->frame[i] ? ones : zeros).push_back(s->raw[i]);
    r.threshold = calibrate_threshold(zeros, ones);
    r.received.resize(message.size());
    for (std::size_t i = 0; i < message.size(); ++i) r.received[i] = s->raw[n_train + i] > r.threshold ? 1 : 0;
    r.message_start_ns = s->receiver_start + static_cast<TimeNs>(n_train) * s->plan.slot_ns;
    r.message_end_ns = r.message_start_ns + static_cast<TimeNs>(message.size()) * s->plan.slot_ns;
    r.edit_distance = levenshtein(std::span<const std::uint8_t>(r.sent), std::span<const std::uint8_t>(r.received));
    r.error_rate = message.empty() ? 0.0 : static_cast<double>(r.edit_distance) / static_cast<double>(message.size());
    const double secs = static_cast<double>(r.message_end_ns - r.message_start_ns) * 1e-9;
    r.bandwidth_bps = secs > 0 ? static_cast<double>(message.size()) / secs : 0.0;
    return r;
}

ChannelReport evaluate_channel(const Topology& topo, const ProtocolConfig& cfg, std::size_t bits, int trials,
                               std::uint64_t seed, const TrialOptions& opt) {
    require(trials >= 1, "evaluate_channel: trials must be >= 1");
    ChannelReport rep;
    rep.protocol = cfg.protocol;
    rep.profile = topo.profile().name;
    rep.sender_size = cfg.sender_size;
    rep.trials = trials;
    rep.bits = bits;
    double elapsed = 0, errors = 0, sent = 0;
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t tseed = Rng::derive(seed, {static_cast<std::uint64_t>(t)}).next_u64();
        TrialResult r = run_trial(topo, cfg, random_message(bits, tseed), tseed, opt);
        elapsed += static_cast<double>(r.message_end_ns - r.message_start_ns) * 1e-9;
        errors += r.error_rate;
        sent += static_cast<double>(r.sent.size());
        rep.per_trial.push_back(std::move(r));
    }
    rep.bandwidth_bps = elapsed > 0 ? sent / elapsed : 0.0;
    rep.error_rate = errors / trials;
    return rep;
}

std::vector<std::uint64_t> default_sweep_sizes() {
    std::vector<std::uint64_t> v;
    for (std::uint64_t s = 256; s <= (4u << 20); s *= 4) v.push_back(s);
    return v;
}

std::vector<ChannelReport> sweep_sender_sizes(const Topology& topo, ProtocolConfig cfg,
                                              std::span<const std::uint64_t> sizes, std::size_t bits, int trials,
                                              std::uint64_t seed) {
    std::vector<ChannelReport> out;
    for (std::uint64_t s : sizes) {
        cfg.sender_size = s;
        out.push_back(evaluate_channel(topo, cfg, bits, trials, seed));
    }
    return out;
}

double calibrate_threshold(std::span<const double> zeros, std::span<const double> ones) {
    require(!zeros.empty() && !ones.empty(), "calibrate_threshold: need samples of both bit values");
    auto median = [](std::span<const double> v) {
        std::vector<double> s(v.begin(), v.end());
        std::sort(s.begin(), s.end());
        const std::size_t n = s.size();
        return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    };
    const double m0 = median(zeros), m1 = median(ones);
    if (!(m1 > m0)) fail(ErrorCode::Inseparable, "threshold calibration: contended and idle samples overlap");
    const double t = 0.5 * (m0 + m1);
    std::size_t wrong = 0;
    for (double z : zeros) wrong += z > t ? 1 : 0;
    for (double o : ones) wrong += o <= t ? 1 : 0;
    if (wrong * 4 > zeros.size() + ones.size())
        fail(ErrorCode::Inseparable, "threshold calibration: more than 25% of training bits misclassified");
    return t;
}

CalibrationResult calibrate_profile(const PlatformProfile& base, CalibrationTargets targets, std::uint64_t seed,
                                    std::size_t bits) {
    CalibrationResult res;
    res.profile = base;
    auto measure = [&](Protocol proto) {
        ProtocolConfig cfg;
        cfg.protocol = proto;
        ++res.iterations;
        // Slot lengths do not depend on background traffic; leaving it out keeps
        // the extreme ends of the search range decodable.
        TrialOptions quiet;
        quiet.ambient = false;
        return evaluate_channel(default_topology(res.profile), cfg, bits, 1, seed, quiet).bandwidth_bps;
    };
    // Bandwidth falls monotonically as either constant grows.
    auto fit = [&](double& knob, double lo, double hi, double target, Protocol proto, const char* what) {
        if (!std::isfinite(target) || target <= 0)
            fail(ErrorCode::Unreachable, std::string("calibrate: ") + what + " target must be finite and positive");
        knob = lo;
        const double bw_lo = measure(proto);
        knob = hi;
        const double bw_hi = measure(proto);
        if (target > bw_lo || target < bw_hi)
            fail(ErrorCode::Unreachable, std::string("calibrate: ") + what + " target " + std::to_string(target) +
                                             " bps outside reachable range [" + std::to_string(bw_hi) + ", " +
                                             std::to_string(bw_lo) + "]");
        double a = lo, b = hi, bw = 0;
        for (int i = 0; i < 60; ++i) {
            knob = std::sqrt(a * b);
            bw = measure(proto);
            if (std::fabs(bw - target) <= 1e-3 * target) break;
            (bw > target ? a : b) = knob;
        }
        return bw;
    };
    res.contenlink_bps =
        fit(res.profile.probe_overhead, 1e-6, 1e-4, targets.contenlink_bps, Protocol::ContenLink, "ContenLink");
    res.leakycounter_bps = fit(res.profile.counter_read_cost, 1e-6, 1e-2, targets.leakycounter_bps,
                               Protocol::LeakyCounter, "LeakyCounterLink");
    // The read-cost fit does not move the timing channel, but re-measure for the report.
    res.contenlink_bps = measure(Protocol::ContenLink);
    res.profile.calibrated_against = "contenlink=" + std::to_string(std::llround(targets.contenlink_bps)) +
                                     "bps leakycounter=" + std::to_string(std::llround(targets.leakycounter_bps)) +
                                     "bps";
    return res;
}

}  // namespace nvbleed

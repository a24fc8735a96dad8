#include "nvbleed/engine.hpp"

#include <algorithm>
#include <cmath>

namespace nvbleed {

Engine::Engine(Topology topo, EngineConfig cfg)
    : topo_(std::move(topo)),
      cfg_(cfg),
      counters_(topo_),
      active_(topo_.links().size()),
      leak_rng_(Rng::derive(cfg.seed, {0x1eaf})) {
    require(cfg_.duration >= 0, "engine: duration must be >= 0");
    counters_.set_enabled(cfg_.counters_enabled);
    if (cfg_.observer) {
        const CrossVmObserver& o = *cfg_.observer;
        topo_.check_gpu(o.observer);
        const auto victim = topo_.link_index(o.victim_a, o.victim_b);
        if (!victim) fail(ErrorCode::InvalidArgument, "cross-VM observer: victim GPUs are not linked");
        std::optional<int> shared = topo_.link_index(o.observer, o.victim_a);
        if (!shared && o.observer != o.victim_b) shared = topo_.link_index(o.observer, o.victim_b);
        if (!shared || o.observer == o.victim_a || o.observer == o.victim_b)
            fail(ErrorCode::InvalidArgument, "cross-VM observer: no physical link between observer GPU " +
                                                 std::to_string(o.observer) + " and the victim link");
        require(o.alpha >= 0 && o.noise_rel >= 0, "cross-VM observer: alpha and noise must be >= 0");
        victim_link_ = *victim;
        observer_link_ = *shared;
    }
}

ProcessId Engine::add_process(SimProcess p) {
    topo_.check_gpu(p.gpu);
    require(p.program != nullptr, "engine: process without a program");
    if (p.vm != topo_.vm_of(p.gpu))
        fail(ErrorCode::InvalidArgument, "engine: process '" + p.name + "' placed on GPU " + std::to_string(p.gpu) +
                                             " outside its VM");
    const auto pid = static_cast<ProcessId>(procs_.size());
    if (p.profiler) counters_.register_profiler(pid, p.gpu);
    if (p.essential) ++essential_running_;
    const TimeNs start = p.start;
    procs_.push_back(ProcState{std::move(p), Rng::derive(cfg_.seed, {0x9e0c, static_cast<std::uint64_t>(pid)}), {}, false});
    procs_.back().last.start = procs_.back().last.end = start;
    schedule(pid, start);
    return pid;
}

void Engine::schedule(ProcessId pid, TimeNs t) { queue_.push(Pending{t, pid, seq_++}); }

void Engine::log(TimeNs t, const char* kind, ProcessId pid, const std::string& payload) {
    if (!cfg_.event_log) return;
    log_ += std::to_string(t);
    log_ += ' ';
    log_ += kind;
    log_ += ' ';
    log_ += std::to_string(pid);
    log_ += ' ';
    log_ += payload;
    log_ += '\n';
}

RunStats Engine::run() {
    while (!queue_.empty()) {
        const Pending ev = queue_.top();
        if (ev.time > cfg_.duration) break;
        queue_.pop();
        now_ = ev.time;
        flush_completions(now_);
        ProcState& ps = procs_[ev.pid];
        if (ps.done) continue;
        ++stats_.events;
        std::optional<Action> a = ps.spec.program->next(now_, ps.last);
        if (!a) {
            ps.done = true;
            log(now_, "exit", ev.pid, ps.spec.name);
            if (ps.spec.essential && --essential_running_ == 0) {
                early_stop_ = true;
                break;
            }
            continue;
        }
        execute(ev.pid, *a);
    }
    flush_completions(early_stop_ ? now_ : cfg_.duration);
    stats_.final_time = std::min(now_, cfg_.duration);
    return stats_;
}

void Engine::flush_completions(TimeNs t) {
    while (!completions_.empty() && completions_.top().end <= t) {
        const Completion c = completions_.top();
        completions_.pop();
        complete(c);
    }
}

void Engine::complete(const Completion& c) {
    counters_.account_transfer(c.sched, c.req);
    if (cfg_.event_log)
        log(c.end, "complete", c.req.issuer,
            std::to_string(c.req.src) + "->" + std::to_string(c.req.dst) + " " + std::to_string(c.req.payload_bytes));
    if (observer_link_ < 0 || *topo_.link_index(c.req.src, c.req.dst) != victim_link_) return;
    const CrossVmObserver& o = *cfg_.observer;
    const int base = topo_.slot_base(o.observer, observer_link_);
    const int slots = topo_.links()[observer_link_].slots;
    for (std::size_t j = 0; j < c.sched.per_slot_payload_flits.size(); ++j) {
        const double wire = static_cast<double>(c.sched.slot_wire_bytes(static_cast<int>(j)));
        if (wire == 0) continue;
        const double signal = o.alpha * wire;
        leak_signal_sum_ += signal;
        ++leak_signal_n_;
        const double sigma = o.noise_rel * leak_signal_sum_ / static_cast<double>(leak_signal_n_);
        const double leak = std::max(0.0, signal + leak_rng_.normal(0.0, sigma));
        counters_.add_leak(o.observer, base + static_cast<int>(j) % slots, leak);
    }
}

void Engine::execute(ProcessId pid, const Action& a) {
    ProcState& ps = procs_[pid];
    StepResult r;
    r.start = now_;
    if (const auto* t = std::get_if<act::Transfer>(&a)) {
        topo_.check_gpu(t->peer);
        if (topo_.vm_of(t->peer) != ps.spec.vm)
            fail(ErrorCode::InvalidArgument, "engine: process '" + ps.spec.name + "' cannot reach GPU " +
                                                 std::to_string(t->peer) + " outside its VM");
        const auto link = topo_.link_index(ps.spec.gpu, t->peer);
        if (!link)
            fail(ErrorCode::InvalidArgument, "engine: no NVLink between GPU " + std::to_string(ps.spec.gpu) +
                                                 " and GPU " + std::to_string(t->peer));
        TransferRequest req;
        req.src = t->direction == Direction::Read ? t->peer : ps.spec.gpu;
        req.dst = t->direction == Direction::Read ? ps.spec.gpu : t->peer;
        req.payload_bytes = t->bytes;
        req.kind = t->kind;
        req.direction = t->direction;
        req.issuer = pid;
        req.issue_time = now_;
        req.validate(topo_.profile());
        PacketSchedule sched = schedule_transfer(t->bytes, topo_.links()[*link].slots);

        auto& act = active_[*link];
        std::erase_if(act, [&](const Active& x) { return x.end <= now_; });
        std::uint64_t contending = 0;
        for (const Active& x : act)
            if (x.issuer != pid) contending += x.wire;

        const PlatformProfile& p = topo_.profile();
        const double base = transfer_time(sched, contending, p);
        const double jitter = p.timing_jitter > 0 ? ps.rng.normal(0.0, p.timing_jitter * p.probe_overhead) : 0.0;
        const double dur = std::max(0.5 * base, base + jitter);
        const TimeNs dur_ns = std::max<TimeNs>(1, std::llround(dur * 1e9));
        const TimeNs end = now_ + dur_ns;
        const std::uint64_t wire = sched.wire_bytes();
        act.push_back(Active{end, pid, wire});
        if (cfg_.event_log)
            log(now_, "transfer", pid,
                std::to_string(req.src) + "->" + std::to_string(req.dst) + " " + std::to_string(t->bytes) + " " +
                    direction_name(t->direction) + " contend=" + std::to_string(contending) +
                    " dur=" + std::to_string(dur_ns));
        completions_.push(Completion{end, seq_++, req, std::move(sched)});
        ++stats_.transfers;
        r.kind = StepResult::Kind::Transfer;
        r.end = end;
        r.contending_bytes = contending;
    } else if (const auto* s = std::get_if<act::SleepUntil>(&a)) {
        r.kind = StepResult::Kind::Sleep;
        r.end = std::max(now_, s->t);
    } else if (const auto* n = std::get_if<act::NopLoop>(&a)) {
        r.kind = StepResult::Kind::Nop;
        r.end = now_ + std::max<long long>(0, n->iterations);
    } else if (const auto* rc = std::get_if<act::ReadCounters>(&a)) {
        CounterRead cr = counters_.read(ps.spec.gpu, pid, now_, rc->options);
        r.kind = StepResult::Kind::Read;
        r.end = now_ + std::llround(cr.cost_s * 1e9);
        r.snapshot = std::move(cr.snapshot);
        log(now_, "read", pid, "gpu=" + std::to_string(ps.spec.gpu));
    }
    ps.last = std::move(r);
    schedule(pid, ps.last.end);
}

AmbientTraffic::AmbientTraffic(GpuId peer, double rate_hz, std::uint64_t bytes, std::uint64_t seed)
    : peer_(peer), rate_hz_(rate_hz), bytes_(bytes), rng_(Rng::derive(seed, {0xa3b1e47})) {}

std::optional<Action> AmbientTraffic::next(TimeNs now, const StepResult&) {
    if (rate_hz_ <= 0) return std::nullopt;
    pending_sleep_ = !pending_sleep_;
    if (pending_sleep_) return act::Transfer{peer_, bytes_, TransferKind::ExplicitCopy, Direction::Write};
    double u = rng_.uniform();
    while (u <= 0) u = rng_.uniform();
    const auto gap = static_cast<TimeNs>(-std::log(u) / rate_hz_ * 1e9);
    return act::SleepUntil{now + gap};
}

}  // namespace nvbleed

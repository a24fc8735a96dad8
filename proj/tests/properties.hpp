#pragma once

// Counter property checks shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>

#include "nvbleed/engine.hpp"
#include "nvbleed/rng.hpp"

namespace props {

using namespace nvbleed;

// Issues a fixed list of transfers back to back, then exits.
class Script : public Program {
public:
    explicit Script(std::vector<act::Transfer> t) : t_(std::move(t)) {}
    std::optional<Action> next(TimeNs, const StepResult&) override {
        if (i_ == t_.size()) return std::nullopt;
        return t_[i_++];
    }

private:
    std::vector<act::Transfer> t_;
    std::size_t i_ = 0;
};

struct Issued {
    GpuId gpu;
    act::Transfer t;
};

inline constexpr Counter kAtomic[] = {Counter::TotalNratomDataTransmitted, Counter::UserNratomDataTransmitted,
                               Counter::TotalRatomDataTransmitted, Counter::UserRatomDataTransmitted};

/// Runs one random multi-process scenario and returns a description of the first
/// violated counter property, or an empty string.
inline std::string check_counter_scenario(std::uint64_t seed) {
    Rng r = Rng::derive(seed, {77});
    const PlatformProfile prof = r.uniform() < 0.5 ? gcp_profile() : dgx_profile();
    const Topology topo = default_topology(prof);
    Engine eng(topo, EngineConfig{10'000'000'000, seed, true, false, std::nullopt});

    const int nproc = static_cast<int>(r.range(1, 4));
    std::vector<std::vector<Issued>> issued(nproc);
    for (int p = 0; p < nproc; ++p) {
        const auto g = static_cast<GpuId>(r.below(8));
        const auto nb = topo.neighbors(g);
        std::vector<act::Transfer> ts;
        const int n = static_cast<int>(r.range(0, 6));
        for (int i = 0; i < n; ++i) {
            act::Transfer t;
            t.peer = nb[r.below(nb.size())];
            t.bytes = r.below(3) == 0 ? r.below(300) : r.below(70000);
            t.direction = r.uniform() < 0.5 ? Direction::Read : Direction::Write;
            t.kind = r.uniform() < 0.5 ? TransferKind::ExplicitCopy : TransferKind::UvmAccess;
            ts.push_back(t);
            issued[p].push_back({g, t});
        }
        eng.add_process(SimProcess{g, 0, std::make_shared<Script>(ts), "p" + std::to_string(p), true, 0, false});
    }
    eng.run();
    const CounterState& cs = eng.counters();
    const int slots = prof.slots_per_gpu;

    // expected totals from first principles
    std::map<GpuId, std::uint64_t> rx, tx;
    std::map<std::pair<int, GpuId>, std::uint64_t> urx, utx;
    for (int p = 0; p < nproc; ++p)
        for (const Issued& is : issued[p]) {
            const bool read = is.t.direction == Direction::Read;
            const GpuId src = read ? is.t.peer : is.gpu;
            const GpuId dst = read ? is.gpu : is.t.peer;
            const std::uint64_t data = (is.t.bytes + 31) / 32 * 32;
            const std::uint64_t packets = (data + 255) / 256;
            rx[dst] += data + 32 * packets;
            tx[src] += data + 32 * packets;
            if (read) {
                tx[dst] += 32;
                rx[src] += 32;
            }
            urx[{p, dst}] += data;
            utx[{p, src}] += data;
        }

    for (GpuId g = 0; g < 8; ++g) {
        std::uint64_t trx = 0, ttx = 0;
        for (int s = 0; s < slots; ++s) {
            trx += cs.total(g, s, Counter::TotalDataReceived);
            ttx += cs.total(g, s, Counter::TotalDataTransmitted);
            for (Counter c : kAtomic)
                if (cs.total(g, s, c) != 0) return "atomic total counter moved";
        }
        if (trx != rx[g] || ttx != tx[g]) return "total counters differ from wire bytes on GPU " + std::to_string(g);

        const CounterSnapshot agg = cs.peek(g, std::nullopt, true);
        const CounterSnapshot per = cs.peek(g, std::nullopt, false);
        for (int c = 0; c < kCounterCount; ++c) {
            double sum = 0;
            for (double v : per.values[c]) sum += v;
            if (agg.values[c].size() != 1 || std::abs(agg.values[c][0] - sum) > 1e-6 * std::max(1.0, sum))
                return "per-slot counters do not sum to the aggregate";
        }

        for (int p = 0; p < nproc; ++p) {
            std::uint64_t u_rx = 0, u_tx = 0;
            for (int s = 0; s < slots; ++s) {
                u_rx += cs.user(p, g, s, Counter::UserDataReceived);
                u_tx += cs.user(p, g, s, Counter::UserDataTransmitted);
                for (Counter c : kAtomic)
                    if (cs.user(p, g, s, c) != 0) return "atomic user counter moved";
            }
            // only the process's own traffic ever reaches its user counters
            if (u_rx != urx[{p, g}] || u_tx != utx[{p, g}])
                return "user counters of process " + std::to_string(p) + " include foreign traffic";
        }
    }
    return {};
}

}  // namespace props

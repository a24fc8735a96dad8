#include <doctest.h>

#include "nvbleed/engine.hpp"
#include "nvbleed/trace.hpp"
#include "nvbleed/workloads.hpp"

using namespace nvbleed;

namespace {

std::string run_once(std::uint64_t seed) {
    const Topology topo = default_topology(dgx_profile());
    EngineConfig cfg;
    cfg.duration = 20'000'000;
    cfg.seed = seed;
    cfg.event_log = true;
    Engine eng(topo, cfg);
    for (auto& p : workload_processes(gen_app_signature("apoa1-pme", seed), {0, 1}, topo, "victim"))
        eng.add_process(std::move(p));
    eng.add_process(SimProcess{0, 0, std::make_shared<AmbientTraffic>(1, 2000, 512, seed), "ambient"});
    eng.run();
    return eng.event_log();
}

}  // namespace

TEST_CASE("identical inputs give byte-identical event logs") {
    const std::string a = run_once(4);
    CHECK(!a.empty());
    CHECK(a == run_once(4));
    CHECK(a != run_once(5));
}

TEST_CASE("rng streams are fixed across builds") {
    Rng r = Rng::derive(1, {2, 3});
    const std::uint64_t first = r.next_u64();
    CHECK(Rng::derive(1, {2, 3}).next_u64() == first);
    CHECK(Rng(0).next_u64() == Rng(0).next_u64());
    CHECK(fnv1a("abc") == 0xe71fa2190541574bULL);
}

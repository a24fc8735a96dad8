#include <doctest.h>

#include "properties.hpp"

using namespace nvbleed;

TEST_CASE("counter semantics hold over 1000 random scenarios") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const std::string err = props::check_counter_scenario(seed);
        INFO("seed ", seed);
        REQUIRE(err.empty());
    }
}

TEST_CASE("pure receive traffic is strongly asymmetric") {
    for (const PlatformProfile& prof : {gcp_profile(), dgx_profile()}) {
        Engine eng(default_topology(prof), EngineConfig{});
        std::vector<act::Transfer> ts(200, act::Transfer{1, 4096, TransferKind::ExplicitCopy, Direction::Read});
        eng.add_process(SimProcess{0, 0, std::make_shared<props::Script>(ts), "reader", true, 0, true});
        eng.run();
        const CounterSnapshot s = eng.counters().peek(0, std::nullopt, true);
        const double rx = s.sum(Counter::TotalDataReceived);
        const double tx = s.sum(Counter::TotalDataTransmitted);
        CHECK(tx > 0);
        CHECK(rx >= 8 * tx);
    }
}

TEST_CASE("reading disabled counters is unavailable") {
    Engine eng(default_topology(gcp_profile()), EngineConfig{1'000'000, 0, false, false, std::nullopt});
    try {
        eng.counters().read(0, 0, 0, ReadOptions{});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Unavailable);
    }
}

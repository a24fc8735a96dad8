#include <doctest.h>

#include "nvbleed/covert.hpp"
#include "nvbleed/rng.hpp"
#include "oracles.hpp"

using namespace nvbleed;

TEST_CASE("levenshtein matches the full DP table") {
    Rng r = Rng::derive(1, {4});
    for (int i = 0; i < 1000; ++i) {
        const auto gen = [&] {
            std::string s(r.below(120), '0');
            for (char& c : s) c = r.below(2) ? '1' : '0';
            return s;
        };
        std::string a = gen(), b;
        if (r.uniform() < 0.5) {
            b = a;
            for (int e = 0, n = static_cast<int>(r.below(6)); e < n && !b.empty(); ++e) b.erase(r.below(b.size()), 1);
            if (r.uniform() < 0.5) b.insert(r.below(b.size() + 1), "1");
        } else {
            b = gen();
        }
        REQUIRE(levenshtein(a, b) == oracle::levenshtein(a, b));
    }
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("", "abc") == 3);
}

TEST_CASE("random messages are balanced and seeded") {
    const Bits a = random_message(10000, 5);
    std::size_t ones = 0;
    for (auto b : a) ones += b;
    CHECK(ones == 5000);
    CHECK(random_message(10000, 5) == a);
    CHECK(random_message(10000, 6) != a);
}

TEST_CASE("threshold sits between the classes") {
    const std::vector<double> zeros{10, 11, 12}, ones{20, 21, 22};
    CHECK(calibrate_threshold(zeros, ones) == doctest::Approx(16));
    CHECK_THROWS_AS(calibrate_threshold(ones, zeros), Error);
}

TEST_CASE("a short ContenLink trial is deterministic and mostly correct") {
    const Topology topo = default_topology(gcp_profile());
    const Bits m = random_message(400, 3);
    const TrialResult a = run_trial(topo, ProtocolConfig{}, m, 9);
    const TrialResult b = run_trial(topo, ProtocolConfig{}, m, 9);
    CHECK(a.received == b.received);
    CHECK(a.raw == b.raw);
    CHECK(a.error_rate < 0.1);
    CHECK(a.bandwidth_bps > 0);
}

TEST_CASE("LeakyCounterLink needs counters") {
    const Topology topo = default_topology(gcp_profile());
    ProtocolConfig cfg;
    cfg.protocol = Protocol::LeakyCounter;
    TrialOptions opt;
    opt.counters_enabled = false;
    try {
        run_trial(topo, cfg, random_message(100, 1), 1, opt);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Unavailable);
    }
}

TEST_CASE("without a receiver the handshake times out") {
    const Topology topo = default_topology(gcp_profile());
    TrialOptions opt;
    opt.receiver_present = false;
    try {
        run_trial(topo, ProtocolConfig{}, random_message(100, 1), 1, opt);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Timeout);
    }
}

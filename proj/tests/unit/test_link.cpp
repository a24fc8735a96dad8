#include <doctest.h>

#include <set>

#include "nvbleed/link.hpp"
#include "oracles.hpp"

using namespace nvbleed;

TEST_CASE("packet schedule matches the unit-by-unit oracle") {
    for (int slots : {1, 3, 6})
        for (std::uint64_t b = 0; b <= 4096; ++b) {
            const PacketSchedule s = schedule_transfer(b, slots);
            const oracle::Schedule o = oracle::schedule(b, slots);
            REQUIRE(s.per_slot_payload_flits == o.payload_flits);
            REQUIRE(s.per_slot_overhead_flits == o.overhead_flits);
            REQUIRE(s.packet_count == o.packets);
        }
}

TEST_CASE("first packet grows in 32 byte steps") {
    std::set<std::uint64_t> steps;
    for (std::uint64_t b = 1; b <= 256; ++b) {
        const std::uint64_t wire = schedule_transfer(b, 1).wire_bytes();
        CHECK(wire == (b + 31) / 32 * 32 + 32);
        steps.insert(wire);
    }
    CHECK(steps.size() == 8);
}

TEST_CASE("slots activate one packet at a time") {
    for (int slots : {3, 6})
        for (std::uint64_t block = 0; block < 16; ++block) {
            std::set<std::uint64_t> steps;
            for (std::uint64_t b = block * 256 + 1; b <= (block + 1) * 256; ++b) {
                const PacketSchedule s = schedule_transfer(b, slots);
                steps.insert(s.wire_bytes());
                int active = 0;
                for (int j = 0; j < slots; ++j) active += s.slot_wire_bytes(j) > 0;
                CHECK(active == std::min<int>(slots, static_cast<int>(block) + 1));
            }
            CHECK(steps.size() == 8);
        }
}

TEST_CASE("wire bytes never undercount the payload") {
    for (std::uint64_t b = 0; b <= 20000; b += 7) {
        const PacketSchedule s = schedule_transfer(b, 3);
        CHECK(s.payload_wire_bytes() == wire_payload_bytes(b));
        CHECK(s.wire_bytes() >= b);
        CHECK(s.wire_bytes() == s.payload_wire_bytes() + 32 * s.packet_count);
    }
}

TEST_CASE("transfer time is monotone in size and contention") {
    const PlatformProfile p = gcp_profile();
    double prev = 0;
    for (std::uint64_t b = 0; b <= 1 << 20; b += 4096) {
        const double t = transfer_time(schedule_transfer(b, 3), 0, p);
        CHECK(t >= prev);
        prev = t;
    }
    const PacketSchedule s = schedule_transfer(256, 3);
    prev = transfer_time(s, 0, p);
    for (std::uint64_t c = 32; c <= 4096; c += 32) {
        const double t = transfer_time(s, c, p);
        CHECK(t >= prev);
        prev = t;
    }
    CHECK(contention_multiplier(0, p) == 1.0);
    CHECK(contention_multiplier(1 << 20, p) == doctest::Approx(p.contention_plateau_multiplier));
}

TEST_CASE("schedule rejects zero slots") { CHECK_THROWS_AS(schedule_transfer(10, 0), Error); }

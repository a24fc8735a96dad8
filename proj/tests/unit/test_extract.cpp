#include <doctest.h>

#include "nvbleed/extract.hpp"
#include "nvbleed/rng.hpp"
#include "oracles.hpp"

using namespace nvbleed;

namespace {

struct RandomLayer {
    int w_prev, c_prev, c_known;
    std::uint64_t per_sample;
    LayerSpec spec;
};

RandomLayer random_layer(Rng& r, bool pool, const ShapeRules& rules) {
    for (;;) {
        RandomLayer l{};
        l.w_prev = static_cast<int>(r.range(4, 64));
        l.c_prev = static_cast<int>(r.range(1, 64));
        const int f = static_cast<int>(r.range(1, l.w_prev / 2));
        const int s = static_cast<int>(r.range(1, f));
        const int p = pool ? 0 : static_cast<int>(r.range(0, f));
        const int w = pool ? pool_output_width(l.w_prev, f, s, rules.rounding)
                           : conv_output_width(l.w_prev, f, s, p, rules.rounding);
        if (w <= 0) continue;
        const int c = pool || rules.conv == ConvChannels::AsPrinted ? l.c_prev : static_cast<int>(r.range(1, 128));
        l.per_sample = static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(c);
        l.spec = pool ? LayerSpec{LayerType::Pool, 0, f, 0, s, 0} : LayerSpec{LayerType::Conv, 0, f, c, s, p};
        l.c_known = r.uniform() < 0.5 ? l.c_prev : 0;
        return l;
    }
}

}  // namespace

TEST_CASE("candidate enumeration equals brute force on random layers") {
    Rng r = Rng::derive(21, {5});
    for (ShapeRules rules : {ShapeRules{}, ShapeRules{ConvChannels::OutputChannels, ShapeRounding::Floor},
                             ShapeRules{ConvChannels::AsPrinted, ShapeRounding::Exact}})
        for (int i = 0; i < 100; ++i) {
            const bool pool = i % 2 == 1;
            const RandomLayer l = random_layer(r, pool, rules);
            const LayerObservation obs = make_observation(1, l.per_sample * 64 * 4, 4, 64);
            auto got = pool ? infer_pool_candidates(l.w_prev, l.c_known, obs, rules)
                            : infer_conv_candidates(l.w_prev, l.c_known, obs, rules);
            std::sort(got.begin(), got.end());
            const auto want = pool ? oracle::pool_candidates(l.w_prev, l.c_known, l.per_sample, rules)
                                   : oracle::conv_candidates(l.w_prev, l.c_known, l.per_sample, rules);
            REQUIRE(got == want);
            bool found = false;
            for (const auto& c : got) found = found || candidate_matches(c, l.spec);
            REQUIRE(found);
        }
}

TEST_CASE("FC width comes straight from the element count") {
    CHECK(infer_fc(make_observation(0, 32768 * 4, 4, 64)) == 512);
    CHECK_THROWS_AS(infer_fc(make_observation(0, 100 * 4, 4, 64)), Error);
}

TEST_CASE("CNN_1 candidates contain the reference hyper-parameters") {
    const auto conv = infer_conv_candidates(28, 1, make_observation(0, 28ull * 28 * 64 * 4, 4, 64));
    bool c5 = false;
    for (const auto& c : conv) c5 = c5 || (c.f == 5 && c.s == 1 && c.p == 2);
    CHECK(c5);
    const auto pool = infer_pool_candidates(28, 16, make_observation(1, 14ull * 14 * 16 * 64 * 4, 4, 64));
    bool p2 = false;
    for (const auto& c : pool) p2 = p2 || (c.f == 2 && c.s == 2);
    CHECK(p2);
}

TEST_CASE("impossible observations are not found") {
    try {
        infer_pool_candidates(8, 3, make_observation(0, 7ull * 64 * 4, 4, 64));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotFound);
    }
}

TEST_CASE("wire footprint inverts to payload") {
    for (std::uint64_t u = 32; u <= 1 << 20; u += 32) {
        const std::uint64_t wire = u + (u + 255) / 256 * 32;
        const auto p = payload_from_wire(wire);
        REQUIRE(p);
        CHECK(*p == u);
    }
    CHECK_FALSE(payload_from_wire(40));
}

TEST_CASE("segmentation splits at long gaps") {
    std::vector<TimeNs> t;
    TimeNs now = 0;
    for (int it = 0; it < 100; ++it) {
        for (int k = 0; k < 3; ++k) {
            t.push_back(now);
            now += 1000;
        }
        now += 50'000;
    }
    const auto spans = segment_iterations(t);
    REQUIRE(spans.size() == 100);
    for (std::size_t i = 0; i < spans.size(); ++i) {
        CHECK(spans[i].first == 3 * i);
        CHECK(spans[i].last == 3 * i + 2);
    }
}

TEST_CASE("simple models are recovered end to end") {
    const LayerTypeClassifier clf = LayerTypeClassifier::train(1);
    for (const std::string& name : simple_model_names()) {
        const ModelSpec m = simple_model(name);
        ModelTraceOptions o;
        o.workload.iterations = 30;
        const auto trace = transfers_from_counter_csv(record_model_parallel_trace(m, gcp_profile(), o));
        const ExtractionReport rep = extract_architecture(trace, ExtractOptions{}, clf, &m);
        INFO(name);
        CHECK(rep.iterations == 30);
        REQUIRE(rep.all_contain_truth);
        CHECK(*rep.all_contain_truth);
        REQUIRE(rep.types_match);
        CHECK(*rep.types_match);
    }
}

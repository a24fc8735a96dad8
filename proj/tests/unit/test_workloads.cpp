#include <doctest.h>

#include <set>

#include "nvbleed/dnn.hpp"
#include "nvbleed/workloads.hpp"

using namespace nvbleed;

TEST_CASE("simple model parameter counts") {
    CHECK(parameter_count(simple_model("MLP")) == 784ull * 512 + 512 + 512 * 256 + 256 + 256 * 10 + 10);
    CHECK(model_parameters("ResNet-50") == 25557032);
    CHECK_THROWS_AS(simple_model("nope"), Error);
}

TEST_CASE("model spec notation round-trips") {
    for (const std::string& n : simple_model_names()) {
        const ModelSpec m = simple_model(n);
        CHECK(parse_model(format_model(m)).layers == m.layers);
    }
    CHECK(parse_model("C5,16,1,2-P2,2-F10").layers == parse_model("C_{5,16,1,2}-P_{2,2}-F_{10}").layers);
}

TEST_CASE("FC boundary of the MLP moves batch x width elements") {
    const auto out = layer_outputs(simple_model("MLP"), 64);
    REQUIRE(out.size() == 3);
    CHECK(out[0].elements == 32768);
    CHECK(out[1].elements == 64 * 256);
    CHECK(out[2].elements == 640);
}

TEST_CASE("output width equations") {
    CHECK(conv_output_width(28, 5, 1, 2) == 28);
    CHECK(pool_output_width(28, 2, 2) == 14);
    CHECK(pool_output_width(7, 2, 2) == 3);
    CHECK(pool_output_width(7, 2, 2, ShapeRounding::Exact) == 0);
}

TEST_CASE("MLP data-parallel step sends the whole gradient once per GPU") {
    const WorkloadSpec s = gen_app_signature("MLP", 1);
    std::uint64_t sent0 = 0;
    for (const auto& st : s.steps)
        if (st.from == 0) sent0 += st.bytes;
    CHECK(sent0 == (784ull * 512 + 512 + 512 * 256 + 256 + 256 * 10 + 10) * 4);
}

TEST_CASE("generators are deterministic and distinct") {
    std::set<std::uint64_t> sums;
    for (const std::string& n : app_preset_names()) {
        CHECK(gen_app_signature(n, 3).checksum() == gen_app_signature(n, 3).checksum());
        sums.insert(gen_app_signature(n, 3).checksum());
    }
    CHECK(sums.size() == app_preset_names().size());
    CHECK(gen_app_signature("rf", 1).period_ns != gen_app_signature("amber20-cellulose", 1).period_ns);
    CHECK_THROWS_AS(gen_app_signature("nope", 1), Error);
    std::set<std::uint64_t> chars;
    for (int c = 0; c < kCharacterCount; ++c) chars.insert(gen_blender_character(c, 5, 1).checksum());
    CHECK(chars.size() == kCharacterCount);
    CHECK_THROWS_AS(gen_blender_character(50, 5, 1), Error);
}

TEST_CASE("expanded schedules are time ordered and per iteration") {
    WorkloadSpec s = gen_model_parallel_dnn(simple_model("CNN_1"), ModelParallelOptions{});
    const auto t = expand_schedule(s, 10'000'000'000);
    REQUIRE(!t.empty());
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i].time >= t[i - 1].time);
    CHECK(t.back().iteration == s.iterations - 1);
    CHECK(t.size() == s.steps.size() * static_cast<std::size_t>(s.iterations));
}

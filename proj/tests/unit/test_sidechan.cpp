#include <doctest.h>

#include <cmath>

#include "nvbleed/rng.hpp"
#include "nvbleed/sidechan.hpp"
#include "oracles.hpp"

using namespace nvbleed;

namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}); }

std::vector<double> random_window(Rng& r) {
    const std::size_t n = 1 + r.below(300);
    std::vector<double> x(n);
    const double scale = std::pow(10.0, r.range(-3, 9));
    for (double& v : x) v = r.below(4) == 0 ? std::round(r.uniform() * 5) : r.normal(0, 1) * scale;
    return x;
}

}  // namespace

TEST_CASE("window statistics match the reference implementation") {
    Rng r = Rng::derive(3, {1});
    for (int i = 0; i < 1000; ++i) {
        const auto x = random_window(r);
        const auto got = window_stats(x.data(), x.size());
        const auto want = oracle::stats(x);
        for (int j = 0; j < kStatCount; ++j) REQUIRE(close(got[j], want[j]));
    }
}

TEST_CASE("window statistics of a known sample") {
    const std::vector<double> x{1, 2, 3, 4, 10};
    const auto s = window_stats(x.data(), x.size());
    CHECK(s[0] == 4);
    CHECK(s[3] == 3);
    CHECK(s[7] == 20);
    CHECK(s[8] == 1);
    CHECK(s[9] == 2);
    CHECK(s[10] == 4);
}

TEST_CASE("knn matches brute-force search") {
    Rng r = Rng::derive(5, {2});
    Matrix x;
    std::vector<int> y;
    for (int i = 0; i < 400; ++i) {
        std::vector<double> row(6);
        // coarse grid so exact distance ties happen
        for (double& v : row) v = std::round(r.normal(0, 2));
        x.push_back(row);
        y.push_back(static_cast<int>(r.below(7)));
    }
    for (int k : {1, 3, 5, 8}) {
        const KnnClassifier knn = KnnClassifier::fit(x, y, k);
        for (int q = 0; q < 250; ++q) {
            std::vector<double> p(6);
            for (double& v : p) v = std::round(r.normal(0, 2));
            const auto got = knn.neighbors(p);
            const auto want = oracle::knn(x, p, k);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                REQUIRE(got[i].index == want[i].i);
                REQUIRE(got[i].dist2 == want[i].d2);
            }
            REQUIRE(knn.predict(p) == oracle::vote(want, y));
        }
    }
}

TEST_CASE("macro metrics match the reference") {
    Rng r = Rng::derive(9, {3});
    for (int i = 0; i < 200; ++i) {
        std::vector<int> t, p;
        const std::size_t n = 1 + r.below(100);
        for (std::size_t j = 0; j < n; ++j) {
            t.push_back(static_cast<int>(r.below(6)));
            p.push_back(r.uniform() < 0.6 ? t.back() : static_cast<int>(r.below(8)));
        }
        const ClassMetrics m = metrics(t, p);
        REQUIRE(close(m.f1, oracle::macro_f1(t, p)));
        long long total = 0;
        for (const auto& row : m.confusion)
            for (long long c : row) total += c;
        REQUIRE(total == static_cast<long long>(n));
    }
}

TEST_CASE("perfect predictions score 1") {
    const std::vector<int> t{0, 1, 2, 2};
    const ClassMetrics m = metrics(t, t);
    CHECK(m.f1 == 1.0);
    CHECK(m.accuracy == 1.0);
}

TEST_CASE("r2 of an exact fit is 1") {
    const std::vector<double> y{1, 2, 3};
    CHECK(r2(y, y) == doctest::Approx(1.0));
    CHECK_THROWS_AS(r2({1, 1}, {1, 1}), Error);
}

TEST_CASE("downsampling keeps the nearest samples") {
    Trace t;
    t.add_channel("x", false);
    for (int i = 0; i <= 1000; ++i) t.push(i * 1'000'000LL, {static_cast<double>(i)});
    CHECK(t.native_rate_hz() == doctest::Approx(1000));
    const Trace same = downsample(t, t.native_rate_hz());
    CHECK(same.times == t.times);
    const Trace d = downsample(t, 100);
    CHECK(d.size() == 101);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.rows[i][0] == 10.0 * static_cast<double>(i));
    CHECK_THROWS_AS(downsample(t, 5000), Error);
    CHECK(downsample(Trace{}, 10).empty());
}

TEST_CASE("series differences cumulative channels") {
    Trace t;
    t.add_channel("lat", false);
    t.add_channel("bytes", true);
    t.push(0, {5, 0});
    t.push(10, {6, 100});
    t.push(20, {7, 250});
    const Trace s = t.series();
    REQUIRE(s.size() == 2);
    CHECK(s.rows[0] == std::vector<double>{6, 100});
    CHECK(s.rows[1] == std::vector<double>{7, 150});
    CHECK(Trace::from_csv(t.to_csv()).to_csv() == t.to_csv());
}

TEST_CASE("stratified split keeps the class balance") {
    std::vector<LabeledTrace> ts;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < 10; ++i) ts.push_back({c, i, {}});
    const Split s = stratified_split(ts, 0.8, 4);
    CHECK(s.train.size() == 40);
    CHECK(s.test.size() == 10);
    std::vector<int> per(5);
    for (auto i : s.test) ++per[ts[i].label];
    for (int n : per) CHECK(n == 2);
}

TEST_CASE("fingerprint traces are deterministic") {
    FingerprintConfig cfg;
    cfg.profile = gcp_profile();
    cfg.samples = 200;
    cfg.seed = 11;
    CHECK(record_trace(cfg, 3, 1).to_csv() == record_trace(cfg, 3, 1).to_csv());
    CHECK(record_trace(cfg, 3, 1).to_csv() != record_trace(cfg, 3, 2).to_csv());
}

TEST_CASE("config validation rejects bad values") {
    FingerprintConfig cfg;
    cfg.profile = gcp_profile();
    cfg.train_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_THROWS_AS(scenario_from_name("nope"), Error);
}

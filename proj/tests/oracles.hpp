#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// They are written for clarity, not speed, and share no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "nvbleed/extract.hpp"

namespace oracle {

struct Schedule {
    std::vector<std::uint64_t> payload_flits;
    std::vector<std::uint64_t> overhead_flits;
    std::uint64_t packets = 0;
};

// Walks the payload one 32-byte unit at a time: every 8 units open a new packet,
// packets go to slots round-robin, each packet pays 2 flits of header + metadata.
inline Schedule schedule(std::uint64_t bytes, int slots) {
    Schedule s;
    s.payload_flits.assign(static_cast<std::size_t>(slots), 0);
    s.overhead_flits.assign(static_cast<std::size_t>(slots), 0);
    std::uint64_t left = bytes;
    std::uint64_t unit = 0;
    while (left > 0) {
        const std::uint64_t packet = unit / 8;
        const auto slot = static_cast<std::size_t>(packet % static_cast<std::uint64_t>(slots));
        if (unit % 8 == 0) {
            s.overhead_flits[slot] += 2;
            ++s.packets;
        }
        s.payload_flits[slot] += 2;
        left -= std::min<std::uint64_t>(left, 32);
        ++unit;
    }
    return s;
}

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
    return d[a.size()][b.size()];
}

// numpy.percentile(x, q) with the default linear method.
inline double percentile(std::vector<double> x, double q) {
    std::sort(x.begin(), x.end());
    const double pos = q / 100.0 * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// mean, max, min, median, std, var, range, sum, count_am, percent_25, percent_75, iqr_val
inline std::array<double, 12> stats(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double sum = 0;
    for (double v : x) sum += v;
    const double mean = sum / n;
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double var = ss / n;
    const double mx = *std::max_element(x.begin(), x.end());
    const double mn = *std::min_element(x.begin(), x.end());
    double above = 0;
    for (double v : x)
        if (v > mean) above += 1;
    const double p25 = percentile(x, 25), p75 = percentile(x, 75);
    return {mean, mx, mn, percentile(x, 50), std::sqrt(var), var, mx - mn, sum, above, p25, p75, p75 - p25};
}

struct Hit {
    double d2;
    std::size_t i;
};

inline std::vector<Hit> knn(const std::vector<std::vector<double>>& x, const std::vector<double>& q, int k) {
    std::vector<Hit> all;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = 0;
        for (std::size_t j = 0; j < q.size(); ++j) d += (x[i][j] - q[j]) * (x[i][j] - q[j]);
        all.push_back({d, i});
    }
    std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) { return a.d2 != b.d2 ? a.d2 < b.d2 : a.i < b.i; });
    all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
    return all;
}

// Majority vote; ties go to the smaller summed distance, then the lower label.
inline int vote(const std::vector<Hit>& hits, const std::vector<int>& labels) {
    std::map<int, std::pair<int, double>> v;
    for (const Hit& h : hits) {
        auto& e = v[labels[h.i]];
        ++e.first;
        e.second += std::sqrt(h.d2);
    }
    int best = 0, n = -1;
    double dist = 0;
    for (const auto& [l, e] : v)
        if (e.first > n || (e.first == n && e.second < dist)) {
            best = l;
            n = e.first;
            dist = e.second;
        }
    return best;
}

// Macro F1 over the union of labels.
inline double macro_f1(const std::vector<int>& t, const std::vector<int>& p) {
    std::vector<int> cls(t);
    cls.insert(cls.end(), p.begin(), p.end());
    std::sort(cls.begin(), cls.end());
    cls.erase(std::unique(cls.begin(), cls.end()), cls.end());
    double f = 0;
    for (int c : cls) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (p[i] == c && t[i] == c) ++tp;
            if (p[i] == c && t[i] != c) ++fp;
            if (p[i] != c && t[i] == c) ++fn;
        }
        const double pr = tp + fp > 0 ? tp / (tp + fp) : 0;
        const double rc = tp + fn > 0 ? tp / (tp + fn) : 0;
        f += pr + rc > 0 ? 2 * pr * rc / (pr + rc) : 0;
    }
    return f / static_cast<double>(cls.size());
}

// Exhaustive search over every (F, S, P) in [1, W] x [1, W] x [0, W], keeping
// those that satisfy S <= F <= W/2 and P <= F and reproduce the observed volume.
inline std::vector<nvbleed::LayerCandidate> conv_candidates(int w_prev, int c_prev, std::uint64_t per_sample,
                                                            const nvbleed::ShapeRules& rules) {
    using nvbleed::LayerCandidate;
    std::vector<LayerCandidate> out;
    for (int f = 1; f <= w_prev; ++f)
        for (int s = 1; s <= w_prev; ++s)
            for (int p = 0; p <= w_prev; ++p) {
                if (s > f || 2 * f > w_prev || p > f) continue;
                const int span = w_prev - f + 2 * p;
                if (span < 0) continue;
                if (rules.rounding == nvbleed::ShapeRounding::Exact && span % s != 0) continue;
                const int w = span / s + 1;
                const auto area = static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(w);
                if (per_sample % area != 0) continue;
                const auto c = static_cast<int>(per_sample / area);
                if (c < 1) continue;
                LayerCandidate k;
                k.type = nvbleed::LayerType::Conv;
                k.w = w;
                k.f = f;
                k.s = s;
                k.p = p;
                if (rules.conv == nvbleed::ConvChannels::AsPrinted) {
                    if (c_prev > 0 && c != c_prev) continue;
                    k.c_in = c;
                } else {
                    k.c_in = c_prev;
                    k.c = c;
                }
                out.push_back(k);
            }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<nvbleed::LayerCandidate> pool_candidates(int w_prev, int c_prev, std::uint64_t per_sample,
                                                            const nvbleed::ShapeRules& rules) {
    using nvbleed::LayerCandidate;
    std::vector<LayerCandidate> out;
    for (int f = 1; f <= w_prev; ++f)
        for (int s = 1; s <= w_prev; ++s) {
            if (s > f || 2 * f > w_prev) continue;
            const int span = w_prev - f;
            if (rules.rounding == nvbleed::ShapeRounding::Exact && span % s != 0) continue;
            const int w = span / s + 1;
            const auto area = static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(w);
            if (per_sample % area != 0) continue;
            const auto c = static_cast<int>(per_sample / area);
            if (c < 1 || (c_prev > 0 && c != c_prev)) continue;
            LayerCandidate k;
            k.type = nvbleed::LayerType::Pool;
            k.w = w;
            k.c_in = c;
            k.c = c;
            k.f = f;
            k.s = s;
            out.push_back(k);
        }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace oracle

#include "nvbleed/trace.hpp"

#include <cstdio>
#include <sstream>

#include "nvbleed/error.hpp"
#include "nvbleed/kv.hpp"

namespace nvbleed {

void Trace::add_channel(std::string name, bool is_cumulative) {
    require(times.empty(), "trace: channels must be declared before samples");
    channels.push_back(std::move(name));
    cumulative.push_back(is_cumulative);
}

void Trace::push(TimeNs t, std::vector<double> row) {
    require(row.size() == channels.size(), "trace: row width does not match channel count");
    require(times.empty() || t > times.back(), "trace: sample times must be strictly increasing");
    times.push_back(t);
    rows.push_back(std::move(row));
}

Trace Trace::series() const {
    Trace out;
    out.channels = channels;
    out.cumulative.assign(channels.size(), false);
    out.label = label;
    for (std::size_t i = 1; i < times.size(); ++i) {
        std::vector<double> r(channels.size());
        for (std::size_t c = 0; c < channels.size(); ++c)
            r[c] = cumulative[c] ? rows[i][c] - rows[i - 1][c] : rows[i][c];
        out.times.push_back(times[i]);
        out.rows.push_back(std::move(r));
    }
    return out;
}

Trace Trace::select(const std::vector<std::size_t>& idx) const {
    Trace out;
    out.label = label;
    for (std::size_t c : idx) {
        require(c < channels.size(), "trace: channel index out of range");
        out.channels.push_back(channels[c]);
        out.cumulative.push_back(cumulative[c]);
    }
    out.times = times;
    out.rows.reserve(rows.size());
    for (const auto& r : rows) {
        std::vector<double> s;
        s.reserve(idx.size());
        for (std::size_t c : idx) s.push_back(r[c]);
        out.rows.push_back(std::move(s));
    }
    return out;
}

std::vector<double> Trace::column(std::size_t ch) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[ch]);
    return v;
}

double Trace::native_rate_hz() const {
    if (times.size() < 2) return 0;
    return static_cast<double>(times.size() - 1) / (static_cast<double>(times.back() - times.front()) * 1e-9);
}

std::string Trace::to_csv() const {
    std::string out = "# label=" + std::to_string(label) + "\n# cumulative=";
    for (std::size_t c = 0; c < cumulative.size(); ++c) out += std::string(c ? "," : "") + (cumulative[c] ? "1" : "0");
    out += "\ntime_ns";
    for (const auto& c : channels) out += "," + c;
    out += '\n';
    char buf[64];
    for (std::size_t i = 0; i < times.size(); ++i) {
        out += std::to_string(times[i]);
        for (double v : rows[i]) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

Trace Trace::from_csv(const std::string& text) {
    Trace t;
    std::istringstream in(text);
    std::string line;
    std::vector<bool> cum;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# label=", 0) == 0) {
            t.label = static_cast<int>(parse_int(line.substr(8), "trace label"));
            continue;
        }
        if (line.rfind("# cumulative=", 0) == 0) {
            for (const auto& f : split(line.substr(13), ',')) cum.push_back(trim(f) == "1");
            continue;
        }
        if (line[0] == '#') continue;
        const std::vector<std::string> f = split(line, ',');
        if (!header) {
            require(!f.empty() && trim(f[0]) == "time_ns", "trace csv: header must start with time_ns");
            for (std::size_t c = 1; c < f.size(); ++c)
                t.add_channel(trim(f[c]), c - 1 < cum.size() ? static_cast<bool>(cum[c - 1]) : false);
            header = true;
            continue;
        }
        require(f.size() == t.channels.size() + 1, "trace csv: wrong column count");
        std::vector<double> r;
        for (std::size_t c = 1; c < f.size(); ++c) r.push_back(parse_double(trim(f[c]), "trace value"));
        t.push(parse_int(trim(f[0]), "trace time"), std::move(r));
    }
    require(header, "trace csv: missing header");
    return t;
}

std::shared_ptr<Trace> SpyRecorder::make_trace(const RecorderConfig& cfg, int slots) {
    auto t = std::make_shared<Trace>();
    if (cfg.peer >= 0) {
        t->add_channel("timing_ns", false);
        if (cfg.throughput_channel) t->add_channel("throughput_Bps", false);
    }
    if (cfg.read_counters) {
        if (cfg.per_slot)
            for (int s = 0; s < slots; ++s) t->add_channel("slot" + std::to_string(s) + "_bytes", true);
        else
            t->add_channel("total_bytes", true);
    }
    return t;
}

SpyRecorder::SpyRecorder(RecorderConfig cfg, int slots, std::shared_ptr<Trace> out)
    : cfg_(cfg), slots_(slots), out_(std::move(out)) {
    require(cfg_.peer >= 0 || cfg_.read_counters, "recorder: needs probing or counter reads");
    require(cfg_.peer < 0 || cfg_.probes_per_sample > 0, "recorder: probes_per_sample must be > 0");
    require(cfg_.samples > 0, "recorder: samples must be > 0");
    require(out_ != nullptr, "recorder: no output trace");
}

void SpyRecorder::finish_sample(TimeNs t, const CounterSnapshot* snap) {
    std::vector<double> row;
    if (cfg_.peer >= 0) {
        const double lat = latency_sum_ / cfg_.probes_per_sample;
        row.push_back(lat);
        if (cfg_.throughput_channel)
            row.push_back(estimate_throughput(cfg_.probe_bytes, lat * 1e-9));
    }
    if (snap) {
        const auto& rx = (*snap)[Counter::TotalDataReceived];
        const auto& tx = (*snap)[Counter::TotalDataTransmitted];
        if (cfg_.per_slot)
            for (int s = 0; s < slots_; ++s) row.push_back(rx[s] + tx[s]);
        else
            row.push_back(rx[0] + tx[0]);
    }
    if (out_->empty() || t > out_->times.back()) out_->push(t, std::move(row));
    probes_done_ = 0;
    latency_sum_ = 0;
}

std::optional<Action> SpyRecorder::next(TimeNs now, const StepResult& last) {
    if (started_) {
        if (last.kind == StepResult::Kind::Transfer) {
            latency_sum_ += static_cast<double>(last.elapsed());
            ++probes_done_;
        } else if (last.kind == StepResult::Kind::Read) {
            finish_sample(last.end, last.snapshot ? &*last.snapshot : nullptr);
        }
    }
    started_ = true;
    // One extra row so that the differenced series has exactly `samples` rows.
    while (static_cast<long long>(out_->size()) <= cfg_.samples) {
        if (cfg_.peer >= 0 && probes_done_ < cfg_.probes_per_sample)
            return act::Transfer{cfg_.peer, cfg_.probe_bytes, TransferKind::Probe, Direction::Read};
        if (cfg_.read_counters) return act::ReadCounters{ReadOptions{!cfg_.per_slot, false}};
        finish_sample(now, nullptr);
    }
    return std::nullopt;
}

std::string counter_trace_csv_header() { return "time_s,gpu,counter,slot,value\n"; }

std::string counter_trace_csv_row(double time_s, GpuId gpu, Counter c, int slot, double value) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.9f,%d,%s,%d,%.17g\n", time_s, gpu, std::string(counter_name(c)).c_str(), slot,
                  value);
    return buf;
}

}  // namespace nvbleed

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "nvbleed/covert.hpp"
#include "nvbleed/dnn.hpp"
#include "nvbleed/extract.hpp"
#include "nvbleed/kv.hpp"
#include "nvbleed/rng.hpp"
#include "nvbleed/sidechan.hpp"
#include "nvbleed/topo.hpp"

namespace {

using namespace nvbleed;
using json = nlohmann::ordered_json;

constexpr const char* kRngName = "splitmix64-ctr/v1";

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kUnavailable = 4, kFailed = 5 };

int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::NotFound: return kUsage;
        case ErrorCode::Io: return kIo;
        case ErrorCode::Unavailable: return kUnavailable;
        case ErrorCode::Unreachable:
        case ErrorCode::Timeout:
        case ErrorCode::Inseparable: return kFailed;
    }
    return kInternal;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).generic_string();
}

// Artifacts of one command; the manifest lists every file with its hash.
class Run {
public:
    Run(std::string out_dir, std::vector<std::string> replay, json config, std::uint64_t seed)
        : out_(std::move(out_dir)), replay_(std::move(replay)), config_(std::move(config)), seed_(seed) {}

    void write(const std::string& name, std::string_view content) {
        write_file(join_path(out_, name), content);
        outputs_[name] = hex64(fnv1a(content));
    }
    void input(const std::string& path) { inputs_[path] = hex64(fnv1a(read_file(path))); }

    void finish() const {
        json m;
        m["tool"] = "nvbleed";
        m["argv"] = replay_;
        m["config"] = config_;
        m["config_hash"] = hex64(fnv1a(config_.dump()));
        m["seed"] = seed_;
        m["rng"] = kRngName;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        write_file(join_path(out_, "manifest.json"), m.dump(2) + "\n");
    }
    const std::string& out() const { return out_; }

private:
    std::string out_;
    std::vector<std::string> replay_;
    json config_;
    std::uint64_t seed_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

bool is_flag(const CLI::Option* o) { return o->get_expected_max() == 0; }

std::string option_name(const CLI::Option* o) {
    return o->get_lnames().empty() ? o->get_name() : "--" + o->get_lnames().front();
}

bool skipped(const CLI::Option* o) {
    const std::string n = option_name(o);
    return n == "--help" || n == "--config" || n == "--out";
}

// Command path plus every option that received a value (from argv or a config file).
void replay_args(const CLI::App* app, std::vector<std::string>& out) {
    for (const CLI::Option* o : app->get_options()) {
        if (skipped(o) || o->count() == 0) continue;
        if (is_flag(o)) {
            if (o->as<bool>()) out.push_back(option_name(o));
            continue;
        }
        for (const std::string& r : o->results()) {
            out.push_back(option_name(o));
            out.push_back(r);
        }
    }
    for (const CLI::App* sub : app->get_subcommands()) {
        out.push_back(sub->get_name());
        replay_args(sub, out);
    }
}

// Effective value of every option on the parsed command chain, defaults included.
void effective_config(const CLI::App* app, json& out) {
    for (const CLI::Option* o : app->get_options()) {
        if (skipped(o)) continue;
        const std::string key = o->get_lnames().empty() ? o->get_name() : o->get_lnames().front();
        if (is_flag(o)) {
            out[key] = o->count() > 0 && o->as<bool>();
        } else if (o->count() > 0) {
            out[key] = o->results().size() == 1 ? json(o->results().front()) : json(o->results());
        } else {
            out[key] = o->get_default_str();
        }
    }
    for (const CLI::App* sub : app->get_subcommands()) effective_config(sub, out[sub->get_name()]);
}

// ---- option blocks ----------------------------------------------------------------

struct CovertOpts {
    std::string protocol = "contenlink";
    std::string profile = "gcp";
    std::string shape = "default";
    std::uint64_t sender_size = 256;
    std::vector<std::uint64_t> sizes;
    std::size_t bits = 10000;
    int trials = 5;
    std::uint64_t seed = 1;
    bool no_ambient = false;
    bool event_log = false;
};

struct FpOpts {
    std::string scenario = "apps18";
    std::string profile = "gcp";
    int gpus = 2;
    int traces_per_class = 50;
    int classes = 0;
    double train_fraction = 0.8;
    std::string leakage = "timing+counters";
    std::size_t window = 0;
    int max_windows = 10;
    long long samples = 0;
    int k = 5;
    double alpha = 0.05;
    double noise_rel = 0.02;
    bool no_ambient = false;
    bool no_counters = false;
    std::uint64_t seed = 1;
    std::vector<std::size_t> windows{100, 200, 500, 1000};
    std::vector<double> rates{100, 50, 20, 10, 5, 2, 1};
};

struct EvalOpts {
    std::string traces;
    std::string model;
    std::size_t window = 0;
    int max_windows = 10;
    double rate_hz = 0;
    int k = 5;
};

struct ExtractOpts {
    std::string trace;
    std::string truth;
    int gpu = 0;
    int batch = 64;
    int element_bytes = 4;
    int input_w = 28;
    int input_c = 1;
    double gap_factor = 3.0;
    std::string conv = "as-printed";
    std::string rounding = "floor";
    std::uint64_t classifier_seed = 1;
    int classifier_models = 1500;
    // record
    std::string model = "CNN_1";
    std::string profile = "gcp";
    long long iterations = 100;
    std::uint64_t seed = 1;
};

struct Opts {
    std::string out = "nvbleed-out";
    std::string topo_profile = "gcp";
    std::string topo_shape = "default";
    bool topo_cross_vm = false;
    std::string cal_profile = "gcp";
    double target_contenlink = 0;
    double target_leaky = 0;
    std::size_t cal_bits = 2000;
    std::uint64_t cal_seed = 1;
    CovertOpts covert;
    FpOpts fp;
    EvalOpts ev;
    ExtractOpts ex;
    std::string spec;
    std::string manifest;
    bool rerun_check = true;
    bool out_given = false;
};

void add_fp_options(CLI::App* c, FpOpts& o) {
    c->add_option("--scenario", o.scenario, "Fingerprint scenario")
        ->check(CLI::IsMember({"apps18", "characters50", "cross-vm"}));
    c->add_option("--profile", o.profile, "Platform profile: gcp, dgx or a profile file");
    c->add_option("--gpus", o.gpus, "Victim GPUs (2, 4 or 8)");
    c->add_option("--traces-per-class", o.traces_per_class, "Traces recorded per class");
    c->add_option("--classes", o.classes, "Use only the first N classes (0 = all)");
    c->add_option("--train-fraction", o.train_fraction, "Per-class share of traces used for training");
    c->add_option("--leakage", o.leakage, "Spy observations")->check(CLI::IsMember({"timing-only", "timing+counters"}));
    c->add_option("--window", o.window, "Samples per feature window (0 = scenario default)");
    c->add_option("--max-windows", o.max_windows, "Feature windows kept per trace");
    c->add_option("--samples", o.samples, "Intervals recorded per trace (0 = scenario default)");
    c->add_option("--k", o.k, "Neighbours for the KNN vote");
    c->add_option("--alpha", o.alpha, "Cross-VM attenuation of victim wire bytes");
    c->add_option("--noise", o.noise_rel, "Cross-VM relative noise");
    c->add_flag("--no-ambient", o.no_ambient, "Disable background traffic");
    c->add_flag("--no-counters", o.no_counters, "Counters disabled by the driver");
    c->add_option("--seed", o.seed, "Experiment seed");
}

FingerprintConfig fp_config(const FpOpts& o) {
    FingerprintConfig c;
    c.scenario = scenario_from_name(o.scenario);
    c.profile = load_profile(o.profile);
    c.gpus = o.gpus;
    c.traces_per_class = o.traces_per_class;
    c.classes = o.classes;
    c.train_fraction = o.train_fraction;
    c.leakage = leakage_from_name(o.leakage);
    c.window = o.window;
    c.max_windows = o.max_windows;
    c.samples = o.samples;
    c.k = o.k;
    c.alpha = o.alpha;
    c.noise_rel = o.noise_rel;
    c.ambient = !o.no_ambient;
    c.counters_enabled = !o.no_counters;
    c.seed = o.seed;
    c.validate();
    return c;
}

json fp_config_json(const FingerprintConfig& c) {
    json j;
    j["scenario"] = scenario_name(c.scenario);
    j["profile"] = format_profile(c.profile);
    j["gpus"] = c.gpus;
    j["traces_per_class"] = c.traces_per_class;
    j["classes"] = c.classes;
    j["train_fraction"] = c.train_fraction;
    j["leakage"] = leakage_name(c.leakage);
    j["window"] = c.window;
    j["max_windows"] = c.max_windows;
    j["samples"] = c.samples;
    j["k"] = c.k;
    j["alpha"] = c.alpha;
    j["noise_rel"] = c.noise_rel;
    j["ambient"] = c.ambient;
    j["counters_enabled"] = c.counters_enabled;
    j["seed"] = c.seed;
    return j;
}

FingerprintConfig fp_config_from_json(const json& j) {
    FingerprintConfig c;
    c.scenario = scenario_from_name(j.at("scenario").get<std::string>());
    c.profile = parse_profile(j.at("profile").get<std::string>());
    c.gpus = j.at("gpus");
    c.traces_per_class = j.at("traces_per_class");
    c.classes = j.at("classes");
    c.train_fraction = j.at("train_fraction");
    c.leakage = leakage_from_name(j.at("leakage").get<std::string>());
    c.window = j.at("window");
    c.max_windows = j.at("max_windows");
    c.samples = j.at("samples");
    c.k = j.at("k");
    c.alpha = j.at("alpha");
    c.noise_rel = j.at("noise_rel");
    c.ambient = j.at("ambient");
    c.counters_enabled = j.at("counters_enabled");
    c.seed = j.at("seed");
    c.validate();
    return c;
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, "'" + path + "' is not valid JSON: " + e.what());
    }
}

Topology topology_for(const std::string& profile, const std::string& shape) {
    const PlatformProfile p = load_profile(profile);
    if (shape == "default") return default_topology(p);
    return Topology::build(p, shape_from_name(shape));
}

std::string trace_file(const FingerprintConfig& cfg, const LabeledTrace& t) {
    return "traces/" + cfg.class_name(t.label) + "_" + std::to_string(t.index) + ".csv";
}

// ---- commands -------------------------------------------------------------------

void cmd_topo(const Opts& o, Run& run) {
    Topology t = topology_for(o.topo_profile, o.topo_shape);
    if (o.topo_cross_vm) t = t.cross_vm_split();
    std::cout << t.describe();
    run.write("topology.txt", t.format());
    run.write("profile.txt", format_profile(t.profile()));
}

void cmd_calibrate(const Opts& o, Run& run) {
    const PlatformProfile base = load_profile(o.cal_profile);
    CalibrationTargets tgt{o.target_contenlink, o.target_leaky};
    if (base.name == "gcp") {
        if (tgt.contenlink_bps <= 0) tgt.contenlink_bps = 70590;
        if (tgt.leakycounter_bps <= 0) tgt.leakycounter_bps = 1880;
    } else if (base.name == "dgx") {
        if (tgt.contenlink_bps <= 0) tgt.contenlink_bps = 60710;
        if (tgt.leakycounter_bps <= 0) tgt.leakycounter_bps = 1390;
    }
    require(tgt.contenlink_bps > 0 && tgt.leakycounter_bps > 0,
            "calibrate: --target-contenlink and --target-leaky are required for profile '" + base.name + "'");
    const CalibrationResult r = calibrate_profile(base, tgt, o.cal_seed, o.cal_bits);
    json j;
    j["profile"] = r.profile.name;
    j["target_contenlink_bps"] = tgt.contenlink_bps;
    j["target_leakycounter_bps"] = tgt.leakycounter_bps;
    j["contenlink_bps"] = r.contenlink_bps;
    j["leakycounter_bps"] = r.leakycounter_bps;
    j["probe_overhead"] = r.profile.probe_overhead;
    j["counter_read_cost"] = r.profile.counter_read_cost;
    j["iterations"] = r.iterations;
    run.write(r.profile.name + ".profile", format_profile(r.profile));
    run.write("calibration.json", j.dump(2) + "\n");
    std::cout << "calibrated " << r.profile.name << ": contenlink " << num(r.contenlink_bps) << " bps, leakycounter "
              << num(r.leakycounter_bps) << " bps\n";
}

ProtocolConfig protocol_config(const CovertOpts& o, std::uint64_t sender_size) {
    ProtocolConfig c;
    c.protocol = protocol_from_name(o.protocol);
    c.sender_size = sender_size;
    return c;
}

json channel_json(const ChannelReport& r) {
    json j;
    j["protocol"] = protocol_name(r.protocol);
    j["profile"] = r.profile;
    j["sender_bytes"] = r.sender_size;
    j["bits"] = r.bits;
    j["trials"] = r.trials;
    j["bandwidth_bps"] = r.bandwidth_bps;
    j["error_rate"] = r.error_rate;
    json trials = json::array();
    for (const TrialResult& t : r.per_trial) {
        json x;
        x["bandwidth_bps"] = t.bandwidth_bps;
        x["error_rate"] = t.error_rate;
        x["edit_distance"] = t.edit_distance;
        x["threshold"] = t.threshold;
        x["handshake_attempts"] = t.handshake_attempts;
        x["sync_time_ns"] = t.sync_time_ns;
        trials.push_back(std::move(x));
    }
    j["per_trial"] = std::move(trials);
    return j;
}

void cmd_covert_run(const Opts& o, Run& run) {
    const CovertOpts& c = o.covert;
    const Topology topo = topology_for(c.profile, c.shape);
    TrialOptions opt;
    opt.ambient = !c.no_ambient;
    opt.event_log = c.event_log;
    const ChannelReport r = evaluate_channel(topo, protocol_config(c, c.sender_size), c.bits, c.trials, c.seed, opt);
    std::string raw = "trial,slot,sent,received,measurement\n";
    for (std::size_t t = 0; t < r.per_trial.size(); ++t) {
        const TrialResult& tr = r.per_trial[t];
        // raw holds the preamble first, then one value per message slot
        const std::size_t pre = tr.raw.size() - std::min(tr.raw.size(), tr.sent.size());
        for (std::size_t i = 0; i < tr.raw.size(); ++i) {
            raw += std::to_string(t) + "," + std::to_string(i) + ",";
            if (i >= pre) {
                const std::size_t b = i - pre;
                raw += std::to_string(tr.sent[b]) + ",";
                raw += b < tr.received.size() ? std::to_string(tr.received[b]) : std::string();
            } else {
                raw += ",";
            }
            raw += "," + num(tr.raw[i]) + "\n";
        }
        if (c.event_log) run.write("events_trial" + std::to_string(t) + ".log", tr.event_log);
    }
    run.write("report.json", channel_json(r).dump(2) + "\n");
    run.write("trace.csv", raw);
    std::cout << protocol_name(r.protocol) << " " << r.profile << " sender=" << r.sender_size
              << " bandwidth=" << num(r.bandwidth_bps) << " bps error=" << num(100 * r.error_rate) << "%\n";
}

void cmd_covert_sweep(const Opts& o, Run& run) {
    const CovertOpts& c = o.covert;
    const Topology topo = topology_for(c.profile, c.shape);
    const std::vector<std::uint64_t> sizes = c.sizes.empty() ? default_sweep_sizes() : c.sizes;
    const auto reports = sweep_sender_sizes(topo, protocol_config(c, sizes.front()), sizes, c.bits, c.trials, c.seed);
    require(!reports.empty(), "covert sweep: no reports");
    std::string csv = "sender_bytes,bandwidth_bps,error_rate\n";
    json all = json::array();
    for (const ChannelReport& r : reports) {
        csv += std::to_string(r.sender_size) + "," + num(r.bandwidth_bps) + "," + num(r.error_rate) + "\n";
        all.push_back(channel_json(r));
    }
    run.write("sweep.csv", csv);
    run.write("report.json", all.dump(2) + "\n");
    std::cout << csv;
}

void write_traces(const FingerprintConfig& cfg, const std::vector<LabeledTrace>& traces, const Split& split,
                  Run& run) {
    std::vector<char> is_train(traces.size(), 0);
    for (std::size_t i : split.train) is_train[i] = 1;
    std::string index = "file,label,class,index,split\n";
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const std::string f = trace_file(cfg, traces[i]);
        run.write(f, traces[i].raw.to_csv());
        index += f + "," + std::to_string(traces[i].label) + "," + cfg.class_name(traces[i].label) + "," +
                 std::to_string(traces[i].index) + "," + (is_train[i] ? "train" : "test") + "\n";
    }
    run.write("index.csv", index);
    run.write("config.json", fp_config_json(cfg).dump(2) + "\n");
}

void cmd_fp_collect(const Opts& o, Run& run) {
    const FingerprintConfig cfg = fp_config(o.fp);
    const auto traces = collect_traces(cfg);
    write_traces(cfg, traces, stratified_split(traces, cfg.train_fraction, cfg.seed), run);
    std::cout << "collected " << traces.size() << " traces (" << cfg.class_count() << " classes) into " << run.out()
              << "\n";
}

struct TraceSet {
    FingerprintConfig cfg;
    std::vector<LabeledTrace> traces;
    Split split;
};

TraceSet load_traces(const std::string& dir, Run& run) {
    TraceSet ts;
    const std::string cfg_path = join_path(dir, "config.json");
    const std::string index_path = join_path(dir, "index.csv");
    run.input(cfg_path);
    run.input(index_path);
    ts.cfg = fp_config_from_json(read_json(cfg_path));
    const auto lines = split(read_file(index_path), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split(lines[i], ',');
        if (f.size() != 5) fail(ErrorCode::InvalidArgument, index_path + ": malformed row " + std::to_string(i + 1));
        LabeledTrace t;
        t.label = static_cast<int>(parse_int(f[1], "label"));
        t.index = static_cast<int>(parse_int(f[3], "index"));
        t.raw = Trace::from_csv(read_file(join_path(dir, f[0])));
        (trim(f[4]) == "train" ? ts.split.train : ts.split.test).push_back(ts.traces.size());
        ts.traces.push_back(std::move(t));
    }
    require(!ts.traces.empty(), index_path + ": no traces");
    return ts;
}

EvalOptions eval_options(const EvalOpts& e, const FingerprintConfig& cfg) {
    EvalOptions o;
    o.window = e.window ? e.window : cfg.effective_window();
    o.max_windows = e.max_windows;
    o.rate_hz = e.rate_hz;
    o.k = e.k;
    return o;
}

void cmd_fp_train(const Opts& o, Run& run) {
    require(!o.ev.traces.empty(), "fingerprint train: --traces is required");
    const TraceSet ts = load_traces(o.ev.traces, run);
    const EvalOptions opt = eval_options(o.ev, ts.cfg);
    std::string csv;
    std::size_t rows = 0;
    for (std::size_t i : ts.split.train) {
        const Matrix x = fingerprint_rows(ts.traces[i].raw, opt);
        if (csv.empty()) {
            csv = "label";
            Trace s = ts.traces[i].raw.series();
            for (const std::string& n : feature_names(s)) csv += "," + n;
            csv += "\n";
        }
        for (const auto& r : x) {
            csv += std::to_string(ts.traces[i].label);
            for (double v : r) {
                char buf[32];
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                csv += buf;
            }
            csv += "\n";
            ++rows;
        }
    }
    json m;
    m["window"] = opt.window;
    m["max_windows"] = opt.max_windows;
    m["rate_hz"] = opt.rate_hz;
    m["k"] = opt.k;
    m["rows"] = rows;
    run.write("features.csv", csv);
    run.write("model.json", m.dump(2) + "\n");
    std::cout << "trained on " << ts.split.train.size() << " traces, " << rows << " feature rows\n";
}

void cmd_fp_eval(const Opts& o, Run& run) {
    require(!o.ev.traces.empty() && !o.ev.model.empty(), "fingerprint eval: --traces and --model are required");
    const TraceSet ts = load_traces(o.ev.traces, run);
    const std::string dir = std::filesystem::is_directory(o.ev.model)
                                ? o.ev.model
                                : std::filesystem::path(o.ev.model).parent_path().generic_string();
    const std::string model_path = join_path(dir, "model.json");
    const std::string feat_path = join_path(dir, "features.csv");
    run.input(model_path);
    run.input(feat_path);
    const json m = read_json(model_path);
    EvalOptions opt;
    opt.window = m.at("window");
    opt.max_windows = m.at("max_windows");
    opt.rate_hz = m.at("rate_hz");
    opt.k = m.at("k");

    Matrix x;
    std::vector<int> y;
    const auto lines = split(read_file(feat_path), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split(lines[i], ',');
        y.push_back(static_cast<int>(parse_int(f[0], "label")));
        std::vector<double> row;
        for (std::size_t j = 1; j < f.size(); ++j) row.push_back(parse_double(f[j], "feature"));
        x.push_back(std::move(row));
    }
    require(!x.empty(), feat_path + ": no feature rows");
    const TraceClassifier clf = TraceClassifier::fit(x, std::move(y), opt.k);

    std::vector<int> truth, pred;
    std::string csv = "file,label,predicted\n";
    for (std::size_t i : ts.split.test) {
        const LabeledTrace& t = ts.traces[i];
        truth.push_back(t.label);
        pred.push_back(clf.classify(fingerprint_rows(t.raw, opt)));
        csv += trace_file(ts.cfg, t) + "," + std::to_string(t.label) + "," + std::to_string(pred.back()) + "\n";
    }
    FingerprintReport rep;
    rep.scenario = std::string(scenario_name(ts.cfg.scenario));
    rep.profile = ts.cfg.profile.name;
    rep.leakage = std::string(leakage_name(ts.cfg.leakage));
    rep.gpus = ts.cfg.gpus;
    rep.window = opt.window;
    rep.rate_hz = opt.rate_hz;
    rep.classes = ts.cfg.class_count();
    rep.train_traces = ts.split.train.size();
    rep.test_traces = ts.split.test.size();
    rep.train_rows = clf.rows();
    rep.m = metrics(truth, pred);
    for (int c = 0; c < ts.cfg.class_count(); ++c) rep.class_names.push_back(ts.cfg.class_name(c));
    run.write("report.json", rep.to_json() + "\n");
    run.write("predictions.csv", csv);
    std::cout << rep.scenario << " f1=" << num(rep.m.f1) << " precision=" << num(rep.m.precision)
              << " recall=" << num(rep.m.recall) << "\n";
}

void cmd_fp_run(const Opts& o, Run& run) {
    const FingerprintConfig cfg = fp_config(o.fp);
    const auto traces = collect_traces(cfg);
    const Split split = stratified_split(traces, cfg.train_fraction, cfg.seed);
    EvalOptions opt;
    opt.window = cfg.effective_window();
    opt.max_windows = cfg.max_windows;
    opt.k = cfg.k;
    const FingerprintReport rep = evaluate_traces(cfg, traces, split, opt);
    run.write("report.json", rep.to_json() + "\n");
    std::cout << rep.scenario << " " << rep.leakage << " f1=" << num(rep.m.f1) << " precision=" << num(rep.m.precision)
              << " recall=" << num(rep.m.recall) << "\n";
}

json sweep_json(const std::vector<SweepPoint>& pts) {
    json all = json::array();
    for (const SweepPoint& p : pts) all.push_back(json::parse(p.report.to_json()));
    return all;
}

void cmd_fp_sweep(const Opts& o, Run& run) {
    const FingerprintConfig cfg = fp_config(o.fp);
    const auto pts = window_sweep(cfg, o.fp.windows);
    std::string csv = "window,f1,precision,recall\n";
    for (const SweepPoint& p : pts)
        csv += std::to_string(p.report.window) + "," + num(p.report.m.f1) + "," + num(p.report.m.precision) + "," +
               num(p.report.m.recall) + "\n";
    run.write("sweep.csv", csv);
    run.write("report.json", sweep_json(pts).dump(2) + "\n");
    std::cout << csv;
}

void cmd_mitigate(const Opts& o, Run& run) {
    const FingerprintConfig cfg = fp_config(o.fp);
    const auto pts = mitigation_sweep(cfg, o.fp.rates);
    std::string csv = "rate_hz,f1\n";
    for (const SweepPoint& p : pts) csv += num(p.x) + "," + num(p.report.m.f1) + "\n";
    run.write("sweep.csv", csv);
    run.write("report.json", sweep_json(pts).dump(2) + "\n");
    std::cout << csv;
}

ShapeRules shape_rules(const ExtractOpts& e) {
    ShapeRules r;
    r.conv = e.conv == "output" ? ConvChannels::OutputChannels : ConvChannels::AsPrinted;
    r.rounding = e.rounding == "exact" ? ShapeRounding::Exact : ShapeRounding::Floor;
    return r;
}

ModelSpec model_arg(const std::string& s) {
    const auto& names = simple_model_names();
    if (std::find(names.begin(), names.end(), s) != names.end()) return simple_model(s);
    std::string text = s;
    if (std::filesystem::exists(s)) text = trim(read_file(s));
    return parse_model(text, "custom");
}

void cmd_extract(const Opts& o, Run& run) {
    const ExtractOpts& e = o.ex;
    require(!e.trace.empty(), "extract: --trace is required");
    run.input(e.trace);
    const auto transfers = transfers_from_counter_csv(read_file(e.trace), e.gpu);
    ExtractOptions opt;
    opt.batch = e.batch;
    opt.element_bytes = e.element_bytes;
    opt.input_w = e.input_w;
    opt.input_c = e.input_c;
    opt.gap_factor = e.gap_factor;
    opt.rules = shape_rules(e);
    std::optional<ModelSpec> truth;
    if (!e.truth.empty()) {
        if (std::filesystem::exists(e.truth)) run.input(e.truth);
        truth = model_arg(e.truth);
    }
    const LayerTypeClassifier clf = LayerTypeClassifier::train(e.classifier_seed, e.classifier_models, opt.rules);
    const ExtractionReport rep = extract_architecture(transfers, opt, clf, truth ? &*truth : nullptr);
    run.write("report.json", rep.to_json() + "\n");
    std::cout << "extracted " << rep.layers.size() << " layers from " << rep.iterations << " iterations";
    if (rep.all_contain_truth) std::cout << (*rep.all_contain_truth ? "; truth recovered" : "; truth missed");
    std::cout << "\n";
}

void cmd_extract_record(const Opts& o, Run& run) {
    const ExtractOpts& e = o.ex;
    const ModelSpec m = model_arg(e.model);
    ModelTraceOptions opt;
    opt.workload.batch = e.batch;
    opt.workload.iterations = e.iterations;
    opt.workload.element_bytes = e.element_bytes;
    opt.workload.conv = shape_rules(e).conv;
    opt.workload.rounding = shape_rules(e).rounding;
    opt.workload.seed = e.seed;
    opt.spy_gpu = e.gpu;
    run.write("trace.csv", record_model_parallel_trace(m, load_profile(e.profile), opt));
    run.write("model.txt", format_model(m) + "\n");
    std::cout << "recorded " << e.iterations << " iterations of " << format_model(m) << "\n";
}

int run_cli(std::vector<std::string> args);

// ExperimentSpec: `scenario`, `profile`, `topology`, one or more `seed`, `out`,
// and `param.<flag> = value` entries forwarded to the command.
int cmd_spec(const std::string& path) {
    const KvDocument doc = KvDocument::parse(read_file(path));
    static const std::map<std::string, std::vector<std::string>> commands = {
        {"topo", {"topo"}},
        {"calibrate", {"calibrate"}},
        {"covert-run", {"covert", "run"}},
        {"covert-sweep", {"covert", "sweep"}},
        {"fingerprint-collect", {"fingerprint", "collect"}},
        {"fingerprint-run", {"fingerprint", "run"}},
        {"fingerprint-sweep", {"fingerprint", "sweep"}},
        {"mitigate", {"mitigate"}},
        {"extract-record", {"extract", "record"}},
        {"extract", {"extract"}},
    };
    const std::string scenario = doc.require("scenario");
    const auto it = commands.find(scenario);
    if (it == commands.end()) fail(ErrorCode::InvalidArgument, path + ": unknown scenario '" + scenario + "'");
    const std::vector<std::string> seeds = doc.get_all("seed");
    require(!seeds.empty(), path + ": at least one seed is required");
    const std::string out = doc.get("out").value_or("nvbleed-out");
    const bool seeded = scenario != "topo" && scenario != "extract";
    const std::string topology = doc.get("topology").value_or("default");
    const bool shaped = scenario == "topo" || scenario.rfind("covert", 0) == 0;
    if (!shaped && topology != "default")
        fail(ErrorCode::InvalidArgument, path + ": scenario '" + scenario + "' runs on the default topology only");

    int worst = kOk;
    for (const std::string& s : seeds) {
        std::vector<std::string> a = it->second;
        a.push_back("--out");
        a.push_back(seeds.size() > 1 ? join_path(out, "seed-" + trim(s)) : out);
        if (auto p = doc.get("profile"); p && scenario != "extract") {
            a.push_back("--profile");
            a.push_back(*p);
        }
        if (shaped) {
            a.push_back("--shape");
            a.push_back(topology);
        }
        if (seeded) {
            a.push_back("--seed");
            a.push_back(std::to_string(parse_int(s, "seed")));
        }
        for (const auto& [k, v] : doc.entries()) {
            if (k.rfind("param.", 0) != 0) continue;
            a.push_back("--" + k.substr(6));
            if (v != "true") a.push_back(v);
        }
        worst = std::max(worst, run_cli(a));
    }
    return worst;
}

int cmd_rerun(const Opts& o) {
    const json before = read_json(o.manifest);
    std::vector<std::string> args = before.at("argv").get<std::vector<std::string>>();
    // defaults to the directory holding the manifest, i.e. an in-place rerun
    const std::string out = o.out_given ? o.out : std::filesystem::path(o.manifest).parent_path().generic_string();
    args.push_back("--out");
    args.push_back(out);
    const int rc = run_cli(args);
    if (rc != kOk) return rc;
    const json after = read_json(join_path(out, "manifest.json"));
    int mismatches = 0;
    for (const auto& [name, h] : before.at("outputs").items()) {
        const auto a = after.at("outputs").find(name);
        if (a == after.at("outputs").end() || *a != h) {
            std::cerr << "rerun: " << name << " differs\n";
            ++mismatches;
        }
    }
    if (after.at("outputs").size() != before.at("outputs").size()) ++mismatches;
    if (mismatches && o.rerun_check) return kFailed;
    std::cout << "rerun: " << before.at("outputs").size() << " outputs "
              << (mismatches ? "differ" : "byte-identical") << "\n";
    return kOk;
}

int run_cli(std::vector<std::string> args) {
    Opts o;
    CLI::App app{"Simulated GPU interconnect covert and side channels"};
    app.set_config("--config", "", "Read options from a TOML or INI file; command-line values take precedence");
    app.option_defaults()->always_capture_default();
    app.fallthrough();
    app.require_subcommand(1);
    app.add_option("--out", o.out, "Output directory for artifacts and manifest.json");

    auto* topo = app.add_subcommand("topo", "Describe a topology and write its profile and layout files");
    topo->add_option("--profile", o.topo_profile, "gcp, dgx or a profile file");
    topo->add_option("--shape", o.topo_shape, "default, ring8 or hypercube8")
        ->check(CLI::IsMember({"default", "ring8", "hypercube8"}));
    topo->add_flag("--cross-vm", o.topo_cross_vm, "Partition GPUs into the cross-VM layout");

    auto* cal = app.add_subcommand("calibrate", "Fit probe and counter-read costs to target channel bandwidths");
    cal->add_option("--profile", o.cal_profile, "gcp, dgx or a profile file");
    cal->add_option("--target-contenlink", o.target_contenlink, "Target ContenLink bandwidth in b/s (0 = preset)");
    cal->add_option("--target-leaky", o.target_leaky, "Target LeakyCounterLink bandwidth in b/s (0 = preset)");
    cal->add_option("--bits", o.cal_bits, "Message bits per calibration run");
    cal->add_option("--seed", o.cal_seed, "Calibration seed");

    auto* covert = app.add_subcommand("covert", "Covert channel experiments");
    covert->require_subcommand(1);
    auto add_covert = [&](CLI::App* c) {
        CovertOpts& k = o.covert;
        c->add_option("--protocol", k.protocol, "contenlink or leakycounter")
            ->check(CLI::IsMember({"contenlink", "leakycounter"}));
        c->add_option("--profile", k.profile, "gcp, dgx or a profile file");
        c->add_option("--shape", k.shape, "default, ring8 or hypercube8")
            ->check(CLI::IsMember({"default", "ring8", "hypercube8"}));
        c->add_option("--bits", k.bits, "Message bits per trial");
        c->add_option("--trials", k.trials, "Independent trials");
        c->add_option("--seed", k.seed, "Experiment seed");
        c->add_flag("--no-ambient", k.no_ambient, "Disable background traffic");
    };
    auto* crun = covert->add_subcommand("run", "Transmit random messages and report bandwidth and error rate");
    add_covert(crun);
    crun->add_option("--sender-size", o.covert.sender_size, "Bytes per sender copy for a 1 bit");
    crun->add_flag("--event-log", o.covert.event_log, "Write the simulator event log of every trial");
    auto* csweep = covert->add_subcommand("sweep", "Bandwidth and error rate over sender sizes");
    add_covert(csweep);
    csweep->add_option("--sizes", o.covert.sizes, "Sender sizes in bytes (default 256 B to 4 MB)")->delimiter(',');

    auto* fp = app.add_subcommand("fingerprint", "Application fingerprinting side channel");
    fp->require_subcommand(1);
    auto* collect = fp->add_subcommand("collect", "Record labelled spy traces");
    add_fp_options(collect, o.fp);
    auto add_eval = [&](CLI::App* c) {
        c->add_option("--traces", o.ev.traces, "Directory written by 'fingerprint collect'");
    };
    auto* train = fp->add_subcommand("train", "Extract training feature rows");
    add_eval(train);
    train->add_option("--window", o.ev.window, "Samples per feature window (0 = scenario default)");
    train->add_option("--max-windows", o.ev.max_windows, "Feature windows kept per trace");
    train->add_option("--rate", o.ev.rate_hz, "Downsample traces to this rate in Hz first (0 = native)");
    train->add_option("--k", o.ev.k, "Neighbours for the KNN vote");
    auto* eval = fp->add_subcommand("eval", "Classify the held-out traces");
    add_eval(eval);
    eval->add_option("--model", o.ev.model, "Directory written by 'fingerprint train', or its model.json");
    auto* frun = fp->add_subcommand("run", "Collect, train and evaluate in one step");
    add_fp_options(frun, o.fp);
    auto* fsweep = fp->add_subcommand("sweep", "F1 over feature window sizes");
    add_fp_options(fsweep, o.fp);
    fsweep->add_option("--windows", o.fp.windows, "Window sizes to evaluate")->delimiter(',');

    auto* mit = app.add_subcommand("mitigate", "F1 when the counter sampling rate is limited");
    add_fp_options(mit, o.fp);
    mit->add_option("--rates", o.fp.rates, "Sampling rates in Hz")->delimiter(',');

    auto* ex = app.add_subcommand("extract", "Recover a model-parallel DNN architecture from a counter trace");
    ex->require_subcommand(0, 1);
    auto add_shape = [&](CLI::App* c) {
        c->add_option("--batch", o.ex.batch, "Training batch size");
        c->add_option("--element-bytes", o.ex.element_bytes, "Bytes per activation element");
        c->add_option("--conv-channels", o.ex.conv, "Conv volume channel count: as-printed or output")
            ->check(CLI::IsMember({"as-printed", "output"}));
        c->add_option("--rounding", o.ex.rounding, "Output width rounding: floor or exact")
            ->check(CLI::IsMember({"floor", "exact"}));
        c->add_option("--gpu", o.ex.gpu, "GPU whose counters the spy reads");
    };
    add_shape(ex);
    ex->add_option("--trace", o.ex.trace, "Counter CSV (time_s,gpu,counter,slot,value)");
    ex->add_option("--truth", o.ex.truth, "Ground-truth model: simple model name (CNN_1..), spec string or file");
    ex->add_option("--input-width", o.ex.input_w, "Input width");
    ex->add_option("--input-channels", o.ex.input_c, "Input channels");
    ex->add_option("--gap-factor", o.ex.gap_factor, "Iteration split threshold as a multiple of the median gap");
    ex->add_option("--classifier-seed", o.ex.classifier_seed, "Seed of the layer-type training set");
    ex->add_option("--classifier-models", o.ex.classifier_models, "Random architectures in the training set");
    auto* rec = ex->add_subcommand("record", "Simulate a model-parallel victim and write its counter trace");
    add_shape(rec);
    rec->add_option("--model", o.ex.model, "Simple model name (CNN_1..), spec string or file");
    rec->add_option("--profile", o.ex.profile, "gcp, dgx or a profile file");
    rec->add_option("--iterations", o.ex.iterations, "Training iterations");
    rec->add_option("--seed", o.ex.seed, "Workload seed");

    auto* spec = app.add_subcommand("run", "Run an experiment spec file (one run per seed)");
    spec->add_option("spec", o.spec, "Experiment spec file")->required();

    auto* rerun = app.add_subcommand("rerun", "Repeat the run recorded in a manifest and compare output hashes");
    rerun->add_option("--manifest", o.manifest, "manifest.json of an earlier run")->required();
    rerun->add_flag_function("--no-check", [&](std::int64_t) { o.rerun_check = false; },
                             "Report differences without failing");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (spec->parsed()) return cmd_spec(o.spec);
        if (rerun->parsed()) {
            o.out_given = app.get_option("--out")->count() > 0;
            return cmd_rerun(o);
        }

        std::vector<std::string> replay;
        replay_args(&app, replay);
        json config;
        effective_config(&app, config);
        std::uint64_t seed = 0;
        if (cal->parsed()) seed = o.cal_seed;
        if (covert->parsed()) seed = o.covert.seed;
        if (collect->parsed() || frun->parsed() || fsweep->parsed() || mit->parsed()) seed = o.fp.seed;
        if (rec->parsed()) seed = o.ex.seed;
        if (ex->parsed() && !rec->parsed()) seed = o.ex.classifier_seed;
        Run run(o.out, replay, config, seed);

        if (topo->parsed()) cmd_topo(o, run);
        else if (cal->parsed()) cmd_calibrate(o, run);
        else if (crun->parsed()) cmd_covert_run(o, run);
        else if (csweep->parsed()) cmd_covert_sweep(o, run);
        else if (collect->parsed()) cmd_fp_collect(o, run);
        else if (train->parsed()) cmd_fp_train(o, run);
        else if (eval->parsed()) cmd_fp_eval(o, run);
        else if (frun->parsed()) cmd_fp_run(o, run);
        else if (fsweep->parsed()) cmd_fp_sweep(o, run);
        else if (mit->parsed()) cmd_mitigate(o, run);
        else if (rec->parsed()) cmd_extract_record(o, run);
        else if (ex->parsed()) cmd_extract(o, run);
        run.finish();
        return kOk;
    } catch (const Error& e) {
        std::cerr << "nvbleed: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "nvbleed: internal error: " << e.what() << "\n";
        return kInternal;
    }
}

}  // namespace

int main(int argc, char** argv) { return run_cli(std::vector<std::string>(argv + 1, argv + argc)); }

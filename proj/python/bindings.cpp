#include <pybind11/pybind11.h>
#include <pybind11/gil_safe_call_once.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>

#include "nvbleed/covert.hpp"
#include "nvbleed/dnn.hpp"
#include "nvbleed/extract.hpp"
#include "nvbleed/link.hpp"
#include "nvbleed/sidechan.hpp"
#include "nvbleed/topo.hpp"

namespace py = pybind11;
using namespace nvbleed;

namespace {

const char* code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::NotFound: return "not_found";
        case ErrorCode::Unavailable: return "unavailable";
        case ErrorCode::Unreachable: return "unreachable";
        case ErrorCode::Timeout: return "timeout";
        case ErrorCode::Inseparable: return "inseparable";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

py::dict channel_dict(const ChannelReport& r) {
    py::dict d;
    d["protocol"] = std::string(protocol_name(r.protocol));
    d["profile"] = r.profile;
    d["sender_bytes"] = r.sender_size;
    d["bits"] = r.bits;
    d["trials"] = r.trials;
    d["bandwidth_bps"] = r.bandwidth_bps;
    d["error_rate"] = r.error_rate;
    return d;
}

py::object json_loads(const std::string& s) { return py::module_::import("json").attr("loads")(s); }

ShapeRules rules_from(const std::string& conv, const std::string& rounding) {
    ShapeRules r;
    if (conv == "output") r.conv = ConvChannels::OutputChannels;
    else require(conv == "as-printed", "conv must be 'as-printed' or 'output'");
    if (rounding == "exact") r.rounding = ShapeRounding::Exact;
    else require(rounding == "floor", "rounding must be 'floor' or 'exact'");
    return r;
}

py::dict candidate_dict(const LayerCandidate& c) {
    py::dict d;
    d["type"] = std::string(layer_type_name(c.type));
    d["W"] = c.w;
    d["C_in"] = c.c_in;
    d["C"] = c.c;
    d["F"] = c.f;
    d["S"] = c.s;
    d["P"] = c.p;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Simulated GPU interconnect covert and side channels";

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> exc;
    exc.call_once_and_store_result([&]() { return py::exception<Error>(m, "NvbleedError"); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            // message carries the error code, e.g. "not_found: unknown simple model 'X'"
            py::set_error(exc.get_stored(), (std::string(code_name(e.code())) + ": " + e.what()).c_str());
        }
    });

    py::class_<PlatformProfile>(m, "PlatformProfile")
        .def_readonly("name", &PlatformProfile::name)
        .def_readonly("slots_per_gpu", &PlatformProfile::slots_per_gpu)
        .def_readonly("slots_per_peer_link", &PlatformProfile::slots_per_peer_link)
        .def_readonly("slot_bandwidth", &PlatformProfile::slot_bandwidth)
        .def_readwrite("probe_overhead", &PlatformProfile::probe_overhead)
        .def_readwrite("counter_read_cost", &PlatformProfile::counter_read_cost)
        .def_readonly("calibrated_against", &PlatformProfile::calibrated_against)
        .def("__str__", &format_profile);

    m.def("load_profile", &load_profile, py::arg("name_or_path"), "gcp, dgx or a profile file path");

    m.def(
        "schedule_transfer",
        [](std::uint64_t bytes, int slots) {
            const PacketSchedule s = schedule_transfer(bytes, slots);
            py::dict d;
            d["payload_flits"] = s.per_slot_payload_flits;
            d["overhead_flits"] = s.per_slot_overhead_flits;
            d["packets"] = s.packet_count;
            d["wire_bytes"] = s.wire_bytes();
            return d;
        },
        py::arg("payload_bytes"), py::arg("slots"));

    m.def(
        "levenshtein", [](const std::string& a, const std::string& b) { return levenshtein(a, b); }, py::arg("a"),
        py::arg("b"));

    m.def(
        "window_stats",
        [](const std::vector<double>& x) {
            require(!x.empty(), "window_stats: empty window");
            const auto s = window_stats(x.data(), x.size());
            py::dict d;
            for (int i = 0; i < kStatCount; ++i) d[py::str(std::string(stat_names()[i]))] = s[i];
            return d;
        },
        py::arg("window"));

    m.def(
        "covert_run",
        [](const std::string& protocol, const std::string& profile, std::uint64_t sender_size, std::size_t bits,
           int trials, std::uint64_t seed) {
            ProtocolConfig cfg;
            cfg.protocol = protocol_from_name(protocol);
            cfg.sender_size = sender_size;
            const Topology topo = default_topology(load_profile(profile));
            ChannelReport r;
            {
                py::gil_scoped_release nogil;
                r = evaluate_channel(topo, cfg, bits, trials, seed);
            }
            return channel_dict(r);
        },
        py::arg("protocol") = "contenlink", py::arg("profile") = "gcp", py::arg("sender_size") = 256,
        py::arg("bits") = 10000, py::arg("trials") = 5, py::arg("seed") = 1);

    m.def(
        "fingerprint",
        [](const std::string& scenario, const std::string& profile, const std::string& leakage, int classes,
           int traces_per_class, long long samples, std::size_t window, std::uint64_t seed) {
            FingerprintConfig cfg;
            cfg.scenario = scenario_from_name(scenario);
            cfg.profile = load_profile(profile);
            cfg.leakage = leakage_from_name(leakage);
            cfg.counters_enabled = cfg.leakage == Leakage::TimingPlusCounters || cfg.scenario == Scenario::CrossVm;
            cfg.classes = classes;
            cfg.traces_per_class = traces_per_class;
            cfg.samples = samples;
            cfg.window = window;
            cfg.seed = seed;
            cfg.validate();
            std::string js;
            {
                py::gil_scoped_release nogil;
                js = fingerprint_experiment(cfg).to_json();
            }
            return json_loads(js);
        },
        py::arg("scenario") = "apps18", py::arg("profile") = "gcp", py::arg("leakage") = "timing+counters",
        py::arg("classes") = 0, py::arg("traces_per_class") = 50, py::arg("samples") = 0, py::arg("window") = 0,
        py::arg("seed") = 1);

    m.def("parse_model", [](const std::string& s) { return format_model(parse_model(s)); }, py::arg("spec"),
          "Normalised spec string");
    m.def("simple_model_names", &simple_model_names);

    m.def(
        "conv_candidates",
        [](int w_prev, int c_prev, std::uint64_t bytes, int element_bytes, int batch, const std::string& conv,
           const std::string& rounding) {
            py::list out;
            for (const auto& c : infer_conv_candidates(w_prev, c_prev, make_observation(0, bytes, element_bytes, batch),
                                                       rules_from(conv, rounding)))
                out.append(candidate_dict(c));
            return out;
        },
        py::arg("w_prev"), py::arg("c_prev"), py::arg("bytes"), py::arg("element_bytes") = 4, py::arg("batch") = 64,
        py::arg("conv") = "as-printed", py::arg("rounding") = "floor");

    m.def(
        "pool_candidates",
        [](int w_prev, int c_prev, std::uint64_t bytes, int element_bytes, int batch, const std::string& rounding) {
            py::list out;
            for (const auto& c : infer_pool_candidates(w_prev, c_prev, make_observation(0, bytes, element_bytes, batch),
                                                       rules_from("as-printed", rounding)))
                out.append(candidate_dict(c));
            return out;
        },
        py::arg("w_prev"), py::arg("c_prev"), py::arg("bytes"), py::arg("element_bytes") = 4, py::arg("batch") = 64,
        py::arg("rounding") = "floor");

    m.def(
        "record_model_trace",
        [](const std::string& model, const std::string& profile, int batch, long long iterations, std::uint64_t seed) {
            ModelTraceOptions o;
            o.workload.batch = batch;
            o.workload.iterations = iterations;
            o.workload.seed = seed;
            const ModelSpec m = std::find(simple_model_names().begin(), simple_model_names().end(), model) !=
                                        simple_model_names().end()
                                    ? simple_model(model)
                                    : parse_model(model, "custom");
            return record_model_parallel_trace(m, load_profile(profile), o);
        },
        py::arg("model"), py::arg("profile") = "gcp", py::arg("batch") = 64, py::arg("iterations") = 100,
        py::arg("seed") = 1, "Counter CSV of a model-parallel training run");

    m.def(
        "extract",
        [](const std::string& csv, int batch, int element_bytes, const std::string& truth, std::uint64_t seed) {
            ExtractOptions opt;
            opt.batch = batch;
            opt.element_bytes = element_bytes;
            std::optional<ModelSpec> t;
            if (!truth.empty()) {
                const auto& names = simple_model_names();
                t = std::find(names.begin(), names.end(), truth) != names.end() ? simple_model(truth)
                                                                              : parse_model(truth, "truth");
            }
            std::string js;
            {
                py::gil_scoped_release nogil;
                const LayerTypeClassifier clf = LayerTypeClassifier::train(seed);
                js = extract_architecture(transfers_from_counter_csv(csv), opt, clf, t ? &*t : nullptr).to_json();
            }
            return json_loads(js);
        },
        py::arg("counter_csv"), py::arg("batch") = 64, py::arg("element_bytes") = 4, py::arg("truth") = "",
        py::arg("classifier_seed") = 1);
}

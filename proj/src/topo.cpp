#include "nvbleed/topo.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "nvbleed/kv.hpp"

namespace nvbleed {

void PlatformProfile::validate() const {
    require(!name.empty(), "profile: name must be set");
    require(slots_per_gpu >= 1, "profile: slots_per_gpu must be >= 1");
    require(slots_per_peer_link >= 1, "profile: slots_per_peer_link must be >= 1");
    require(slots_per_peer_link <= slots_per_gpu, "profile: slots_per_peer_link exceeds slots_per_gpu");
    require(slot_bandwidth > 0, "profile: slot_bandwidth must be > 0");
    require(probe_overhead >= 0, "profile: probe_overhead must be >= 0");
    require(counter_read_cost >= 0 && counter_record_cost >= 0, "profile: counter costs must be >= 0");
    require(contention_small_multiplier >= 1.10,
            "profile: contention_small_multiplier must be >= 1.10");
    require(contention_plateau_multiplier >= contention_small_multiplier,
            "profile: contention_plateau_multiplier must be >= contention_small_multiplier");
    require(timing_jitter >= 0, "profile: timing_jitter must be >= 0");
    require(ambient_rate_hz >= 0, "profile: ambient_rate_hz must be >= 0");
    require(max_transfer_bytes > 0, "profile: max_transfer_bytes must be > 0");
}

// Fitted by `nvbleed calibrate` against the published channel bandwidths;
// rerun it after changing any timing constant.
PlatformProfile gcp_profile() {
    PlatformProfile p;
    p.name = "gcp";
    p.nvlink_version = NvlinkVersion::V2;
    p.slots_per_gpu = 6;
    p.slots_per_peer_link = 3;
    p.slot_bandwidth = 25e9;
    p.probe_overhead = 8.679e-6;
    p.counter_read_cost = 5.140e-4;
    p.counter_record_cost = 2.0e-7;
    p.contention_plateau_multiplier = 1.30;
    p.contention_small_multiplier = 1.10;
    p.timing_jitter = 0.08;
    p.calibrated_against = "contenlink=70590bps leakycounter=1880bps";
    return p;
}

PlatformProfile dgx_profile() {
    PlatformProfile p;
    p.name = "dgx";
    p.nvlink_version = NvlinkVersion::V1;
    p.slots_per_gpu = 4;
    p.slots_per_peer_link = 1;
    p.slot_bandwidth = 20e9;
    p.probe_overhead = 9.668e-6;
    p.counter_read_cost = 6.994e-4;
    p.counter_record_cost = 2.0e-7;
    p.contention_plateau_multiplier = 1.37;
    p.contention_small_multiplier = 1.10;
    p.timing_jitter = 0.08;
    p.calibrated_against = "contenlink=60710bps leakycounter=1390bps";
    return p;
}

PlatformProfile parse_profile(std::string_view text) {
    const KvDocument doc = KvDocument::parse(text);
    PlatformProfile p;
    p.name = doc.require("name");
    const std::string ver = doc.require("nvlink_version");
    if (ver == "V1" || ver == "v1") p.nvlink_version = NvlinkVersion::V1;
    else if (ver == "V2" || ver == "v2") p.nvlink_version = NvlinkVersion::V2;
    else fail(ErrorCode::InvalidArgument, "profile: unknown nvlink_version '" + ver + "'");
    p.slots_per_gpu = static_cast<int>(doc.integer("slots_per_gpu"));
    p.slots_per_peer_link = static_cast<int>(doc.integer("slots_per_peer_link"));
    p.slot_bandwidth = doc.number("slot_bandwidth");
    p.probe_overhead = doc.number("probe_overhead");
    p.counter_read_cost = doc.number("counter_read_cost");
    p.counter_record_cost = doc.number_or("counter_record_cost", p.counter_record_cost);
    p.counter_record_cap = static_cast<std::uint64_t>(
        doc.number_or("counter_record_cap", static_cast<double>(p.counter_record_cap)));
    p.contention_plateau_multiplier = doc.number("contention_plateau_multiplier");
    p.contention_small_multiplier = doc.number_or("contention_small_multiplier", 1.10);
    p.timing_jitter = doc.number_or("timing_jitter", p.timing_jitter);
    p.ambient_rate_hz = doc.number_or("ambient_rate_hz", p.ambient_rate_hz);
    p.ambient_bytes = static_cast<std::uint64_t>(doc.number_or("ambient_bytes", static_cast<double>(p.ambient_bytes)));
    p.max_transfer_bytes =
        static_cast<std::uint64_t>(doc.number_or("max_transfer_bytes", static_cast<double>(p.max_transfer_bytes)));
    p.calibrated_against = doc.get("calibrated_against").value_or("");
    p.validate();
    return p;
}

std::string format_profile(const PlatformProfile& p) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    KvDocument doc;
    doc.add("name", p.name);
    doc.add("nvlink_version", p.nvlink_version == NvlinkVersion::V1 ? "V1" : "V2");
    doc.add("slots_per_gpu", std::to_string(p.slots_per_gpu));
    doc.add("slots_per_peer_link", std::to_string(p.slots_per_peer_link));
    doc.add("slot_bandwidth", num(p.slot_bandwidth));
    doc.add("probe_overhead", num(p.probe_overhead));
    doc.add("counter_read_cost", num(p.counter_read_cost));
    doc.add("counter_record_cost", num(p.counter_record_cost));
    doc.add("counter_record_cap", std::to_string(p.counter_record_cap));
    doc.add("contention_plateau_multiplier", num(p.contention_plateau_multiplier));
    doc.add("contention_small_multiplier", num(p.contention_small_multiplier));
    doc.add("timing_jitter", num(p.timing_jitter));
    doc.add("ambient_rate_hz", num(p.ambient_rate_hz));
    doc.add("ambient_bytes", std::to_string(p.ambient_bytes));
    doc.add("max_transfer_bytes", std::to_string(p.max_transfer_bytes));
    if (!p.calibrated_against.empty()) doc.add("calibrated_against", p.calibrated_against);
    return "# nvbleed platform profile\n" + doc.str();
}

PlatformProfile load_profile(const std::string& name_or_path) {
    if (name_or_path == "gcp") return gcp_profile();
    if (name_or_path == "dgx") return dgx_profile();
    if (std::filesystem::exists(name_or_path)) return parse_profile(read_file(name_or_path));
    fail(ErrorCode::NotFound, "unknown profile '" + name_or_path + "' (expected gcp, dgx or a profile file)");
}

std::string_view shape_name(TopologyShape s) {
    switch (s) {
        case TopologyShape::Hypercube8: return "hypercube8";
        case TopologyShape::Ring8: return "ring8";
        case TopologyShape::Custom: return "custom";
    }
    return "custom";
}

TopologyShape shape_from_name(std::string_view s) {
    if (s == "hypercube8") return TopologyShape::Hypercube8;
    if (s == "ring8") return TopologyShape::Ring8;
    if (s == "custom") return TopologyShape::Custom;
    fail(ErrorCode::InvalidArgument, "unknown topology shape '" + std::string(s) + "'");
}

namespace {

// DGX-1 hybrid cube-mesh: two fully connected quads plus the i <-> i+4 rungs.
std::vector<Topology::Edge> hypercube8_edges() {
    std::vector<Topology::Edge> e;
    for (int q = 0; q < 8; q += 4)
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) e.emplace_back(q + i, q + j);
    for (int i = 0; i < 4; ++i) e.emplace_back(i, i + 4);
    return e;
}

// GCP 8xV100: each GPU reaches its two ring neighbours over 3 slots each.
std::vector<Topology::Edge> ring8_edges() {
    std::vector<Topology::Edge> e;
    for (int i = 0; i < 8; ++i) e.emplace_back(i, (i + 1) % 8);
    return e;
}

}  // namespace

Topology Topology::build(const PlatformProfile& profile, TopologyShape shape, std::span<const Edge> custom_edges,
                         int gpu_count) {
    profile.validate();
    Topology t;
    t.profile_ = profile;
    t.shape_ = shape;
    std::vector<Edge> edges;
    switch (shape) {
        case TopologyShape::Hypercube8:
            gpu_count = 8;
            edges = hypercube8_edges();
            break;
        case TopologyShape::Ring8:
            gpu_count = 8;
            edges = ring8_edges();
            break;
        case TopologyShape::Custom:
            edges.assign(custom_edges.begin(), custom_edges.end());
            break;
    }
    require(gpu_count >= 1 && gpu_count <= 8, "topology: between 1 and 8 GPUs supported");
    t.gpu_count_ = gpu_count;
    t.link_of_.assign(gpu_count, std::vector<int>(gpu_count, -1));
    t.vm_.assign(gpu_count, 0);

    std::set<Edge> seen;
    for (auto [a, b] : edges) {
        if (a < 0 || b < 0 || a >= gpu_count || b >= gpu_count)
            fail(ErrorCode::InvalidArgument, "topology: edge references unknown GPU (" + std::to_string(a) + "," +
                                                 std::to_string(b) + ")");
        require(a != b, "topology: self-link on GPU " + std::to_string(a));
        const Edge key{std::min(a, b), std::max(a, b)};
        require(seen.insert(key).second,
                "topology: duplicate edge (" + std::to_string(key.first) + "," + std::to_string(key.second) + ")");
        t.link_of_[a][b] = t.link_of_[b][a] = static_cast<int>(t.links_.size());
        t.links_.push_back(Link{key.first, key.second, profile.slots_per_peer_link});
    }

    t.slot_base_.assign(gpu_count, std::vector<int>(t.links_.size(), -1));
    for (GpuId g = 0; g < gpu_count; ++g) {
        int next = 0;
        for (GpuId peer = 0; peer < gpu_count; ++peer) {
            const int l = t.link_of_[g][peer];
            if (l < 0) continue;
            t.slot_base_[g][l] = next;
            next += t.links_[l].slots;
        }
        require(next <= profile.slots_per_gpu, "topology: GPU " + std::to_string(g) + " needs " +
                                                   std::to_string(next) + " slots, profile has " +
                                                   std::to_string(profile.slots_per_gpu));
    }
    return t;
}

Topology Topology::with_vms(std::vector<VmId> vm_of_gpu) const {
    require(static_cast<int>(vm_of_gpu.size()) == gpu_count_, "topology: one VM id per GPU required");
    Topology t = *this;
    t.vm_ = std::move(vm_of_gpu);
    return t;
}

Topology Topology::cross_vm_split() const {
    std::vector<VmId> vms(gpu_count_, 2);
    for (GpuId g = 0; g < gpu_count_ && g < 4; ++g) vms[g] = g < 2 ? 0 : 1;
    return with_vms(std::move(vms));
}

void Topology::check_gpu(GpuId g) const {
    if (g < 0 || g >= gpu_count_) fail(ErrorCode::NotFound, "unknown GPU " + std::to_string(g));
}

std::optional<int> Topology::link_index(GpuId a, GpuId b) const {
    check_gpu(a);
    check_gpu(b);
    const int l = link_of_[a][b];
    if (l < 0) return std::nullopt;
    return l;
}

int Topology::peer_slots(GpuId a, GpuId b) const {
    check_gpu(a);
    check_gpu(b);
    require(a != b, "peer_slots: a GPU has no link to itself");
    const int l = link_of_[a][b];
    return l < 0 ? 0 : links_[l].slots;
}

int Topology::slot_base(GpuId gpu, int link) const {
    check_gpu(gpu);
    const int base = slot_base_.at(gpu).at(link);
    require(base >= 0, "slot_base: GPU is not an endpoint of the link");
    return base;
}

std::vector<GpuId> Topology::neighbors(GpuId g) const {
    check_gpu(g);
    std::vector<GpuId> out;
    for (GpuId p = 0; p < gpu_count_; ++p)
        if (link_of_[g][p] >= 0) out.push_back(p);
    return out;
}

VmId Topology::vm_of(GpuId g) const {
    check_gpu(g);
    return vm_[g];
}

std::vector<GpuId> Topology::ring_order(int n) const {
    require(n >= 1 && n <= gpu_count_, "ring_order: bad GPU count");
    std::vector<GpuId> order;
    if (shape_ == TopologyShape::Hypercube8) {
        order = {0, 1, 2, 3, 7, 6, 5, 4};
    } else if (shape_ == TopologyShape::Ring8) {
        order = {0, 1, 2, 3, 4, 5, 6, 7};
    } else {
        // Greedy walk preferring the lowest unvisited neighbour.
        std::vector<bool> used(gpu_count_, false);
        order.push_back(0);
        used[0] = true;
        while (static_cast<int>(order.size()) < gpu_count_) {
            GpuId pick = -1;
            for (GpuId p : neighbors(order.back()))
                if (!used[p]) { pick = p; break; }
            for (GpuId p = 0; pick < 0 && p < gpu_count_; ++p)
                if (!used[p]) pick = p;
            used[pick] = true;
            order.push_back(pick);
        }
    }
    order.resize(n);
    return order;
}

std::string Topology::describe() const {
    std::ostringstream os;
    os << "profile " << profile_.name << " (" << (profile_.nvlink_version == NvlinkVersion::V1 ? "NVLink-V1" : "NVLink-V2")
       << "), shape " << shape_name(shape_) << ", " << gpu_count_ << " GPUs, " << links_.size() << " links\n";
    for (const Link& l : links_)
        os << "  GPU" << l.a << " <-> GPU" << l.b << "  slots=" << l.slots << "  local slots " << slot_base(l.a, link_of_[l.a][l.b])
           << "/" << slot_base(l.b, link_of_[l.a][l.b]) << '\n';
    os << "  vm:";
    for (GpuId g = 0; g < gpu_count_; ++g) os << ' ' << vm_[g];
    os << '\n';
    return os.str();
}

std::string Topology::format() const {
    KvDocument doc;
    doc.add("profile", profile_.name);
    doc.add("shape", std::string(shape_name(shape_)));
    doc.add("gpus", std::to_string(gpu_count_));
    if (shape_ == TopologyShape::Custom)
        for (const Link& l : links_) doc.add("edge", std::to_string(l.a) + " " + std::to_string(l.b));
    std::string vms;
    for (GpuId g = 0; g < gpu_count_; ++g) vms += (g ? " " : "") + std::to_string(vm_[g]);
    doc.add("vm", vms);
    return "# nvbleed topology\n" + doc.str();
}

Topology Topology::parse(std::string_view text) {
    const KvDocument doc = KvDocument::parse(text);
    const PlatformProfile profile = load_profile(doc.require("profile"));
    const TopologyShape shape = shape_from_name(doc.require("shape"));
    const int gpus = static_cast<int>(doc.get("gpus") ? doc.integer("gpus") : 8);
    std::vector<Edge> edges;
    for (const std::string& e : doc.get_all("edge")) {
        std::istringstream is(e);
        GpuId a = -1, b = -1;
        if (!(is >> a >> b)) fail(ErrorCode::InvalidArgument, "topology: bad edge '" + e + "'");
        edges.emplace_back(a, b);
    }
    require(shape == TopologyShape::Custom || edges.empty(), "topology: edges are only allowed with shape = custom");
    Topology t = build(profile, shape, edges, gpus);
    if (auto vm = doc.get("vm")) {
        std::istringstream is(*vm);
        std::vector<VmId> vms;
        VmId v;
        while (is >> v) vms.push_back(v);
        t = t.with_vms(std::move(vms));
    }
    return t;
}

Topology default_topology(const PlatformProfile& profile) {
    return Topology::build(profile,
                           profile.nvlink_version == NvlinkVersion::V1 ? TopologyShape::Hypercube8 : TopologyShape::Ring8);
}

}  // namespace nvbleed

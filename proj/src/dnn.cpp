#include "nvbleed/dnn.hpp"

#include <algorithm>
#include <cctype>

#include "nvbleed/error.hpp"
#include "nvbleed/kv.hpp"

namespace nvbleed {

std::string_view layer_type_name(LayerType t) {
    switch (t) {
        case LayerType::FC: return "FC";
        case LayerType::Conv: return "Conv";
        case LayerType::Pool: return "Pool";
        case LayerType::LSTM: return "LSTM";
    }
    return "?";
}

ModelSpec parse_model(std::string_view text, std::string name) {
    ModelSpec m;
    m.name = std::move(name);
    for (const std::string& raw : split(text, '-')) {
        const std::string tok = trim(raw);
        require(!tok.empty(), "model spec: empty layer in '" + std::string(text) + "'");
        std::size_t i = 0;
        while (i < tok.size() && std::isalpha(static_cast<unsigned char>(tok[i]))) ++i;
        const std::string kind = tok.substr(0, i);
        std::string args = tok.substr(i);
        std::erase_if(args, [](char ch) { return ch == '_' || ch == '{' || ch == '}' || ch == ' '; });
        std::vector<int> v;
        for (const std::string& a : split(args, ','))
            v.push_back(static_cast<int>(parse_int(trim(a), "model spec layer argument")));
        LayerSpec l;
        if (kind == "F" && v.size() == 1) {
            l = {LayerType::FC, v[0]};
        } else if (kind == "C" && v.size() == 4) {
            l = {LayerType::Conv, 0, v[0], v[1], v[2], v[3]};
        } else if (kind == "P" && v.size() == 2) {
            l = {LayerType::Pool, 0, v[0], 0, v[1], 0};
        } else if (kind == "LSTM" && v.size() == 1) {
            l = {LayerType::LSTM, v[0]};
        } else {
            fail(ErrorCode::InvalidArgument, "model spec: cannot parse layer '" + tok + "'");
        }
        require(l.n >= 0 && l.f >= 0 && l.c >= 0 && l.s >= 1 && l.p >= 0, "model spec: bad layer '" + tok + "'");
        m.layers.push_back(l);
    }
    require(!m.layers.empty(), "model spec: no layers");
    return m;
}

std::string format_model(const ModelSpec& m) {
    std::string out;
    for (const LayerSpec& l : m.layers) {
        if (!out.empty()) out += '-';
        switch (l.type) {
            case LayerType::FC: out += "F_{" + std::to_string(l.n) + "}"; break;
            case LayerType::LSTM: out += "LSTM_{" + std::to_string(l.n) + "}"; break;
            case LayerType::Pool: out += "P_{" + std::to_string(l.f) + "," + std::to_string(l.s) + "}"; break;
            case LayerType::Conv:
                out += "C_{" + std::to_string(l.f) + "," + std::to_string(l.c) + "," + std::to_string(l.s) + "," +
                       std::to_string(l.p) + "}";
                break;
        }
    }
    return out;
}

int conv_output_width(int w_prev, int f, int s, int p, ShapeRounding r) {
    if (s < 1 || f < 1 || p < 0) return 0;
    const int span = w_prev - f + 2 * p;
    if (span < 0) return 0;
    if (r == ShapeRounding::Exact && span % s != 0) return 0;
    return span / s + 1;
}

int pool_output_width(int w_prev, int f, int s, ShapeRounding r) { return conv_output_width(w_prev, f, s, 0, r); }

std::vector<LayerOutput> layer_outputs(const ModelSpec& m, int batch, ConvChannels conv, ShapeRounding rounding) {
    require(batch > 0, "layer_outputs: batch must be > 0");
    std::vector<LayerOutput> out;
    int w = m.input_w, c = m.input_c;
    bool flat = false;
    const auto b = static_cast<std::uint64_t>(batch);
    for (const LayerSpec& l : m.layers) {
        LayerOutput o;
        o.type = l.type;
        switch (l.type) {
            case LayerType::FC:
                o.n = l.n;
                o.elements = static_cast<std::uint64_t>(l.n) * b;
                flat = true;
                break;
            case LayerType::LSTM:
                o.n = l.n;
                o.elements = static_cast<std::uint64_t>(l.n) * b;
                o.transfers = m.seq_len;
                flat = true;
                break;
            case LayerType::Conv: {
                require(!flat, "model: conv layer after a flat layer");
                const int wo = conv_output_width(w, l.f, l.s, l.p, rounding);
                if (wo <= 0) fail(ErrorCode::InvalidArgument, "model: layer shape mismatch at " + format_model({"", 0, 0, 0, {l}}));
                const int channels = conv == ConvChannels::OutputChannels ? l.c : c;
                o.w = wo;
                o.c = l.c;
                o.elements = static_cast<std::uint64_t>(wo) * wo * static_cast<std::uint64_t>(channels) * b;
                w = wo;
                c = l.c;
                break;
            }
            case LayerType::Pool: {
                require(!flat, "model: pooling layer after a flat layer");
                const int wo = pool_output_width(w, l.f, l.s, rounding);
                if (wo <= 0) fail(ErrorCode::InvalidArgument, "model: layer shape mismatch at " + format_model({"", 0, 0, 0, {l}}));
                o.w = wo;
                o.c = c;
                o.elements = static_cast<std::uint64_t>(wo) * wo * static_cast<std::uint64_t>(c) * b;
                w = wo;
                break;
            }
        }
        if (o.elements == 0) fail(ErrorCode::InvalidArgument, "model: layer produces an empty output");
        out.push_back(o);
    }
    return out;
}

std::uint64_t parameter_count(const ModelSpec& m) {
    std::uint64_t total = 0;
    std::uint64_t w = static_cast<std::uint64_t>(m.input_w), c = static_cast<std::uint64_t>(m.input_c);
    std::uint64_t features = w * w * c;
    bool seq = false;
    for (const LayerSpec& l : m.layers) {
        const auto n = static_cast<std::uint64_t>(l.n);
        switch (l.type) {
            case LayerType::FC:
                total += features * n + n;
                features = n;
                break;
            case LayerType::LSTM: {
                // Input per step is one image row; two bias vectors per gate.
                const std::uint64_t in = seq ? features : w * c;
                total += 4 * (in * n + n * n + 2 * n);
                features = n;
                seq = true;
                break;
            }
            case LayerType::Conv:
                total += static_cast<std::uint64_t>(l.f) * l.f * c * l.c + l.c;
                w = static_cast<std::uint64_t>(conv_output_width(static_cast<int>(w), l.f, l.s, l.p));
                require(w > 0, "model: layer shape mismatch");
                c = static_cast<std::uint64_t>(l.c);
                features = w * w * c;
                break;
            case LayerType::Pool:
                w = static_cast<std::uint64_t>(pool_output_width(static_cast<int>(w), l.f, l.s));
                require(w > 0, "model: layer shape mismatch");
                features = w * w * c;
                break;
        }
    }
    return total;
}

namespace {

struct SimpleModel {
    const char* name;
    const char* layers;
};

constexpr SimpleModel kSimple[] = {
    {"MLP", "F_{512}-F_{256}-F_{10}"},
    {"CNN_1", "C_{5,16,1,2}-P_{2,2}-F_{10}"},
    {"CNN_2", "C_{3,32,1,1}-P_{2,2}-C_{3,64,1,1}-P_{2,2}-C_{3,128,1,1}-P_{2,2}-F_{256}-F_{10}"},
    {"Regression", "F_{512}-F_{128}-F_{1}"},
    {"LSTM", "LSTM_{128}-F_{10}"},
};

// torchvision reference parameter counts (ImageNet heads).
struct LargeModel {
    const char* name;
    std::uint64_t params;
};

constexpr LargeModel kLarge[] = {
    {"AlexNet", 61'100'840},
    {"VGG16", 138'357'544},
    {"GoogLeNet", 6'624'904},
    {"ResNet-18", 11'689'512},
    {"ResNet-50", 25'557'032},
};

}  // namespace

const std::vector<std::string>& simple_model_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& m : kSimple) v.emplace_back(m.name);
        return v;
    }();
    return names;
}

const std::vector<std::string>& dnn_model_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v = simple_model_names();
        for (const auto& m : kLarge) v.emplace_back(m.name);
        return v;
    }();
    return names;
}

ModelSpec simple_model(std::string_view name) {
    for (const auto& m : kSimple)
        if (name == m.name) return parse_model(m.layers, m.name);
    fail(ErrorCode::NotFound, "unknown simple model '" + std::string(name) + "'");
}

std::uint64_t model_parameters(std::string_view name) {
    for (const auto& m : kLarge)
        if (name == m.name) return m.params;
    return parameter_count(simple_model(name));
}

bool is_dnn_model(std::string_view name) {
    const auto& v = dnn_model_names();
    return std::find(v.begin(), v.end(), name) != v.end();
}

}  // namespace nvbleed

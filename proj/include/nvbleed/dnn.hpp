#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nvbleed {

enum class LayerType { FC, Conv, Pool, LSTM };

std::string_view layer_type_name(LayerType t);

// FC: n neurons. Conv: filter f, c filters, stride s, padding p. Pool: filter f,
// stride s. LSTM: n hidden units.
struct LayerSpec {
    LayerType type = LayerType::FC;
    int n = 0;
    int f = 0;
    int c = 0;
    int s = 1;
    int p = 0;

    bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
    std::string name;
    int input_w = 28;
    int input_c = 1;
    int seq_len = 28;  // LSTM time steps (rows of the image)
    std::vector<LayerSpec> layers;
};

/// Accepts the subscript notation, e.g. "C_{5,16,1,2}-P_{2,2}-F_{10}" or "C5,16,1,2-P2,2-F10".
ModelSpec parse_model(std::string_view text, std::string name = "");
std::string format_model(const ModelSpec& m);

// How the conv output volume counts channels: the transferred feature map has
// one channel per filter; the printed equation uses the previous layer's count.
enum class ConvChannels { OutputChannels, AsPrinted };

// Floor matches framework behaviour (CNN_2's 7 -> 3 pooling needs it); Exact
// rejects any layer whose stride does not divide the span.
enum class ShapeRounding { Floor, Exact };

/// Returns 0 when the layer does not fit (non-positive, or inexact under Exact).
int conv_output_width(int w_prev, int f, int s, int p, ShapeRounding r = ShapeRounding::Floor);
int pool_output_width(int w_prev, int f, int s, ShapeRounding r = ShapeRounding::Floor);

struct LayerOutput {
    LayerType type = LayerType::FC;
    int w = 0;                    // spatial width after the layer (0 for FC/LSTM)
    int c = 0;                    // channels after the layer
    int n = 0;                    // FC neurons / LSTM hidden units
    std::uint64_t elements = 0;   // elements in one transfer (includes batch)
    int transfers = 1;            // LSTM sends one hidden state per time step
};

std::vector<LayerOutput> layer_outputs(const ModelSpec& m, int batch, ConvChannels conv = ConvChannels::AsPrinted,
                                       ShapeRounding r = ShapeRounding::Floor);
std::uint64_t parameter_count(const ModelSpec& m);

/// MLP, CNN_1, CNN_2, Regression, LSTM.
const std::vector<std::string>& simple_model_names();
/// Adds AlexNet, VGG16, GoogLeNet, ResNet-18, ResNet-50.
const std::vector<std::string>& dnn_model_names();
ModelSpec simple_model(std::string_view name);
/// Trainable parameters; exact for the simple models, reference counts for the large ones.
std::uint64_t model_parameters(std::string_view name);
bool is_dnn_model(std::string_view name);

}  // namespace nvbleed

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nvbleed/dnn.hpp"
#include "nvbleed/sidechan.hpp"
#include "nvbleed/topo.hpp"
#include "nvbleed/workloads.hpp"

namespace nvbleed {

/// One transfer recovered from a counter trace.
struct ObservedTransfer {
    TimeNs time = 0;
    std::uint64_t wire_bytes = 0;
    std::uint64_t payload_bytes = 0;
};

/// Payload of a single push whose wire footprint is `wire` bytes; nullopt when
/// no payload produces exactly that footprint.
std::optional<std::uint64_t> payload_from_wire(std::uint64_t wire);

/// Differences the aggregated rx+tx totals of `gpu` in a `time_s,gpu,counter,slot,value` CSV.
std::vector<ObservedTransfer> transfers_from_counter_csv(const std::string& csv, GpuId gpu = 0);

struct ModelTraceOptions {
    ModelParallelOptions workload;
    GpuId spy_gpu = 0;
};
/// Model-parallel victim on GPUs (0, 1) with a counter sampler on `spy_gpu`; returns the counter CSV.
std::string record_model_parallel_trace(const ModelSpec& model, const PlatformProfile& profile,
                                        const ModelTraceOptions& opt);

struct IterationSpan {
    std::size_t first = 0;  // index of the first transfer
    std::size_t last = 0;   // inclusive
    TimeNs start = 0;
    TimeNs end = 0;
};
/// Splits where the inter-transfer gap exceeds `gap_factor` x the median gap.
std::vector<IterationSpan> segment_iterations(const std::vector<TimeNs>& times, double gap_factor = 3.0);

struct LayerObservation {
    int boundary_index = 0;
    std::uint64_t transferred_bytes = 0;
    std::uint64_t elements = 0;
    int batch = 1;
};
LayerObservation make_observation(int boundary_index, std::uint64_t bytes, int element_bytes, int batch);

struct LayerCandidate {
    LayerType type = LayerType::FC;
    int n = 0;     // FC neurons / LSTM hidden units
    int w = 0;     // output width
    int c_in = 0;  // channels consumed
    int c = 0;     // output channels, 0 when this boundary cannot tell
    int f = 0;
    int s = 0;
    int p = 0;
    int steps = 0; // LSTM time steps

    bool operator==(const LayerCandidate&) const = default;
    bool operator<(const LayerCandidate& o) const;
};

int infer_fc(const LayerObservation& obs);

struct ShapeRules {
    ConvChannels conv = ConvChannels::AsPrinted;
    ShapeRounding rounding = ShapeRounding::Floor;
};
/// Every (W, C, F, S, P) with S <= F <= W_prev/2, 0 <= P <= F and the output
/// volume matching the observation. c_prev = 0 means the input channel count is unknown.
std::vector<LayerCandidate> infer_conv_candidates(int w_prev, int c_prev, const LayerObservation& obs,
                                                  const ShapeRules& rules = {});
std::vector<LayerCandidate> infer_pool_candidates(int w_prev, int c_prev, const LayerObservation& obs,
                                                  const ShapeRules& rules = {});

// ---- layer type classification ------------------------------------------------

inline constexpr int kBoundaryFeatures = 7;
/// log2 per-sample size, log2 steps to the neighbouring boundaries (one and two
/// away on each side), relative position, is-last.
std::vector<std::vector<double>> boundary_features(const std::vector<std::uint64_t>& elements, int batch);

class LayerTypeClassifier {
public:
    /// Trains on random architectures (the simple models are never seen).
    static LayerTypeClassifier train(std::uint64_t seed, int models = 1500, const ShapeRules& rules = {});
    static LayerTypeClassifier fit(const Matrix& x, const std::vector<int>& labels, int k = 5);
    bool trained() const { return knn_.trained(); }
    /// Types ordered by vote, most likely first.
    std::vector<LayerType> rank(const std::vector<double>& feature) const;
    LayerType classify(const std::vector<double>& feature) const { return rank(feature).front(); }
    /// Smoothed neighbour vote share for FC, Conv, Pool.
    std::array<double, 3> emission(const std::vector<double>& feature) const;
    /// Most likely type sequence for one iteration: neighbour votes combined with
    /// type-to-type transition frequencies from the training models.
    std::vector<LayerType> decode(const Matrix& features) const;

private:
    Scaler scaler_;
    KnnClassifier knn_;
    std::array<std::array<double, 3>, 4> transition_{};  // [previous type or start][type]
};

/// Random valid CNN / MLP used as classifier training data.
ModelSpec random_model(std::uint64_t seed);
/// Ground-truth type label per boundary (LSTM steps are labelled FC).
std::vector<LayerType> boundary_types(const ModelSpec& m);

// ---- pipeline -------------------------------------------------------------------

struct ExtractOptions {
    int batch = 64;
    int element_bytes = 4;
    int input_w = 28;
    int input_c = 1;
    double gap_factor = 3.0;
    int lstm_min_steps = 4;
    ShapeRules rules;
};

struct ExtractedLayer {
    LayerType type = LayerType::FC;
    std::uint64_t elements = 0;
    std::vector<LayerCandidate> candidates;
    std::optional<bool> contains_truth;
};

struct ExtractionReport {
    std::size_t transfers = 0;
    std::size_t iterations = 0;
    std::size_t boundaries = 0;   // per iteration (mode)
    std::vector<ExtractedLayer> layers;
    std::optional<bool> all_contain_truth;
    std::optional<bool> types_match;

    std::vector<int> fc_widths() const;
    std::string to_json() const;
};

ExtractionReport extract_architecture(const std::vector<ObservedTransfer>& trace, const ExtractOptions& opt,
                                      const LayerTypeClassifier& clf, const ModelSpec* truth = nullptr);

/// Does any candidate match the true layer (type and every hyper-parameter it determines)?
bool candidate_matches(const LayerCandidate& c, const LayerSpec& truth);

}  // namespace nvbleed

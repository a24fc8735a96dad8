#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nvbleed/topo.hpp"
#include "nvbleed/trace.hpp"

namespace nvbleed {

// ---- features ---------------------------------------------------------------

inline constexpr int kStatCount = 12;
const std::array<std::string_view, kStatCount>& stat_names();

/// mean, max, min, median, std, var, range, sum, count_am, percent_25, percent_75, iqr_val.
/// Population variance; percentiles interpolate linearly between closest ranks.
std::array<double, kStatCount> window_stats(const double* x, std::size_t n);

/// One row per full window: 12 stats for each channel, channel-major.
std::vector<std::vector<double>> sliding_features(const Trace& series, std::size_t window, std::size_t stride = 0);
std::vector<std::string> feature_names(const Trace& series);

// ---- KNN --------------------------------------------------------------------

using Matrix = std::vector<std::vector<double>>;

struct Scaler {
    std::vector<double> mean;
    std::vector<double> scale;

    static Scaler fit(const Matrix& x);
    std::vector<double> apply(const std::vector<double>& row) const;
    Matrix apply(const Matrix& x) const;
};

struct Neighbor {
    double dist2 = 0;
    std::size_t index = 0;
};

class KnnClassifier {
public:
    KnnClassifier() = default;
    /// Brute-force euclidean KNN with uniform weights.
    static KnnClassifier fit(Matrix x, std::vector<int> labels, int k = 5);

    int predict(const std::vector<double>& q) const;
    std::vector<int> predict(const Matrix& q) const;
    /// k nearest by (squared distance, training index).
    std::vector<Neighbor> neighbors(const std::vector<double>& q) const;
    bool trained() const { return !x_.empty(); }
    int k() const { return k_; }
    std::size_t dim() const { return x_.empty() ? 0 : x_[0].size(); }
    const Matrix& points() const { return x_; }
    const std::vector<int>& labels() const { return y_; }

private:
    Matrix x_;
    std::vector<int> y_;
    int k_ = 5;
};

class KnnRegressor {
public:
    static KnnRegressor fit(Matrix x, std::vector<double> targets, int k = 5);
    double predict(const std::vector<double>& q) const;

private:
    KnnClassifier index_;
    std::vector<double> t_;
};

// ---- metrics ----------------------------------------------------------------

struct ClassMetrics {
    double f1 = 0;
    double precision = 0;
    double recall = 0;
    double accuracy = 0;
    std::vector<int> classes;                  // sorted union of true and predicted labels
    std::vector<std::vector<long long>> confusion;  // [true][pred] over `classes`
};

/// Macro-averaged over the union of observed labels.
ClassMetrics metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred);
double r2(const std::vector<double>& y_true, const std::vector<double>& y_pred);

// ---- mitigation ---------------------------------------------------------------

/// Nearest-sample decimation to `target_rate_hz`. At the native rate the trace
/// is returned unchanged.
Trace downsample(const Trace& raw, double target_rate_hz);

// ---- experiments ------------------------------------------------------------

enum class Scenario { Apps18, Characters50, CrossVm };
enum class Leakage { TimingOnly, TimingPlusCounters };

std::string_view scenario_name(Scenario s);
Scenario scenario_from_name(std::string_view s);
std::string_view leakage_name(Leakage l);
Leakage leakage_from_name(std::string_view s);

struct FingerprintConfig {
    Scenario scenario = Scenario::Apps18;
    PlatformProfile profile;
    int gpus = 2;
    int traces_per_class = 50;
    int classes = 0;              // 0 = every class of the scenario
    double train_fraction = 0.8;
    Leakage leakage = Leakage::TimingPlusCounters;
    std::size_t window = 0;       // 0 = scenario default (100 / 200 / 1000)
    int max_windows = 10;
    long long samples = 0;        // recorded intervals per trace, 0 = scenario default
    int k = 5;
    double alpha = 0.05;          // cross-VM attenuation
    double noise_rel = 0.02;
    bool ambient = true;
    bool counters_enabled = true;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t effective_window() const;
    long long effective_samples() const;
    int class_count() const;
    std::string class_name(int c) const;
};

struct LabeledTrace {
    int label = 0;
    int index = 0;                // trace number within its class
    Trace raw;
};

/// Simulates one trace; deterministic in (cfg, label, index).
Trace record_trace(const FingerprintConfig& cfg, int label, int index);
std::vector<LabeledTrace> collect_traces(const FingerprintConfig& cfg);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
/// Stratified per-class shuffle; `fraction` of each class goes to training.
Split stratified_split(const std::vector<LabeledTrace>& traces, double fraction, std::uint64_t seed);

/// Feature rows of one trace: differenced series, at most `max_windows` evenly spread windows.
Matrix trace_features(const Trace& raw, std::size_t window, int max_windows);

struct FingerprintReport {
    std::string scenario;
    std::string profile;
    std::string leakage;
    int gpus = 2;
    std::size_t window = 0;
    double rate_hz = 0;           // 0 = native
    int classes = 0;
    std::size_t train_traces = 0;
    std::size_t test_traces = 0;
    std::size_t train_rows = 0;
    ClassMetrics m;
    std::vector<std::string> class_names;

    std::string to_json() const;
};

struct EvalOptions {
    std::size_t window = 0;
    int max_windows = 10;
    double rate_hz = 0;           // downsample before feature extraction when > 0
    int k = 5;
};

/// Feature rows of one trace under `opt` (downsampled first when rate_hz > 0); opt.window must be set.
Matrix fingerprint_rows(const Trace& raw, const EvalOptions& opt);

/// Scaled KNN over window rows; a trace is labelled by majority vote of its rows
/// (ties to the lowest label).
class TraceClassifier {
public:
    static TraceClassifier fit(const Matrix& x, std::vector<int> labels, int k = 5);
    int classify(const Matrix& rows) const;
    std::size_t rows() const { return knn_.points().size(); }

private:
    Scaler scaler_;
    KnnClassifier knn_;
};

/// Train on the split's training traces, majority-vote each test trace's windows.
FingerprintReport evaluate_traces(const FingerprintConfig& cfg, const std::vector<LabeledTrace>& traces,
                                  const Split& split, const EvalOptions& opt);
FingerprintReport fingerprint_experiment(const FingerprintConfig& cfg);

struct SweepPoint {
    double x = 0;                 // window size or sampling rate
    FingerprintReport report;
};
std::vector<SweepPoint> window_sweep(const FingerprintConfig& cfg, const std::vector<std::size_t>& windows);
std::vector<SweepPoint> mitigation_sweep(const FingerprintConfig& cfg, const std::vector<double>& rates_hz);

}  // namespace nvbleed

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "teletrace/dataset.hpp"
#include "teletrace/features.hpp"

namespace teletrace {

/// floor(N_s / (alpha * (N_i + N_o))), clamped to at least one neuron.
int hidden_layer_size(size_t n_train_samples, double alpha, int n_inputs, int n_outputs);

struct ModelConfig {
    int n_inputs = 16;
    int n_outputs = 7;
    double alpha = 2.0;
    size_t n_train_samples = 0;
    int hidden_size = 0;        // 0: compute from the formula above
    double learning_rate = 0.00001;
    int batch_size = 32;
    int epochs = 300;
    int patience = 30;          // epochs without validation improvement; 0 = off
    uint64_t seed = 0;
};

/// Single-hidden-layer MLP (ReLU hidden, softmax output) with its input
/// pipeline attached: the feature columns it consumes, the fitted scaler and
/// the class vocabulary. Parameters live in one flat vector; W1/b1/W2/b2 are
/// ranges within it (row-major, W1 is hidden x inputs, W2 outputs x hidden).
struct MlpModel {
    ModelConfig config;
    int n_in = 0, n_hidden = 0, n_out = 0;
    std::vector<double> params;

    std::vector<std::string> columns;
    std::vector<std::string> classes;
    ScalerParams scaler;

    size_t w1_off() const { return 0; }
    size_t b1_off() const { return static_cast<size_t>(n_hidden) * n_in; }
    size_t w2_off() const { return b1_off() + n_hidden; }
    size_t b2_off() const { return w2_off() + static_cast<size_t>(n_out) * n_hidden; }
    size_t param_count() const { return b2_off() + n_out; }
};

/// Builds a model with seeded uniform(+-sqrt(6/(fan_in+fan_out))) weights and
/// zero biases. hidden_size 0 falls back to the formula on n_train_samples.
MlpModel make_model(const ModelConfig& config);

/// Softmax class probabilities for one input row (length n_in).
std::vector<double> forward(const MlpModel& model, const double* x);

/// Weighted categorical cross-entropy, probabilities clamped at 1e-12.
double loss(const std::vector<double>& probabilities, int true_class, double class_weight);

/// Exact gradients of the mean weighted loss over the given rows, laid out
/// like model.params. `row_weights` holds one class weight per matrix class.
std::vector<double> backward(const MlpModel& model, const FeatureMatrix& scaled,
                             const std::vector<size_t>& rows,
                             const std::vector<double>& class_weight_by_index);

struct AdamState {
    std::vector<double> m, v;
    uint64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads, double lr);

struct EpochStats {
    double train_loss = 0, train_accuracy = 0;
    double val_loss = 0, val_accuracy = 0;
};

struct TrainResult {
    MlpModel model; // best-validation-accuracy snapshot
    std::vector<EpochStats> curve;
    int best_epoch = 0;
};

/// Seeded mini-batch training; inputs must already be cleaned, scaled and
/// split. Deterministic under the single-threaded contract.
TrainResult train(const ModelConfig& config, const FeatureMatrix& train_scaled,
                  const FeatureMatrix& val_scaled, const ClassWeights& weights);

/// Per-row argmax labels (indices into matrix.class_names space == model classes).
std::vector<int> predict(const MlpModel& model, const FeatureMatrix& scaled);

/// Majority vote over the given rows of one flow; ties break on summed
/// probability, then lowest class index. Throws on empty input.
int predict_flow(const MlpModel& model, const FeatureMatrix& scaled,
                 const std::vector<size_t>& rows);

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    uint64_t support = 0;
};

struct MetricsBlock {
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;
    std::vector<uint64_t> confusion; // row-major, true x predicted
    double macro_precision() const;  // over classes with support
    double macro_recall() const;
};

struct EvalReport {
    std::vector<std::string> classes;
    MetricsBlock rows;
    MetricsBlock flows; // majority-vote per flow
};

/// Precision/recall/accuracy/confusion at packet level and per-flow
/// (majority vote) level.
EvalReport evaluate(const MlpModel& model, const FeatureMatrix& scaled);

/// Applies the model's attached pipeline (column selection + scaler) to a raw
/// feature matrix and evaluates/predicts on it.
FeatureMatrix apply_pipeline(const MlpModel& model, const FeatureMatrix& raw);
EvalReport evaluate_raw(const MlpModel& model, const FeatureMatrix& raw);

/// Model serialization: one JSON document with config, pipeline and weights.
void save_model(const MlpModel& model, std::ostream& out);
MlpModel load_model(std::istream& in);

} // namespace teletrace

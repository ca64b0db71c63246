#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace enose::mlp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Hidden widths of the window classifiers: one layer of 100 followed by six
// of 30, for eight weight layers in total.
inline constexpr int kFirstHidden = 100;
inline constexpr int kNarrowHidden = 30;
inline constexpr int kNarrowLayers = 6;

// Dense network shape. Hidden layers use ReLU, the output layer softmax.
struct MlpArchitecture {
    std::vector<int> layer_sizes; // input, hidden..., outputs

    int inputs() const { return layer_sizes.front(); }
    int outputs() const { return layer_sizes.back(); }
    int weight_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
};

// Input width n_sensors * t * delta, then 100, 30 x 6, n_classes.
// Throws ConfigError unless t, delta, n_sensors >= 1 and n_classes >= 2.
MlpArchitecture build_architecture(int t, int delta, int n_sensors, int n_classes);

// Trainable parameters of each weight layer: in * out + out.
std::vector<long long> layer_param_counts(const MlpArchitecture& a);
long long param_count(const MlpArchitecture& a);

// Min-max scaling to [0, 1] from training extrema. Constant inputs map to 0
// and held-out values outside the training range are not clipped.
struct ScalingParams {
    Vector min;
    Vector range; // max - min; 0 marks a constant input

    Matrix apply(const Matrix& X) const;
    Vector apply(const Eigen::Ref<const Vector>& x) const;
    Vector apply(const Vector& x) const { return apply(Eigen::Ref<const Vector>(x)); }
};
ScalingParams scale_fit(const Matrix& X);

struct DenseLayer {
    Matrix weights; // out x in
    Vector bias;
};

struct MlpModel {
    MlpArchitecture architecture;
    std::vector<DenseLayer> layers;
    ScalingParams scaling; // empty means inputs are used unscaled

    // Raw logits of the last layer for already-scaled inputs (columns).
    Matrix logits(const Matrix& scaled_columns) const;
};

// All weights and biases zero, identity scaling.
MlpModel zero_model(const MlpArchitecture& a);

// He-style uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
MlpModel init_model(const MlpArchitecture& a, std::uint64_t seed);

// Class probabilities for one raw input (scaling applied first).
// Throws InputError on a dimension mismatch.
Vector forward(const MlpModel& model, const Eigen::Ref<const Vector>& x);
int predict(const MlpModel& model, const Eigen::Ref<const Vector>& x);

struct TrainConfig {
    std::uint64_t seed = 0;
    double learning_rate = 0.01;
    int batch_size = 16;
    int epochs = 300;
    // Early stopping on a held-out slice of the training rows. Disabled when
    // patience is unset.
    std::optional<int> patience;
    double holdout_fraction = 0.1;
};

struct TrainStats {
    int epochs_run = 0;
    long long updates = 0;
    double initial_loss = 0.0;      // mean training loss before any update
    std::vector<double> epoch_loss; // mean training loss after each epoch
};

// Fits min-max scaling on X (rows are samples), then minimizes mean
// cross-entropy by mini-batch SGD with per-epoch seeded shuffling. Labels are
// class indices in [0, outputs). Throws ConfigError on a bad config,
// InputError on shape mismatches and DivergenceError if the loss becomes
// non-finite.
MlpModel train(const MlpArchitecture& architecture, const Matrix& X, std::span<const int> y,
               const TrainConfig& config, TrainStats* stats = nullptr);

// Mean cross-entropy of scaled inputs (columns) against labels.
double loss(const MlpModel& model, const Matrix& scaled_columns, std::span<const int> y);

// Analytic gradients of the single-sample loss, layer by layer.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;
};
Gradients backprop(const MlpModel& model, const Eigen::Ref<const Vector>& scaled_x, int label);

// Largest relative difference between backprop and central finite
// differences over every parameter of a seeded random network, with
// |a - n| / max(|a| + |n|, 1e-6) as the per-parameter error.
double gradient_check(const MlpArchitecture& architecture, const Eigen::Ref<const Vector>& x,
                      int label, double epsilon, std::uint64_t seed = 1);
double gradient_check(const MlpModel& model, const Eigen::Ref<const Vector>& x, int label,
                      double epsilon);

nlohmann::json to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& j);

} // namespace enose::mlp

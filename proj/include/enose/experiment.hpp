#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "enose/dataset.hpp"
#include "enose/eval.hpp"
#include "enose/labels.hpp"
#include "enose/mlp.hpp"
#include "enose/windows.hpp"

namespace enose::experiment {

enum class Pipeline { Conventional, Rapid };
std::string_view to_string(Pipeline p);
Pipeline parse_pipeline(std::string_view text);

struct SvmParams {
    double C = 10.0;
    // Kernel scale s with gamma = 1 / s^2. Unset picks 8.3 (3-class) or 19
    // (4-class). An explicit gamma wins over the scale.
    std::optional<double> kernel_scale;
    std::optional<double> gamma;
};

struct SelectionParams {
    bool enabled = true;
    int folds = 5;
    int step = 1;
};

struct ExperimentConfig {
    Experiment experiment = Experiment::ThreeClass;
    Pipeline pipeline = Pipeline::Conventional;
    int repetitions = 1;
    std::uint64_t seed = 0;
    unsigned workers = 1; // never affects results

    SvmParams svm;
    SelectionParams selection;

    windows::WindowPlan plan;
    mlp::TrainConfig mlp;
    std::optional<int> window;       // rapid(t); unset runs a sweep and picks the earliest
    std::vector<int> sweep_windows;  // empty means all
    double epsilon = 0.01;
    windows::Protocol protocol = windows::Protocol::LeaveOneBottleOut;
    int folds = 5;                   // grouped k-fold protocol only
};

double resolved_gamma(const ExperimentConfig& cfg);

// Canonical JSON of every result-affecting field (workers excluded).
nlohmann::json to_json(const ExperimentConfig& cfg);
// Overlays the keys present in j onto base. Throws ConfigError on unknown
// keys or bad values.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
void validate_config(const ExperimentConfig& cfg);

struct RunReport {
    std::string experiment;  // "exp1" / "exp2"
    std::string pipeline;    // "conventional" / "rapid"
    int repetitions = 0;
    std::uint64_t seed = 0;
    std::optional<int> window;
    double recognition_seconds = 0.0;
    std::string preprocessing;
    bool online = false;
    int input_size = 0;
    std::vector<int> selected_sizes; // conventional, per repetition
    std::vector<double> train_accuracy;
    std::vector<double> validation_accuracy;
    eval::Summary train;
    eval::Summary validation;
    std::string fold_grouping;
    std::string fold_note;
    std::string config_digest;
    std::optional<windows::WindowSweepResult> sweep;

    // Metadata: wall-clock medians over repetitions.
    double train_seconds = 0.0;
    double inference_seconds = 0.0;
};

// Restricts the dataset to the experiment's classes, then runs every
// repetition of the chosen pipeline. Conventional: fingerprints, RFECV with
// grouped folds reseeded per repetition, then a one-vs-one gaussian SVM under
// leave-one-bottle-out with the training rows reshuffled per repetition.
// Rapid: window MLPs over the fold protocol, at a fixed window or at the
// earliest window within epsilon of the best sweep accuracy. Errors are
// rethrown with repetition context.
RunReport run_experiment(const dataset::Dataset& ds, const ExperimentConfig& cfg);

// Everything except "metadata" is deterministic for a given seed.
nlohmann::json to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

// Aligned text table: approach, accuracy, recognition time, preprocessing,
// online, input size, training and validation time.
std::string format_table(std::span<const RunReport> reports);

struct Comparison {
    eval::StatTestResult test;
    std::string experiment;
};

// U test on the validation accuracies of two reports. Throws ProtocolError
// when the experiment tags differ.
Comparison compare_reports(const RunReport& a, const RunReport& b,
                           eval::Alternative alternative = eval::Alternative::TwoSided);
std::string format_comparison(const RunReport& a, const RunReport& b, const Comparison& c);

} // namespace enose::experiment

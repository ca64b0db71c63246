#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "enose/dataset.hpp"
#include "enose/eval.hpp"
#include "enose/labels.hpp"
#include "enose/mlp.hpp"

namespace enose::windows {

// Rising windows over [start_index, end_index): window t covers the first
// t * delta samples of that interval on every sensor.
struct WindowPlan {
    int start_index = 150;
    int end_index = 3300;
    int delta = 50;

    int count() const { return (end_index - start_index) / delta; }
    int length(int t) const { return t * delta; }
};

// Throws ConfigError unless delta >= 1 and the interval holds one window.
void validate_plan(const WindowPlan& plan);

// Sensor-major concatenation of samples [start, start + t*delta) from each
// trace, ordered by sensor index. Throws BoundsError if t is outside
// [1, count] or the measurement is too short.
std::vector<double> slice_window(const dataset::Measurement& m, const WindowPlan& plan, int t);

// Seconds of signal that window t spans.
double window_to_seconds(int t, int delta, double rate_hz);

// Seconds the conventional pipeline waits for: every sample after the
// baseline, [start_index, n_points).
double full_signal_seconds(int n_points, int start_index, double rate_hz);

// Window t together with the model trained for it.
struct WindowClassifier {
    WindowPlan plan;
    int t = 1;
    mlp::MlpModel model;
    std::vector<ClassLabel> classes; // output index -> label

    ClassLabel predict(std::span<const double> flat_window) const;
    ClassLabel predict(const dataset::Measurement& m) const;
};

// Class roster of an experiment: HQ, AQ, LQ and (for exp2) Ea.
std::vector<ClassLabel> roster_for(Experiment experiment);

// Trains a window-t classifier on the given rows of the dataset.
WindowClassifier train_window(const dataset::Dataset& ds, std::span<const std::size_t> rows,
                              const WindowPlan& plan, int t, std::span<const ClassLabel> classes,
                              const mlp::TrainConfig& cfg);

enum class Protocol { LeaveOneBottleOut, GroupedKFold };

struct SweepOptions {
    Protocol protocol = Protocol::LeaveOneBottleOut;
    int folds = 5;              // grouped k-fold only
    int repetitions = 1;
    std::uint64_t seed = 0;
    std::vector<int> windows;   // empty means every window 1..count
    unsigned workers = 1;
};

struct WindowStats {
    int t = 0;
    double seconds = 0.0;
    eval::Summary train;
    eval::Summary validation;
    int best_count = 0;       // repetitions where this window had top validation accuracy
    int best_train_count = 0; // same for training accuracy
};

struct WindowSweepResult {
    WindowPlan plan;
    int repetitions = 0;
    std::vector<WindowStats> windows; // ascending t
    // [repetition][window position] accuracies, kept for reports and tests.
    std::vector<std::vector<double>> train_accuracy;
    std::vector<std::vector<double>> validation_accuracy;
    // Wall-clock per fold fit and per validation prediction, averaged over
    // folds. Not part of the JSON/CSV exports.
    std::vector<std::vector<double>> train_seconds;
    std::vector<std::vector<double>> inference_seconds;
};

// For every repetition, builds the fold plan (bottle LOO, or grouped k-fold
// reseeded per repetition), trains a fresh window model per fold with
// scaling fit on that fold's training rows, and pools validation
// predictions. Errors are rethrown with the window index attached.
WindowSweepResult sweep(const dataset::Dataset& ds, const WindowPlan& plan,
                        const mlp::TrainConfig& train_cfg, const SweepOptions& options);

// Smallest evaluated t whose mean validation accuracy is within epsilon of
// the best window.
int select_earliest(const WindowSweepResult& result, double epsilon);

nlohmann::json to_json(const WindowSweepResult& result);
std::string format_sweep_csv(const WindowSweepResult& result);

// Streaming front end for a trained window classifier. Frames start at the
// plan's start_index sample; the label is emitted exactly once, on the
// frame that completes t * delta samples per sensor.
class OnlineSession {
public:
    explicit OnlineSession(WindowClassifier classifier);

    // Throws InputError unless the frame has one finite value per sensor.
    // Frames after the emission are ignored and return nullopt.
    std::optional<ClassLabel> feed(std::span<const double> sensor_frame);

    int frames_seen() const { return frames_; }
    int frames_needed() const { return classifier_.plan.length(classifier_.t); }
    const std::optional<ClassLabel>& emitted() const { return emitted_; }

private:
    WindowClassifier classifier_;
    std::vector<std::vector<double>> buffers_; // per sensor
    int frames_ = 0;
    std::optional<ClassLabel> emitted_;
};

} // namespace enose::windows

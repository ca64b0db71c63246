#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "enose/dataset.hpp"
#include "enose/labels.hpp"

namespace enose::features {

// Index range [begin, end) into a trace.
struct Segment {
    int begin = 0;
    int end = 0;
};

// Per-trace view handed to each feature: samples plus segment boundaries
// taken from the measurement metadata.
struct TraceContext {
    std::span<const double> samples;
    double sample_rate_hz = dataset::kSampleRateHz;
    Segment baseline;   // [0, injection)
    Segment absorption; // [injection, desorption onset)
    Segment desorption; // [onset, end)
};

TraceContext make_context(const dataset::Measurement& m, int sensor_position);

// max - min over the whole trace.
double delta_g(std::span<const double> g);

// (max - min) / min. Conductance is positive, so min > 0.
double delta_g_norm(std::span<const double> g);

// Trapezoidal integral of g over [begin, end) with spacing 1/rate seconds.
// Throws BoundsError on an empty or out-of-range segment.
double auc(std::span<const double> g, Segment segment, double sample_rate_hz);

// y[0] = 0; y[k] = (1 - alpha) y[k-1] + alpha (x[k] - x[k-1]).
// Throws InputError unless 0 < alpha < 1 and the trace has >= 2 samples.
std::vector<double> ema_transform(std::span<const double> x, double alpha);

struct EmaExtrema {
    double rising_max;
    double falling_min;
};

// Extremes of the filtered trace: max over the rising segment, min over the
// falling segment.
EmaExtrema ema_extrema(std::span<const double> x, double alpha, Segment rising,
                       Segment falling);

struct FeatureDescriptor {
    std::string name;
    std::function<double(const TraceContext&)> compute;
};

// The 23 per-sensor descriptors, in fingerprint order:
//   delta_g, delta_g_norm, auc_absorption, auc_desorption,
//   ema_max/ema_min for alpha 0.1, 0.01, 0.001,
//   baseline_mean, final_value, maximum, minimum, mean, std,
//   max_diff, min_diff, rise_time_90, fall_time_10,
//   slope_absorption, slope_desorption, auc_total.
//
// Time-valued features are in seconds; slopes are least-squares fits in
// conductance units per second; std uses the n-1 divisor; max_diff and
// min_diff are raw sample-to-sample differences. rise_time_90 is measured
// from injection to the first absorption sample at or above
// min + 0.9 * delta_g; fall_time_10 from desorption onset to the first
// sample at or below min + 0.1 * delta_g. When the level is never reached
// the segment duration is reported.
const std::vector<FeatureDescriptor>& default_catalog();

inline constexpr int kFeaturesPerSensor = 23;
inline constexpr int kFingerprintSize = kFeaturesPerSensor * dataset::kSensorCount;

struct FeatureVector {
    std::vector<double> values;
    std::vector<std::string> names;
    std::string measurement_id;
    std::string bottle_id;
    ClassLabel label = ClassLabel::HQ;
};

// "<feature>_s<sensor>" in sensor-major order.
std::vector<std::string> fingerprint_names(const std::vector<FeatureDescriptor>& catalog);

// Sensor-major fingerprint (sensor 1 features, then sensor 2, ...). Throws
// ConfigError if the catalog is not 23 long, and NumericalError naming the
// feature and sensor if any value is non-finite.
FeatureVector extract_fingerprint(const dataset::Measurement& m,
                                  const std::vector<FeatureDescriptor>& catalog);

FeatureVector extract_fingerprint(const dataset::Measurement& m);

// Fingerprint matrix with label and bottle columns.
struct FingerprintTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    std::vector<ClassLabel> labels;
    std::vector<std::string> bottles;
};

FingerprintTable extract_all(const dataset::Dataset& ds, unsigned workers = 1);

// Header: feature names, then "label,bottle_id".
std::string format_fingerprint_csv(const FingerprintTable& table);
FingerprintTable parse_fingerprint_csv(const std::string& text, const std::string& source);

} // namespace enose::features

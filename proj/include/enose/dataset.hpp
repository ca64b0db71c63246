#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "enose/labels.hpp"

namespace enose::dataset {

inline constexpr int kSensorCount = 6;
inline constexpr double kSampleRateHz = 18.5;
inline constexpr int kCanonicalPoints = 3330;
// Gas reaches the sensor chamber 10 s into acquisition.
inline constexpr int kCanonicalInjection = 185;
inline constexpr double kAbsorptionSeconds = 80.0;
inline constexpr double kDesorptionSeconds = 90.0;

struct SensorTrace {
    int sensor_index = 1; // 1..6
    std::vector<double> samples;
    double sample_rate_hz = kSampleRateHz;
};

struct Measurement {
    std::string id;
    std::string bottle_id; // batch key for ethanol runs
    ClassLabel label = ClassLabel::HQ;
    std::vector<SensorTrace> traces;
    int n_points = kCanonicalPoints;
    int injection_index = kCanonicalInjection;
    // Sample index where gas flow stops. Unset means injection + 80 s.
    std::optional<int> desorption_index;

    double sample_rate_hz() const;
    int desorption_onset() const;
};

struct Provenance {
    enum class Kind { Real, Synthetic };
    Kind kind = Kind::Real;
    std::optional<std::uint64_t> seed;
};

struct Manifest {
    double sample_rate_hz = kSampleRateHz;
    int n_points = kCanonicalPoints;
    std::map<ClassLabel, int> class_counts;
    std::map<std::string, ClassLabel> bottles;
    Provenance provenance;
    // Volatile acidity ranges (g/l) per class, carried as documentation.
    std::map<ClassLabel, std::pair<double, double>> va_g_per_l;
};

struct Dataset {
    std::vector<Measurement> measurements;
    Manifest manifest;
};

// Volatile-acidity ranges measured for the three wine classes.
std::map<ClassLabel, std::pair<double, double>> default_va_ranges();

// Builds class counts and bottle roster from the measurements. Throws
// IntegrityError if one bottle carries two labels.
Manifest summarize(const std::vector<Measurement>& measurements,
                   double sample_rate_hz, int n_points);

// Empty result means the measurement is well formed. Each entry names the
// offending field and rule, e.g. "trace 3: length 3329 != 3330".
std::vector<std::string> validate_measurement(const Measurement& m);

// Slices every trace to [start, end) and rebases the segment indices.
// Throws BoundsError unless 0 <= start < end <= n_points.
Measurement trim_to_interval(const Measurement& m, int start, int end);

// Keeps only the measurements whose label satisfies the experiment.
Dataset restrict_to(const Dataset& ds, Experiment experiment);

// Directory layout: manifest.json plus one <id>.csv per measurement.
Dataset load_dataset(const std::string& root);
void write_dataset(const Dataset& ds, const std::string& root);

// CSV body for one measurement: header "t,s1,...,s6", one row per sample.
std::string format_trace_csv(const Measurement& m);

// Generator for synthetic acquisitions ------------------------------------

struct Range {
    double low = 0.0;
    double high = 0.0;
    double mid() const { return 0.5 * (low + high); }
    double half_width() const { return 0.5 * (high - low); }
};

struct SensorArchetype {
    Range amplitude;     // conductance units above baseline at saturation
    Range tau_absorb_s;  // rise time constant
    Range tau_desorb_s;  // decay time constant
};

struct ClassArchetype {
    std::vector<SensorArchetype> sensors; // kSensorCount entries
};

struct GeneratorConfig {
    std::uint64_t seed = 7;
    std::map<ClassLabel, ClassArchetype> archetypes;
    std::vector<double> baseline; // per sensor, conductance units
    double drift_per_s = 0.0;     // relative baseline drift
    double noise_std = 0.0;       // relative to baseline
    // Per-bottle draw inside each archetype range, as a fraction of the
    // half width (0 pins every bottle to the range midpoint).
    double bottle_jitter = 0.0;
    // Relative gaussian spread of each measurement around its bottle.
    double measurement_jitter = 0.0;
    std::map<ClassLabel, int> counts;
    std::map<ClassLabel, int> bottles;
    int n_points = kCanonicalPoints;
    double sample_rate_hz = kSampleRateHz;
    int injection_index = kCanonicalInjection;
    double absorption_s = kAbsorptionSeconds;
};

// Separable four-class setup with the collected class sizes
// (51 HQ, 43 AQ, 141 LQ, 65 Ea over 5/4/13 bottles and 6 ethanol batches).
GeneratorConfig default_generator_config();

// Throws ConfigError describing the first broken rule.
void validate_config(const GeneratorConfig& config);

// Noise-free response of one sensor with the given parameters at sample k:
// baseline*(1 + drift*t) plus a saturating rise after injection and an
// exponential decay after gas flow stops.
double archetype_response(double baseline, double drift_per_s, double amplitude,
                          double tau_absorb_s, double tau_desorb_s,
                          int injection_index, int desorption_index,
                          double sample_rate_hz, int k);

// Pure function of the config: same config, same dataset.
Dataset generate_synthetic(const GeneratorConfig& config);

} // namespace enose::dataset

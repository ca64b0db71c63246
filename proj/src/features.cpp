#include "enose/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "enose/error.hpp"
#include "enose/parallel.hpp"
#include "enose/text.hpp"

namespace enose::features {

namespace {

void check_segment(Segment s, std::size_t n, const char* what) {
    if (s.begin < 0 || s.begin > s.end || static_cast<std::size_t>(s.end) > n) {
        throw BoundsError(std::string(what) + ": segment [" + std::to_string(s.begin) + ", " +
                          std::to_string(s.end) + ") outside trace of " + std::to_string(n));
    }
}

std::span<const double> slice(std::span<const double> g, Segment s) {
    return g.subspan(static_cast<std::size_t>(s.begin), static_cast<std::size_t>(s.end - s.begin));
}

double mean_of(std::span<const double> g) {
    if (g.empty()) return 0.0;
    return std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
}

// Least-squares slope of g against time in seconds.
double slope_of(std::span<const double> g, double rate) {
    const std::size_t n = g.size();
    if (n < 2) return 0.0;
    const double t_mean = (static_cast<double>(n) - 1.0) / 2.0;
    const double g_mean = mean_of(g);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dt = static_cast<double>(k) - t_mean;
        sxy += dt * (g[k] - g_mean);
        sxx += dt * dt;
    }
    return sxy / sxx * rate;
}

double ema_max(const TraceContext& c, double alpha) {
    return ema_extrema(c.samples, alpha, c.absorption, c.desorption).rising_max;
}

double ema_min(const TraceContext& c, double alpha) {
    return ema_extrema(c.samples, alpha, c.absorption, c.desorption).falling_min;
}

double rise_time_90(const TraceContext& c) {
    const auto [lo, hi] = std::minmax_element(c.samples.begin(), c.samples.end());
    const double level = *lo + 0.9 * (*hi - *lo);
    for (int k = c.absorption.begin; k < c.absorption.end; ++k) {
        if (c.samples[static_cast<std::size_t>(k)] >= level) {
            return (k - c.absorption.begin) / c.sample_rate_hz;
        }
    }
    return (c.absorption.end - c.absorption.begin) / c.sample_rate_hz;
}

double fall_time_10(const TraceContext& c) {
    const auto [lo, hi] = std::minmax_element(c.samples.begin(), c.samples.end());
    const double level = *lo + 0.1 * (*hi - *lo);
    for (int k = c.desorption.begin; k < c.desorption.end; ++k) {
        if (c.samples[static_cast<std::size_t>(k)] <= level) {
            return (k - c.desorption.begin) / c.sample_rate_hz;
        }
    }
    return (c.desorption.end - c.desorption.begin) / c.sample_rate_hz;
}

std::vector<FeatureDescriptor> build_catalog() {
    std::vector<FeatureDescriptor> cat;
    cat.push_back({"delta_g", [](const TraceContext& c) { return delta_g(c.samples); }});
    cat.push_back({"delta_g_norm", [](const TraceContext& c) { return delta_g_norm(c.samples); }});
    cat.push_back({"auc_absorption", [](const TraceContext& c) {
                       return auc(c.samples, c.absorption, c.sample_rate_hz);
                   }});
    cat.push_back({"auc_desorption", [](const TraceContext& c) {
                       return auc(c.samples, c.desorption, c.sample_rate_hz);
                   }});
    for (const auto& [tag, alpha] :
         std::vector<std::pair<std::string, double>>{{"0.1", 0.1}, {"0.01", 0.01}, {"0.001", 0.001}}) {
        const double a = alpha;
        cat.push_back({"ema_max_" + tag, [a](const TraceContext& c) { return ema_max(c, a); }});
        cat.push_back({"ema_min_" + tag, [a](const TraceContext& c) { return ema_min(c, a); }});
    }
    cat.push_back({"baseline_mean", [](const TraceContext& c) {
                       return c.baseline.end > c.baseline.begin ? mean_of(slice(c.samples, c.baseline))
                                                                : c.samples.front();
                   }});
    cat.push_back({"final_value", [](const TraceContext& c) { return c.samples.back(); }});
    cat.push_back({"maximum", [](const TraceContext& c) {
                       return *std::max_element(c.samples.begin(), c.samples.end());
                   }});
    cat.push_back({"minimum", [](const TraceContext& c) {
                       return *std::min_element(c.samples.begin(), c.samples.end());
                   }});
    cat.push_back({"mean", [](const TraceContext& c) { return mean_of(c.samples); }});
    cat.push_back({"std", [](const TraceContext& c) {
                       const std::size_t n = c.samples.size();
                       if (n < 2) return 0.0;
                       const double m = mean_of(c.samples);
                       double ss = 0.0;
                       for (double g : c.samples) ss += (g - m) * (g - m);
                       return std::sqrt(ss / static_cast<double>(n - 1));
                   }});
    cat.push_back({"max_diff", [](const TraceContext& c) {
                       double best = 0.0;
                       for (std::size_t k = 1; k < c.samples.size(); ++k) {
                           const double d = c.samples[k] - c.samples[k - 1];
                           best = k == 1 ? d : std::max(best, d);
                       }
                       return best;
                   }});
    cat.push_back({"min_diff", [](const TraceContext& c) {
                       double best = 0.0;
                       for (std::size_t k = 1; k < c.samples.size(); ++k) {
                           const double d = c.samples[k] - c.samples[k - 1];
                           best = k == 1 ? d : std::min(best, d);
                       }
                       return best;
                   }});
    cat.push_back({"rise_time_90", rise_time_90});
    cat.push_back({"fall_time_10", fall_time_10});
    cat.push_back({"slope_absorption", [](const TraceContext& c) {
                       return slope_of(slice(c.samples, c.absorption), c.sample_rate_hz);
                   }});
    cat.push_back({"slope_desorption", [](const TraceContext& c) {
                       return slope_of(slice(c.samples, c.desorption), c.sample_rate_hz);
                   }});
    cat.push_back({"auc_total", [](const TraceContext& c) {
                       return auc(c.samples, {0, static_cast<int>(c.samples.size())},
                                  c.sample_rate_hz);
                   }});
    return cat;
}

} // namespace

TraceContext make_context(const dataset::Measurement& m, int sensor_position) {
    const dataset::SensorTrace& tr = m.traces.at(static_cast<std::size_t>(sensor_position));
    const int n = static_cast<int>(tr.samples.size());
    const int inj = std::clamp(m.injection_index, 0, n);
    const int onset = std::clamp(m.desorption_onset(), inj, n);
    TraceContext c;
    c.samples = tr.samples;
    c.sample_rate_hz = tr.sample_rate_hz;
    c.baseline = {0, inj};
    c.absorption = {inj, onset};
    c.desorption = {onset, n};
    return c;
}

double delta_g(std::span<const double> g) {
    if (g.empty()) throw InputError("delta_g: empty trace");
    const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
    return *hi - *lo;
}

double delta_g_norm(std::span<const double> g) {
    if (g.empty()) throw InputError("delta_g_norm: empty trace");
    const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
    return (*hi - *lo) / *lo;
}

double auc(std::span<const double> g, Segment segment, double sample_rate_hz) {
    check_segment(segment, g.size(), "auc");
    double area = 0.0;
    for (int k = segment.begin + 1; k < segment.end; ++k) {
        area += 0.5 * (g[static_cast<std::size_t>(k - 1)] + g[static_cast<std::size_t>(k)]);
    }
    return area / sample_rate_hz;
}

std::vector<double> ema_transform(std::span<const double> x, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("ema alpha must lie in (0, 1)");
    if (x.size() < 2) throw InputError("ema_transform needs at least 2 samples");
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t k = 1; k < x.size(); ++k) {
        y[k] = (1.0 - alpha) * y[k - 1] + alpha * (x[k] - x[k - 1]);
    }
    return y;
}

EmaExtrema ema_extrema(std::span<const double> x, double alpha, Segment rising, Segment falling) {
    check_segment(rising, x.size(), "ema rising");
    check_segment(falling, x.size(), "ema falling");
    const std::vector<double> y = ema_transform(x, alpha);
    EmaExtrema out{0.0, 0.0};
    if (rising.end > rising.begin) {
        out.rising_max = *std::max_element(y.begin() + rising.begin, y.begin() + rising.end);
    }
    if (falling.end > falling.begin) {
        out.falling_min = *std::min_element(y.begin() + falling.begin, y.begin() + falling.end);
    }
    return out;
}

const std::vector<FeatureDescriptor>& default_catalog() {
    static const std::vector<FeatureDescriptor> catalog = build_catalog();
    return catalog;
}

std::vector<std::string> fingerprint_names(const std::vector<FeatureDescriptor>& catalog) {
    std::vector<std::string> names;
    names.reserve(catalog.size() * dataset::kSensorCount);
    for (int s = 1; s <= dataset::kSensorCount; ++s) {
        for (const FeatureDescriptor& f : catalog) names.push_back(f.name + "_s" + std::to_string(s));
    }
    return names;
}

FeatureVector extract_fingerprint(const dataset::Measurement& m,
                                  const std::vector<FeatureDescriptor>& catalog) {
    if (catalog.size() != static_cast<std::size_t>(kFeaturesPerSensor)) {
        throw ConfigError("feature catalog must have 23 entries, has " +
                          std::to_string(catalog.size()));
    }
    if (m.traces.size() != static_cast<std::size_t>(dataset::kSensorCount)) {
        throw InputError("measurement " + m.id + ": expected 6 traces");
    }
    // Sensor-major order follows sensor_index, not storage order.
    std::vector<int> order(m.traces.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return m.traces[static_cast<std::size_t>(a)].sensor_index <
               m.traces[static_cast<std::size_t>(b)].sensor_index;
    });

    FeatureVector fv;
    fv.measurement_id = m.id;
    fv.bottle_id = m.bottle_id;
    fv.label = m.label;
    fv.names = fingerprint_names(catalog);
    fv.values.reserve(fv.names.size());
    for (int pos : order) {
        const TraceContext ctx = make_context(m, pos);
        for (const FeatureDescriptor& f : catalog) {
            const double v = f.compute(ctx);
            if (!std::isfinite(v)) {
                throw NumericalError("measurement " + m.id + ": feature " + f.name + " on sensor " +
                                     std::to_string(m.traces[static_cast<std::size_t>(pos)].sensor_index) +
                                     " is not finite");
            }
            fv.values.push_back(v);
        }
    }
    return fv;
}

FeatureVector extract_fingerprint(const dataset::Measurement& m) {
    return extract_fingerprint(m, default_catalog());
}

FingerprintTable extract_all(const dataset::Dataset& ds, unsigned workers) {
    if (ds.measurements.empty()) throw InputError("dataset has no measurements");
    FingerprintTable t;
    t.names = fingerprint_names(default_catalog());
    const std::size_t n = ds.measurements.size();
    t.rows.resize(n);
    t.labels.resize(n);
    t.bottles.resize(n);
    parallel_for(n, workers, [&](std::size_t i) {
        FeatureVector fv = extract_fingerprint(ds.measurements[i]);
        t.rows[i] = std::move(fv.values);
        t.labels[i] = fv.label;
        t.bottles[i] = fv.bottle_id;
    });
    return t;
}

std::string format_fingerprint_csv(const FingerprintTable& table) {
    std::string out;
    for (const std::string& name : table.names) {
        out += name;
        out += ',';
    }
    out += "label,bottle_id\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (double v : table.rows[i]) {
            out += format_double(v);
            out += ',';
        }
        out += to_string(table.labels[i]);
        out += ',';
        out += table.bottles[i];
        out += '\n';
    }
    return out;
}

FingerprintTable parse_fingerprint_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    FingerprintTable t;
    int line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        const std::string where = source + ":" + std::to_string(line_no);
        if (width == 0) {
            width = fields.size();
            if (width < 3 || fields[width - 2] != "label" || fields[width - 1] != "bottle_id") {
                throw ParseError(where + ": header must end with label,bottle_id");
            }
            for (std::size_t i = 0; i + 2 < width; ++i) t.names.emplace_back(fields[i]);
            continue;
        }
        if (fields.size() != width) {
            throw ParseError(where + ": expected " + std::to_string(width) + " columns, found " +
                             std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(width - 2);
        for (std::size_t i = 0; i + 2 < width; ++i) row.push_back(parse_double(fields[i], where));
        t.rows.push_back(std::move(row));
        t.labels.push_back(parse_label(fields[width - 2]));
        t.bottles.emplace_back(fields[width - 1]);
    }
    if (width == 0) throw ParseError(source + ": empty fingerprint file");
    return t;
}

} // namespace enose::features

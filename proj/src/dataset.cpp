#include "enose/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "enose/error.hpp"
#include "enose/rng.hpp"
#include "enose/text.hpp"

namespace enose::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

double Measurement::sample_rate_hz() const {
    return traces.empty() ? kSampleRateHz : traces.front().sample_rate_hz;
}

int Measurement::desorption_onset() const {
    if (desorption_index) return *desorption_index;
    const int onset = injection_index +
                      static_cast<int>(std::lround(kAbsorptionSeconds * sample_rate_hz()));
    return std::min(onset, n_points);
}

std::map<ClassLabel, std::pair<double, double>> default_va_ranges() {
    return {{ClassLabel::HQ, {0.15, 0.3}},
            {ClassLabel::AQ, {0.31, 0.41}},
            {ClassLabel::LQ, {0.8, 3.0}}};
}

Manifest summarize(const std::vector<Measurement>& measurements, double sample_rate_hz,
                   int n_points) {
    Manifest man;
    man.sample_rate_hz = sample_rate_hz;
    man.n_points = n_points;
    man.va_g_per_l = default_va_ranges();
    for (const Measurement& m : measurements) {
        ++man.class_counts[m.label];
        auto [it, inserted] = man.bottles.emplace(m.bottle_id, m.label);
        if (!inserted && it->second != m.label) {
            throw IntegrityError("bottle " + m.bottle_id + " carries labels " +
                                 std::string(to_string(it->second)) + " and " +
                                 std::string(to_string(m.label)));
        }
    }
    return man;
}

std::vector<std::string> validate_measurement(const Measurement& m) {
    std::vector<std::string> out;
    if (m.id.empty()) out.emplace_back("id: empty");
    if (m.bottle_id.empty()) out.emplace_back("bottle_id: empty");
    if (m.traces.size() != static_cast<std::size_t>(kSensorCount)) {
        out.push_back("traces: expected " + std::to_string(kSensorCount) + ", found " +
                      std::to_string(m.traces.size()));
    }
    if (m.n_points < 1) out.push_back("n_points: " + std::to_string(m.n_points) + " < 1");
    if (m.injection_index < 0 || m.injection_index >= m.n_points) {
        out.push_back("injection_index: " + std::to_string(m.injection_index) + " not in [0, " +
                      std::to_string(m.n_points) + ")");
    }
    if (m.desorption_index &&
        (*m.desorption_index < m.injection_index || *m.desorption_index > m.n_points)) {
        out.push_back("desorption_index: " + std::to_string(*m.desorption_index) + " not in [" +
                      std::to_string(m.injection_index) + ", " + std::to_string(m.n_points) + "]");
    }

    std::set<int> seen;
    for (const SensorTrace& tr : m.traces) {
        const std::string tag = "trace " + std::to_string(tr.sensor_index);
        if (tr.sensor_index < 1 || tr.sensor_index > kSensorCount) {
            out.push_back(tag + ": sensor index out of range 1.." + std::to_string(kSensorCount));
        } else if (!seen.insert(tr.sensor_index).second) {
            out.push_back(tag + ": sensor index appears more than once");
        }
        if (!(tr.sample_rate_hz > 0.0)) out.push_back(tag + ": sample rate must be positive");
        if (tr.sample_rate_hz != m.traces.front().sample_rate_hz) {
            out.push_back(tag + ": sample rate differs from trace " +
                          std::to_string(m.traces.front().sensor_index));
        }
        if (tr.samples.empty()) {
            out.push_back(tag + ": no samples");
        } else if (tr.samples.size() != static_cast<std::size_t>(m.n_points)) {
            out.push_back(tag + ": length " + std::to_string(tr.samples.size()) +
                          " != " + std::to_string(m.n_points));
        }
        for (std::size_t k = 0; k < tr.samples.size(); ++k) {
            const double g = tr.samples[k];
            if (!std::isfinite(g)) {
                out.push_back(tag + ": non-finite conductance at k=" + std::to_string(k));
                break;
            }
            if (g <= 0.0) {
                out.push_back(tag + ": non-positive conductance at k=" + std::to_string(k));
                break;
            }
        }
    }
    return out;
}

Measurement trim_to_interval(const Measurement& m, int start, int end) {
    if (start < 0 || start >= end || end > m.n_points) {
        throw BoundsError("trim [" + std::to_string(start) + ", " + std::to_string(end) +
                          ") outside [0, " + std::to_string(m.n_points) + ")");
    }
    Measurement out = m;
    const int n = end - start;
    for (std::size_t i = 0; i < m.traces.size(); ++i) {
        const std::vector<double>& src = m.traces[i].samples;
        if (src.size() < static_cast<std::size_t>(end)) {
            throw BoundsError("trace " + std::to_string(m.traces[i].sensor_index) +
                              " shorter than " + std::to_string(end));
        }
        out.traces[i].samples.assign(src.begin() + start, src.begin() + end);
    }
    const int onset = m.desorption_onset();
    out.n_points = n;
    // Segment boundaries before the cut are clamped onto the new range.
    out.injection_index = std::clamp(m.injection_index - start, 0, n - 1);
    out.desorption_index = std::clamp(onset - start, out.injection_index, n);
    return out;
}

Dataset restrict_to(const Dataset& ds, Experiment experiment) {
    if (experiment == Experiment::FourClass) return ds;
    Dataset out;
    for (const Measurement& m : ds.measurements) {
        if (is_wine(m.label)) out.measurements.push_back(m);
    }
    out.manifest = summarize(out.measurements, ds.manifest.sample_rate_hz, ds.manifest.n_points);
    out.manifest.provenance = ds.manifest.provenance;
    out.manifest.va_g_per_l = ds.manifest.va_g_per_l;
    return out;
}

// ---------------------------------------------------------------------------
// On-disk format

namespace {

constexpr std::string_view kTraceHeader = "t,s1,s2,s3,s4,s5,s6";
constexpr std::string_view kManifestFormat = "enose-dataset/1";

std::vector<SensorTrace> parse_trace_csv(const std::string& text, const std::string& file,
                                         int expected_rows, double rate) {
    std::vector<SensorTrace> traces(kSensorCount);
    for (int s = 0; s < kSensorCount; ++s) {
        traces[s].sensor_index = s + 1;
        traces[s].sample_rate_hz = rate;
        traces[s].samples.reserve(static_cast<std::size_t>(std::max(expected_rows, 0)));
    }
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kTraceHeader) {
                throw ParseError(file + ":1: expected header '" + std::string(kTraceHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = split(line, ',');
        const std::string where = file + ":" + std::to_string(line_no);
        if (fields.size() != 1 + static_cast<std::size_t>(kSensorCount)) {
            throw ParseError(where + ": expected 1 time + 6 sensor columns, found " +
                             std::to_string(fields.size()));
        }
        parse_double(fields[0], where);
        for (int s = 0; s < kSensorCount; ++s) {
            traces[s].samples.push_back(parse_double(fields[1 + s], where));
        }
    }
    if (!header_seen) throw ParseError(file + ": empty trace file");
    const auto rows = static_cast<int>(traces.front().samples.size());
    if (rows != expected_rows) {
        throw ParseError(file + ": expected " + std::to_string(expected_rows) + " rows, found " +
                         std::to_string(rows));
    }
    return traces;
}

json manifest_to_json(const Dataset& ds) {
    const Manifest& man = ds.manifest;
    json j;
    j["format"] = kManifestFormat;
    j["sample_rate_hz"] = man.sample_rate_hz;
    j["n_points"] = man.n_points;
    json prov;
    prov["kind"] = man.provenance.kind == Provenance::Kind::Real ? "real" : "synthetic";
    if (man.provenance.seed) prov["seed"] = *man.provenance.seed;
    j["provenance"] = prov;
    json counts = json::object();
    for (const auto& [label, n] : man.class_counts) counts[std::string(to_string(label))] = n;
    j["class_counts"] = counts;
    json bottles = json::object();
    for (const auto& [bottle, label] : man.bottles) bottles[bottle] = to_string(label);
    j["bottles"] = bottles;
    json va = json::object();
    for (const auto& [label, range] : man.va_g_per_l) {
        va[std::string(to_string(label))] = {range.first, range.second};
    }
    j["va_g_per_l"] = va;
    json records = json::array();
    for (const Measurement& m : ds.measurements) {
        json r;
        r["id"] = m.id;
        r["bottle_id"] = m.bottle_id;
        r["label"] = to_string(m.label);
        r["injection_index"] = m.injection_index;
        if (m.desorption_index) r["desorption_index"] = *m.desorption_index;
        r["file"] = m.id + ".csv";
        records.push_back(r);
    }
    j["measurements"] = records;
    return j;
}

template <typename T>
T field(const json& j, const char* key, const std::string& context) {
    if (!j.contains(key)) throw ParseError(context + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(context + ": bad field '" + key + "': " + e.what());
    }
}

} // namespace

std::string format_trace_csv(const Measurement& m) {
    std::string out;
    out.reserve(static_cast<std::size_t>(m.n_points) * 80);
    out += kTraceHeader;
    out += '\n';
    const double rate = m.sample_rate_hz();
    for (int k = 0; k < m.n_points; ++k) {
        out += format_double(k / rate);
        for (const SensorTrace& tr : m.traces) {
            out += ',';
            out += format_double(tr.samples.at(static_cast<std::size_t>(k)));
        }
        out += '\n';
    }
    return out;
}

void write_dataset(const Dataset& ds, const std::string& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error("cannot create " + root + ": " + ec.message());
    for (const Measurement& m : ds.measurements) {
        write_file((fs::path(root) / (m.id + ".csv")).string(), format_trace_csv(m));
    }
    write_file((fs::path(root) / "manifest.json").string(), manifest_to_json(ds).dump(2) + "\n");
}

Dataset load_dataset(const std::string& root) {
    const std::string manifest_path = (fs::path(root) / "manifest.json").string();
    if (!fs::exists(manifest_path)) throw ParseError(manifest_path + ": manifest not found");
    json j;
    try {
        j = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw ParseError(manifest_path + ": " + e.what());
    }

    Dataset ds;
    Manifest& man = ds.manifest;
    man.sample_rate_hz = field<double>(j, "sample_rate_hz", manifest_path);
    man.n_points = field<int>(j, "n_points", manifest_path);
    if (!(man.sample_rate_hz > 0.0) || man.n_points < 1) {
        throw IntegrityError(manifest_path + ": sample_rate_hz and n_points must be positive");
    }
    if (j.contains("provenance")) {
        const json& p = j["provenance"];
        const auto kind = field<std::string>(p, "kind", manifest_path);
        man.provenance.kind =
            kind == "synthetic" ? Provenance::Kind::Synthetic : Provenance::Kind::Real;
        if (p.contains("seed")) man.provenance.seed = p["seed"].get<std::uint64_t>();
    }
    if (j.contains("va_g_per_l")) {
        for (const auto& [label, range] : j["va_g_per_l"].items()) {
            man.va_g_per_l[parse_label(label)] = {range.at(0).get<double>(),
                                                  range.at(1).get<double>()};
        }
    }

    std::set<std::string> ids;
    for (const json& r : field<json>(j, "measurements", manifest_path)) {
        Measurement m;
        m.id = field<std::string>(r, "id", manifest_path);
        m.bottle_id = field<std::string>(r, "bottle_id", manifest_path);
        m.label = parse_label(field<std::string>(r, "label", manifest_path));
        m.injection_index = field<int>(r, "injection_index", manifest_path);
        if (r.contains("desorption_index")) m.desorption_index = r["desorption_index"].get<int>();
        m.n_points = man.n_points;
        if (!ids.insert(m.id).second) {
            throw IntegrityError(manifest_path + ": duplicate measurement id " + m.id);
        }
        const std::string file = r.contains("file") ? r["file"].get<std::string>() : m.id + ".csv";
        const std::string path = (fs::path(root) / file).string();
        if (!fs::exists(path)) throw ParseError(path + ": trace file missing");
        m.traces = parse_trace_csv(read_file(path), path, man.n_points, man.sample_rate_hz);
        if (auto v = validate_measurement(m); !v.empty()) {
            std::string msg = path + ": invalid measurement";
            for (const std::string& s : v) msg += "; " + s;
            throw IntegrityError(msg);
        }
        ds.measurements.push_back(std::move(m));
    }

    // Declared roster and counts must agree with what was actually loaded.
    if (j.contains("bottles")) {
        for (const auto& [bottle, label] : j["bottles"].items()) {
            man.bottles[bottle] = parse_label(label.get<std::string>());
        }
        for (const Measurement& m : ds.measurements) {
            auto it = man.bottles.find(m.bottle_id);
            if (it == man.bottles.end()) {
                throw IntegrityError("measurement " + m.id + ": bottle " + m.bottle_id +
                                     " not in manifest roster");
            }
            if (it->second != m.label) {
                throw IntegrityError("bottle " + m.bottle_id + " declared " +
                                     std::string(to_string(it->second)) + " but measurement " +
                                     m.id + " is labeled " + std::string(to_string(m.label)));
            }
        }
    }
    const Manifest actual = summarize(ds.measurements, man.sample_rate_hz, man.n_points);
    if (j.contains("class_counts")) {
        std::map<ClassLabel, int> declared;
        for (const auto& [label, n] : j["class_counts"].items()) {
            if (n.get<int>() != 0) declared[parse_label(label)] = n.get<int>();
        }
        if (declared != actual.class_counts) {
            throw IntegrityError(manifest_path + ": class_counts do not match measurements");
        }
    }
    man.class_counts = actual.class_counts;
    if (man.bottles.empty()) man.bottles = actual.bottles;
    return ds;
}

// ---------------------------------------------------------------------------
// Generator

GeneratorConfig default_generator_config() {
    GeneratorConfig c;
    c.seed = 7;
    c.baseline = {1.0, 0.8, 1.2, 1.1, 0.9, 1.3};
    c.drift_per_s = 1e-4;
    c.noise_std = 0.002;
    c.bottle_jitter = 0.5;
    c.measurement_jitter = 0.02;

    // Sensors 1/4 are alcohol-sensitive, 2/5 methane, 3/6 LPG; ethanol drives
    // the alcohol pair hard and barely moves the others.
    auto make = [](std::vector<double> amps, Range tau_a, Range tau_d) {
        ClassArchetype a;
        for (double amp : amps) {
            a.sensors.push_back({{0.9 * amp, 1.1 * amp}, tau_a, tau_d});
        }
        return a;
    };
    c.archetypes[ClassLabel::HQ] = make({0.6, 0.4, 0.3, 0.6, 0.4, 0.3}, {10, 12}, {20, 25});
    c.archetypes[ClassLabel::AQ] = make({1.2, 0.8, 0.6, 1.2, 0.8, 0.6}, {9, 11}, {18, 23});
    c.archetypes[ClassLabel::LQ] = make({2.4, 1.6, 1.2, 2.4, 1.6, 1.2}, {7, 9}, {15, 20});
    c.archetypes[ClassLabel::Ea] = make({3.0, 0.5, 0.4, 3.0, 0.5, 0.4}, {4, 6}, {10, 14});

    c.counts = {{ClassLabel::HQ, 51}, {ClassLabel::AQ, 43}, {ClassLabel::LQ, 141},
                {ClassLabel::Ea, 65}};
    c.bottles = {{ClassLabel::HQ, 5}, {ClassLabel::AQ, 4}, {ClassLabel::LQ, 13},
                 {ClassLabel::Ea, 6}};
    return c;
}

void validate_config(const GeneratorConfig& c) {
    auto check_range = [](const Range& r, const std::string& what, bool positive) {
        if (!(r.low <= r.high)) throw ConfigError(what + ": low > high");
        if (positive && !(r.low > 0.0)) throw ConfigError(what + ": must be positive");
        if (!positive && r.low < 0.0) throw ConfigError(what + ": must be non-negative");
    };
    if (c.baseline.size() != static_cast<std::size_t>(kSensorCount)) {
        throw ConfigError("baseline: expected 6 values");
    }
    for (double b : c.baseline) {
        if (!(b > 0.0)) throw ConfigError("baseline: values must be positive");
    }
    if (!(c.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (!(c.bottle_jitter >= 0.0 && c.bottle_jitter <= 1.0)) {
        throw ConfigError("bottle_jitter must lie in [0, 1]");
    }
    if (!(c.measurement_jitter >= 0.0)) throw ConfigError("measurement_jitter must be >= 0");
    if (!(c.sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be positive");
    if (c.n_points < 2) throw ConfigError("n_points must be >= 2");
    if (c.injection_index < 0 || c.injection_index >= c.n_points) {
        throw ConfigError("injection_index outside trace");
    }
    if (!(c.absorption_s > 0.0)) throw ConfigError("absorption_s must be positive");
    for (const auto& [label, n] : c.counts) {
        const std::string name(to_string(label));
        if (n < 0) throw ConfigError("counts." + name + " negative");
        if (n == 0) continue;
        auto b = c.bottles.find(label);
        if (b == c.bottles.end() || b->second < 1) {
            throw ConfigError("bottles." + name + " must be >= 1 when counts." + name + " > 0");
        }
        if (n < b->second) throw ConfigError("counts." + name + " < bottles." + name);
        auto a = c.archetypes.find(label);
        if (a == c.archetypes.end()) throw ConfigError("no archetype for class " + name);
        if (a->second.sensors.size() != static_cast<std::size_t>(kSensorCount)) {
            throw ConfigError("archetype " + name + ": expected 6 sensors");
        }
        for (std::size_t s = 0; s < a->second.sensors.size(); ++s) {
            const std::string tag = "archetype " + name + " sensor " + std::to_string(s + 1);
            check_range(a->second.sensors[s].amplitude, tag + " amplitude", false);
            check_range(a->second.sensors[s].tau_absorb_s, tag + " tau_absorb_s", true);
            check_range(a->second.sensors[s].tau_desorb_s, tag + " tau_desorb_s", true);
        }
    }
}

double archetype_response(double baseline, double drift_per_s, double amplitude,
                          double tau_absorb_s, double tau_desorb_s, int injection_index,
                          int desorption_index, double sample_rate_hz, int k) {
    const double t = k / sample_rate_hz;
    const double base = baseline * (1.0 + drift_per_s * t);
    if (k < injection_index) return base;
    if (k < desorption_index) {
        const double dt = (k - injection_index) / sample_rate_hz;
        return base + amplitude * (1.0 - std::exp(-dt / tau_absorb_s));
    }
    const double rise = (desorption_index - injection_index) / sample_rate_hz;
    const double peak = amplitude * (1.0 - std::exp(-rise / tau_absorb_s));
    const double dt = (k - desorption_index) / sample_rate_hz;
    return base + peak * std::exp(-dt / tau_desorb_s);
}

namespace {

struct SensorParams {
    double baseline, amplitude, tau_a, tau_d;
};

std::string two_digits(int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d", n);
    return buf;
}

} // namespace

Dataset generate_synthetic(const GeneratorConfig& config) {
    validate_config(config);
    Rng rng(config.seed);
    const int desorption = std::min(
        config.n_points,
        config.injection_index + static_cast<int>(std::lround(config.absorption_s * config.sample_rate_hz)));
    const bool default_onset =
        desorption == std::min(config.n_points,
                               config.injection_index +
                                   static_cast<int>(std::lround(kAbsorptionSeconds * config.sample_rate_hz)));

    Dataset ds;
    for (ClassLabel label : kAllLabels) {
        auto cnt = config.counts.find(label);
        if (cnt == config.counts.end() || cnt->second == 0) continue;
        const int count = cnt->second;
        const int n_bottles = config.bottles.at(label);
        const ClassArchetype& arch = config.archetypes.at(label);
        const char* prefix = label == ClassLabel::Ea ? "K" : "B";

        for (int b = 0; b < n_bottles; ++b) {
            const std::string bottle_id =
                std::string(to_string(label)) + "-" + prefix + two_digits(b + 1);
            std::vector<SensorParams> bottle(kSensorCount);
            for (int s = 0; s < kSensorCount; ++s) {
                const SensorArchetype& sa = arch.sensors[s];
                auto draw = [&](const Range& r) {
                    return r.mid() + config.bottle_jitter * rng.uniform(-1.0, 1.0) * r.half_width();
                };
                bottle[s] = {config.baseline[s], draw(sa.amplitude), draw(sa.tau_absorb_s),
                             draw(sa.tau_desorb_s)};
            }
            // Contiguous block of measurements per bottle.
            const int in_bottle = count / n_bottles + (b < count % n_bottles ? 1 : 0);
            for (int r = 0; r < in_bottle; ++r) {
                Measurement m;
                m.id = bottle_id + "-" + two_digits(r + 1);
                m.bottle_id = bottle_id;
                m.label = label;
                m.n_points = config.n_points;
                m.injection_index = config.injection_index;
                if (!default_onset) m.desorption_index = desorption;
                for (int s = 0; s < kSensorCount; ++s) {
                    const double j = config.measurement_jitter;
                    SensorParams p = bottle[s];
                    p.baseline *= 1.0 + j * rng.normal();
                    p.amplitude *= 1.0 + j * rng.normal();
                    p.tau_a *= 1.0 + j * rng.normal();
                    p.tau_d *= 1.0 + j * rng.normal();
                    p.tau_a = std::max(p.tau_a, 1e-3);
                    p.tau_d = std::max(p.tau_d, 1e-3);
                    SensorTrace tr;
                    tr.sensor_index = s + 1;
                    tr.sample_rate_hz = config.sample_rate_hz;
                    tr.samples.resize(static_cast<std::size_t>(config.n_points));
                    const double floor = 1e-6 * config.baseline[s];
                    for (int k = 0; k < config.n_points; ++k) {
                        double g = archetype_response(p.baseline, config.drift_per_s, p.amplitude,
                                                      p.tau_a, p.tau_d, config.injection_index,
                                                      desorption, config.sample_rate_hz, k);
                        g += config.noise_std * config.baseline[s] * rng.normal();
                        tr.samples[static_cast<std::size_t>(k)] = std::max(g, floor);
                    }
                    m.traces.push_back(std::move(tr));
                }
                ds.measurements.push_back(std::move(m));
            }
        }
    }
    ds.manifest = summarize(ds.measurements, config.sample_rate_hz, config.n_points);
    ds.manifest.provenance = {Provenance::Kind::Synthetic, config.seed};
    return ds;
}

} // namespace enose::dataset

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "enose/dataset.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("enose-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = "") const { return (path_ / child).string(); }

private:
    std::filesystem::path path_;
};

// Six flat positive traces of n points with a small per-sensor offset.
inline enose::dataset::Measurement flat_measurement(const std::string& id, const std::string& bottle,
                                                    enose::ClassLabel label, int n = enose::dataset::kCanonicalPoints) {
    enose::dataset::Measurement m;
    m.id = id;
    m.bottle_id = bottle;
    m.label = label;
    m.n_points = n;
    m.injection_index = std::min(enose::dataset::kCanonicalInjection, n - 1);
    for (int s = 1; s <= enose::dataset::kSensorCount; ++s) {
        enose::dataset::SensorTrace tr;
        tr.sensor_index = s;
        tr.samples.assign(static_cast<std::size_t>(n), 1.0 + 0.1 * s);
        m.traces.push_back(tr);
    }
    return m;
}

// Default generator with per-class counts and matching bottle counts capped.
inline enose::dataset::GeneratorConfig small_config(int per_class, int bottles, bool with_ethanol = true) {
    using enose::ClassLabel;
    auto c = enose::dataset::default_generator_config();
    for (ClassLabel l : enose::kAllLabels) {
        const bool on = with_ethanol || l != ClassLabel::Ea;
        c.counts[l] = on ? per_class : 0;
        c.bottles[l] = on ? bottles : 0;
    }
    return c;
}

} // namespace testing

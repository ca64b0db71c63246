#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "enose/dataset.hpp"

namespace enose::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Runs one command line (args excludes the program name) and returns the
// process exit code. Reports go to `out`, diagnostics and the effective
// configuration to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Generator settings from JSON layered over `base`. Keys: seed, counts,
// bottles, baseline, noise_std, drift_per_s, bottle_jitter,
// measurement_jitter, n_points, sample_rate_hz, injection_index,
// absorption_s, archetypes. Throws ConfigError on unknown keys.
dataset::GeneratorConfig generator_from_json(const nlohmann::json& j, dataset::GeneratorConfig base);
nlohmann::json to_json(const dataset::GeneratorConfig& config);

// "a,b,c,d" in HQ, AQ, LQ, Ea order. Bottle counts are capped at the new
// measurement counts.
void apply_counts(dataset::GeneratorConfig& config, const std::string& counts);

} // namespace enose::cli

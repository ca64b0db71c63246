#include "enose/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "enose/error.hpp"
#include "enose/eval.hpp"
#include "enose/experiment.hpp"
#include "enose/features.hpp"
#include "enose/parallel.hpp"
#include "enose/selection.hpp"
#include "enose/svm.hpp"
#include "enose/text.hpp"
#include "enose/windows.hpp"

namespace enose::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

json range_json(const dataset::Range& r) { return json::array({r.low, r.high}); }

dataset::Range range_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(what + ": expected [low, high]");
    return {j[0].get<double>(), j[1].get<double>()};
}

template <class T>
T number(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

json load_json(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("config file not found: " + path);
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_text(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw Error("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    write_file(path.string(), text);
}

} // namespace

json to_json(const dataset::GeneratorConfig& c) {
    json counts = json::object(), bottles = json::object(), arche = json::object();
    for (const auto& [l, n] : c.counts) counts[std::string(to_string(l))] = n;
    for (const auto& [l, n] : c.bottles) bottles[std::string(to_string(l))] = n;
    for (const auto& [l, a] : c.archetypes) {
        json sensors = json::array();
        for (const auto& s : a.sensors) {
            sensors.push_back({{"amplitude", range_json(s.amplitude)},
                               {"tau_absorb_s", range_json(s.tau_absorb_s)},
                               {"tau_desorb_s", range_json(s.tau_desorb_s)}});
        }
        arche[std::string(to_string(l))] = sensors;
    }
    return {{"seed", c.seed},
            {"counts", counts},
            {"bottles", bottles},
            {"baseline", c.baseline},
            {"noise_std", c.noise_std},
            {"drift_per_s", c.drift_per_s},
            {"bottle_jitter", c.bottle_jitter},
            {"measurement_jitter", c.measurement_jitter},
            {"n_points", c.n_points},
            {"sample_rate_hz", c.sample_rate_hz},
            {"injection_index", c.injection_index},
            {"absorption_s", c.absorption_s},
            {"archetypes", arche}};
}

dataset::GeneratorConfig generator_from_json(const json& j, dataset::GeneratorConfig c) {
    static const std::vector<std::string> known{
        "seed", "counts", "bottles", "baseline", "noise_std", "drift_per_s", "bottle_jitter",
        "measurement_jitter", "n_points", "sample_rate_hz", "injection_index", "absorption_s", "archetypes"};
    if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown generator config key '" + key + "'");
        }
    }
    try {
        if (j.contains("seed")) c.seed = number<std::uint64_t>(j, "seed");
        for (const char* key : {"counts", "bottles"}) {
            if (!j.contains(key)) continue;
            auto& target = std::string(key) == "counts" ? c.counts : c.bottles;
            for (const auto& [label, n] : j[key].items()) target[parse_label(label)] = n.get<int>();
        }
        if (j.contains("baseline")) c.baseline = j["baseline"].get<std::vector<double>>();
        if (j.contains("noise_std")) c.noise_std = number<double>(j, "noise_std");
        if (j.contains("drift_per_s")) c.drift_per_s = number<double>(j, "drift_per_s");
        if (j.contains("bottle_jitter")) c.bottle_jitter = number<double>(j, "bottle_jitter");
        if (j.contains("measurement_jitter")) c.measurement_jitter = number<double>(j, "measurement_jitter");
        if (j.contains("n_points")) c.n_points = number<int>(j, "n_points");
        if (j.contains("sample_rate_hz")) c.sample_rate_hz = number<double>(j, "sample_rate_hz");
        if (j.contains("injection_index")) c.injection_index = number<int>(j, "injection_index");
        if (j.contains("absorption_s")) c.absorption_s = number<double>(j, "absorption_s");
        if (j.contains("archetypes")) {
            for (const auto& [label, sensors] : j["archetypes"].items()) {
                dataset::ClassArchetype a;
                for (const json& s : sensors) {
                    a.sensors.push_back({range_from(s.at("amplitude"), label + " amplitude"),
                                         range_from(s.at("tau_absorb_s"), label + " tau_absorb_s"),
                                         range_from(s.at("tau_desorb_s"), label + " tau_desorb_s")});
                }
                c.archetypes[parse_label(label)] = a;
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("generator config: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("generator config: ") + e.what());
    }
    dataset::validate_config(c);
    return c;
}

void apply_counts(dataset::GeneratorConfig& c, const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() != kAllLabels.size()) {
        throw UsageError("--counts expects 4 comma-separated integers (HQ,AQ,LQ,Ea)");
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        long long n = 0;
        try {
            n = parse_int(parts[i], "--counts");
        } catch (const ParseError& e) {
            throw UsageError(e.what());
        }
        if (n < 0) throw UsageError("--counts values must be >= 0");
        const ClassLabel l = kAllLabels[i];
        c.counts[l] = static_cast<int>(n);
        c.bottles[l] = std::min(c.bottles.count(l) ? c.bottles[l] : 1, static_cast<int>(n));
        if (n > 0 && c.bottles[l] < 1) c.bottles[l] = 1;
    }
}

namespace {

struct Globals {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned workers = default_workers();
    std::string out;
};

struct RunFlags {
    std::string dataset;
    std::string fingerprints;
    std::string experiment;
    std::string pipeline;
    int repetitions = 0;
    int window = 0;
    int epochs = 0;
    std::vector<int> windows;
    std::string protocol;
};

experiment::ExperimentConfig resolve_experiment(const Globals& g, const RunFlags& f, CLI::App* sub,
                                                std::ostream& err) {
    auto given = [sub](const char* name) {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };
    experiment::ExperimentConfig cfg;
    if (!g.config.empty()) cfg = experiment::config_from_json(load_json(g.config), cfg);
    if (g.seed_set) cfg.seed = g.seed;
    if (!f.experiment.empty()) cfg.experiment = parse_experiment(f.experiment);
    if (!f.pipeline.empty()) cfg.pipeline = experiment::parse_pipeline(f.pipeline);
    if (given("--repetitions")) cfg.repetitions = f.repetitions;
    if (given("--window")) cfg.window = f.window;
    if (given("--epochs")) cfg.mlp.epochs = f.epochs;
    if (given("--windows")) cfg.sweep_windows = f.windows;
    if (!f.protocol.empty()) {
        cfg = experiment::config_from_json(json{{"protocol", f.protocol}}, cfg);
    }
    cfg.workers = g.workers;
    experiment::validate_config(cfg);
    err << "effective config: " << experiment::to_json(cfg).dump() << " workers=" << cfg.workers << "\n";
    return cfg;
}

dataset::Dataset need_dataset(const std::string& path) {
    if (path.empty()) throw UsageError("--dataset is required");
    return dataset::load_dataset(path);
}

features::FingerprintTable fingerprints_from(const RunFlags& f, unsigned workers) {
    if (!f.fingerprints.empty()) {
        return features::parse_fingerprint_csv(read_file(f.fingerprints), f.fingerprints);
    }
    if (f.dataset.empty()) throw UsageError("one of --dataset or --fingerprints is required");
    return features::extract_all(dataset::load_dataset(f.dataset), workers);
}

features::FingerprintTable restrict_table(const features::FingerprintTable& t, Experiment e) {
    features::FingerprintTable out;
    out.names = t.names;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (e == Experiment::ThreeClass && !is_wine(t.labels[r])) continue;
        out.rows.push_back(t.rows[r]);
        out.labels.push_back(t.labels[r]);
        out.bottles.push_back(t.bottles[r]);
    }
    return out;
}

Eigen::MatrixXd table_matrix(const features::FingerprintTable& t) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.names.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < t.names.size(); ++c) {
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.rows[r][c];
        }
    }
    return X;
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

int cmd_generate(const Globals& g, const std::string& counts, std::ostream& out, std::ostream& err) {
    if (g.out.empty()) throw UsageError("generate needs --out <directory>");
    dataset::GeneratorConfig cfg = dataset::default_generator_config();
    if (!g.config.empty()) cfg = generator_from_json(load_json(g.config), cfg);
    if (g.seed_set) cfg.seed = g.seed;
    if (!counts.empty()) apply_counts(cfg, counts);
    dataset::validate_config(cfg);
    err << "effective config: " << to_json(cfg).dump() << "\n";

    const dataset::Dataset ds = dataset::generate_synthetic(cfg);
    std::error_code ec;
    fs::create_directories(g.out, ec);
    if (ec) throw Error("cannot create " + g.out + ": " + ec.message());
    dataset::write_dataset(ds, g.out);

    out << "wrote " << ds.measurements.size() << " measurements to " << g.out << "\n";
    for (const auto& [label, n] : ds.manifest.class_counts) {
        int bottles = 0;
        for (const auto& [_, l] : ds.manifest.bottles) bottles += l == label;
        out << "  " << to_string(label) << ": " << n << " measurements, " << bottles << " bottles\n";
    }
    out << "  points per trace: " << ds.manifest.n_points << " at " << format_double(ds.manifest.sample_rate_hz)
        << " Hz\n";
    return kOk;
}

int cmd_extract(const Globals& g, const RunFlags& f, std::ostream& out) {
    if (g.out.empty()) throw UsageError("extract needs --out <file.csv>");
    const dataset::Dataset ds = need_dataset(f.dataset);
    const features::FingerprintTable t = features::extract_all(ds, g.workers);
    write_text(g.out, features::format_fingerprint_csv(t));
    out << "wrote " << t.rows.size() << " x " << t.names.size() << " fingerprints to " << g.out << "\n";
    return kOk;
}

int cmd_select(const Globals& g, const RunFlags& f, CLI::App* sub, std::ostream& out, std::ostream& err) {
    const experiment::ExperimentConfig cfg = resolve_experiment(g, f, sub, err);
    const features::FingerprintTable t = restrict_table(fingerprints_from(f, g.workers), cfg.experiment);
    if (t.rows.empty()) throw InputError("no rows for " + std::string(to_string(cfg.experiment)));
    selection::RfecvOptions opt;
    opt.folds = cfg.selection.folds;
    opt.step = cfg.selection.step;
    opt.seed = cfg.seed;
    opt.C = cfg.svm.C;
    opt.kernel = svm::KernelSpec::gaussian(experiment::resolved_gamma(cfg));
    opt.workers = g.workers;
    const selection::SelectionResult res = selection::rfecv_select(table_matrix(t), t.labels, t.bottles, opt);
    json j = selection::to_json(res, t.names);
    j["experiment"] = to_string(cfg.experiment);
    if (g.out.empty()) {
        out << j.dump(2) << "\n";
    } else {
        write_text(g.out, j.dump(2) + "\n");
        out << "kept " << res.chosen_size << " of " << t.names.size() << " features; report in " << g.out << "\n";
    }
    return kOk;
}

int cmd_validate(const RunFlags& f, std::ostream& out) {
    const dataset::Dataset ds = need_dataset(f.dataset);
    std::size_t bad = 0;
    for (const dataset::Measurement& m : ds.measurements) {
        for (const std::string& v : dataset::validate_measurement(m)) {
            out << m.id << ": " << v << "\n";
            ++bad;
        }
    }
    const std::vector<std::string> leaks = [&] {
        std::vector<std::string> groups;
        for (const auto& m : ds.measurements) groups.push_back(m.bottle_id);
        return eval::check_fold_plan(eval::loo_by_bottle(ds), groups);
    }();
    for (const std::string& l : leaks) out << l << "\n";
    if (bad || !leaks.empty()) return kData;
    out << "ok: " << ds.measurements.size() << " measurements, " << ds.manifest.bottles.size()
        << " bottles/batches, " << ds.manifest.n_points << " points at " << format_double(ds.manifest.sample_rate_hz)
        << " Hz\n";
    return kOk;
}

int cmd_run(const Globals& g, const RunFlags& f, CLI::App* sub, std::ostream& out, std::ostream& err) {
    const experiment::ExperimentConfig cfg = resolve_experiment(g, f, sub, err);
    const dataset::Dataset ds = need_dataset(f.dataset);
    const experiment::RunReport report = experiment::run_experiment(ds, cfg);
    const std::vector<experiment::RunReport> one{report};
    const std::string table = experiment::format_table(one);
    out << table;
    if (report.pipeline == "rapid" && report.window) {
        out << (report.sweep ? "earliest window: t=" : "window: t=") << *report.window << " (" << fixed(report.recognition_seconds, 2) << " s)\n";
    }
    if (!g.out.empty()) {
        const fs::path dir(g.out);
        write_text(dir / "report.json", experiment::to_json(report).dump(2) + "\n");
        write_text(dir / "report.txt", table);
        if (report.sweep) write_text(dir / "sweep.csv", windows::format_sweep_csv(*report.sweep));
    }
    return kOk;
}

int cmd_sweep(const Globals& g, const RunFlags& f, CLI::App* sub, std::ostream& out, std::ostream& err) {
    const experiment::ExperimentConfig cfg = resolve_experiment(g, f, sub, err);
    const dataset::Dataset ds = dataset::restrict_to(need_dataset(f.dataset), cfg.experiment);
    windows::SweepOptions opt;
    opt.protocol = cfg.protocol;
    opt.folds = cfg.folds;
    opt.repetitions = cfg.repetitions;
    opt.seed = cfg.seed;
    opt.windows = cfg.sweep_windows;
    opt.workers = g.workers;
    const windows::WindowSweepResult res = windows::sweep(ds, cfg.plan, cfg.mlp, opt);
    const int t = windows::select_earliest(res, cfg.epsilon);
    const std::string csv = windows::format_sweep_csv(res);
    out << csv;
    out << "earliest window within " << format_double(cfg.epsilon) << ": t=" << t << " ("
        << fixed(windows::window_to_seconds(t, cfg.plan.delta, ds.manifest.sample_rate_hz), 2) << " s)\n";
    if (!g.out.empty()) {
        json j = windows::to_json(res);
        j["experiment"] = to_string(cfg.experiment);
        j["epsilon"] = cfg.epsilon;
        j["earliest"] = t;
        const fs::path dir(g.out);
        write_text(dir / "sweep.json", j.dump(2) + "\n");
        write_text(dir / "sweep.csv", csv);
    }
    return kOk;
}

int cmd_compare(const Globals& g, const std::vector<std::string>& files, const std::string& alternative,
                std::ostream& out) {
    if (files.size() != 2) throw UsageError("compare needs exactly two report files");
    auto load = [](const std::string& p) {
        if (!fs::exists(p)) throw UsageError("report not found: " + p);
        try {
            return experiment::report_from_json(json::parse(read_file(p)));
        } catch (const json::parse_error& e) {
            throw ParseError(p + ": " + e.what());
        }
    };
    const experiment::RunReport a = load(files[0]), b = load(files[1]);
    const experiment::Comparison c = experiment::compare_reports(a, b, eval::parse_alternative(alternative));
    out << experiment::format_comparison(a, b, c);
    if (!g.out.empty()) {
        const json j = {{"experiment", c.experiment},
                        {"a", {{"file", files[0]}, {"pipeline", a.pipeline}, {"val_mean", a.validation.mean}}},
                        {"b", {{"file", files[1]}, {"pipeline", b.pipeline}, {"val_mean", b.validation.mean}}},
                        {"u", c.test.u},
                        {"u_other", c.test.u_other},
                        {"p_value", c.test.p_value},
                        {"alternative", eval::to_string(c.test.alternative)},
                        {"method", c.test.method == eval::TestMethod::Exact ? "exact" : "normal"}};
        write_text(g.out, j.dump(2) + "\n");
    }
    return kOk;
}

int cmd_pca(const Globals& g, const RunFlags& f, int n, bool raw, std::ostream& out) {
    const features::FingerprintTable t = fingerprints_from(f, g.workers);
    Eigen::MatrixXd X = table_matrix(t);
    if (!raw && X.rows() >= 2) X = svm::standardize_fit(X).apply(X);
    const eval::PcaModel model = eval::pca_fit(X, n);
    const Eigen::MatrixXd scores = eval::pca_scores(model, X);

    std::string csv;
    for (int c = 0; c < n; ++c) csv += "pc" + std::to_string(c + 1) + ",";
    csv += "label,bottle_id\n";
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        for (int c = 0; c < n; ++c) csv += format_double(scores(r, c)) + ",";
        csv += std::string(to_string(t.labels[static_cast<std::size_t>(r)])) + "," +
               t.bottles[static_cast<std::size_t>(r)] + "\n";
    }
    if (g.out.empty()) out << csv;
    else write_text(g.out, csv);

    double cumulative = 0.0;
    for (int c = 0; c < n; ++c) {
        cumulative += model.explained_ratio(c);
        out << "pc" << c + 1 << ": explained " << fixed(model.explained_ratio(c), 4) << "\n";
    }
    out << "cumulative variance: " << fixed(cumulative, 4) << "\n";
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Electronic-nose wine spoilage toolkit", "enose"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    RunFlags f;
    app.add_option("--config", g.config, "JSON config file (flags override it)");
    auto* seed_opt = app.add_option("--seed", g.seed, "Base random seed");
    app.add_option("--workers", g.workers, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output file or directory");

    auto add_experiment_flags = [&](CLI::App* sub) {
        sub->add_option("--dataset", f.dataset, "Dataset directory");
        sub->add_option("--experiment", f.experiment, "exp1 (3 wine classes) or exp2 (with ethanol)");
        sub->add_option("--repetitions", f.repetitions, "Repetitions")->check(CLI::PositiveNumber);
        sub->add_option("--epochs", f.epochs, "MLP epochs")->check(CLI::PositiveNumber);
        sub->add_option("--windows", f.windows, "Windows to sweep (default all)")->delimiter(',');
        sub->add_option("--protocol", f.protocol, "loo-bottle or group-kfold");
    };

    std::string counts;
    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
    gen->add_option("--counts", counts, "Measurements per class: HQ,AQ,LQ,Ea");

    auto* ext = app.add_subcommand("extract", "Fingerprint CSV from a dataset");
    ext->add_option("--dataset", f.dataset, "Dataset directory");

    auto* sel = app.add_subcommand("select", "RFECV feature selection report");
    add_experiment_flags(sel);
    sel->add_option("--fingerprints", f.fingerprints, "Fingerprint CSV instead of a dataset");

    auto* run_cmd = app.add_subcommand("run", "Run the conventional or rapid pipeline");
    add_experiment_flags(run_cmd);
    run_cmd->add_option("--pipeline", f.pipeline, "conventional or rapid");
    run_cmd->add_option("--window", f.window, "Rapid window t (default: sweep and pick the earliest)")
        ->check(CLI::PositiveNumber);

    auto* sw = app.add_subcommand("sweep", "Accuracy of every rising window");
    add_experiment_flags(sw);

    std::vector<std::string> report_files;
    std::string alternative = "two-sided";
    auto* cmp = app.add_subcommand("compare", "Compare two run reports with a Mann-Whitney U test");
    cmp->add_option("reports", report_files, "Two report.json files")->expected(2);
    cmp->add_option("--alternative", alternative, "two-sided, less or greater");

    int n_components = 3;
    bool raw = false;
    auto* pca = app.add_subcommand("pca", "Principal component scores of the fingerprints");
    pca->add_option("--dataset", f.dataset, "Dataset directory");
    pca->add_option("--fingerprints", f.fingerprints, "Fingerprint CSV");
    pca->add_option("--n", n_components, "Components")->check(CLI::PositiveNumber);
    pca->add_flag("--raw", raw, "Skip per-feature standardization");

    auto* val = app.add_subcommand("validate", "Check a dataset directory");
    val->add_option("--dataset", f.dataset, "Dataset directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    g.seed_set = seed_opt->count() > 0;

    try {
        if (gen->parsed()) return cmd_generate(g, counts, out, err);
        if (ext->parsed()) return cmd_extract(g, f, out);
        if (sel->parsed()) return cmd_select(g, f, sel, out, err);
        if (run_cmd->parsed()) return cmd_run(g, f, run_cmd, out, err);
        if (sw->parsed()) return cmd_sweep(g, f, sw, out, err);
        if (cmp->parsed()) return cmd_compare(g, report_files, alternative, out);
        if (pca->parsed()) return cmd_pca(g, f, n_components, raw, out);
        if (val->parsed()) return cmd_validate(f, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}

} // namespace enose::cli

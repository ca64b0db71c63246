#include "enose/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <iomanip>

#include "enose/error.hpp"
#include "enose/features.hpp"
#include "enose/parallel.hpp"
#include "enose/rng.hpp"
#include "enose/selection.hpp"
#include "enose/svm.hpp"
#include "enose/text.hpp"

namespace enose::experiment {

using json = nlohmann::json;
using clock_type = std::chrono::steady_clock;

std::string_view to_string(Pipeline p) {
    return p == Pipeline::Conventional ? "conventional" : "rapid";
}

Pipeline parse_pipeline(std::string_view text) {
    if (text == "conventional") return Pipeline::Conventional;
    if (text == "rapid") return Pipeline::Rapid;
    throw ConfigError("unknown pipeline '" + std::string(text) + "' (expected conventional or rapid)");
}

double resolved_gamma(const ExperimentConfig& cfg) {
    if (cfg.svm.gamma) return *cfg.svm.gamma;
    const double scale = cfg.svm.kernel_scale.value_or(cfg.experiment == Experiment::ThreeClass ? 8.3 : 19.0);
    return svm::KernelSpec::gaussian_from_scale(scale).gamma;
}

namespace {

std::string_view protocol_name(windows::Protocol p) {
    return p == windows::Protocol::LeaveOneBottleOut ? "loo-bottle" : "group-kfold";
}

windows::Protocol parse_protocol(std::string_view text) {
    if (text == "loo-bottle") return windows::Protocol::LeaveOneBottleOut;
    if (text == "group-kfold") return windows::Protocol::GroupedKFold;
    throw ConfigError("unknown protocol '" + std::string(text) + "'");
}

template <class T>
T get_as(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown config key '" + where + key + "'");
        }
    }
}

} // namespace

json to_json(const ExperimentConfig& cfg) {
    json svm_j = {{"C", cfg.svm.C}, {"gamma", resolved_gamma(cfg)}};
    json mlp_j = {{"learning_rate", cfg.mlp.learning_rate},
                  {"batch_size", cfg.mlp.batch_size},
                  {"epochs", cfg.mlp.epochs},
                  {"seed", cfg.mlp.seed},
                  {"holdout_fraction", cfg.mlp.holdout_fraction}};
    mlp_j["patience"] = cfg.mlp.patience ? json(*cfg.mlp.patience) : json(nullptr);
    json j = {{"experiment", to_string(cfg.experiment)},
              {"pipeline", to_string(cfg.pipeline)},
              {"repetitions", cfg.repetitions},
              {"seed", cfg.seed},
              {"svm", svm_j},
              {"selection", {{"enabled", cfg.selection.enabled}, {"folds", cfg.selection.folds}, {"step", cfg.selection.step}}},
              {"plan", {{"start_index", cfg.plan.start_index}, {"end_index", cfg.plan.end_index}, {"delta", cfg.plan.delta}}},
              {"mlp", mlp_j},
              {"sweep_windows", cfg.sweep_windows},
              {"epsilon", cfg.epsilon},
              {"protocol", protocol_name(cfg.protocol)},
              {"folds", cfg.folds}};
    j["window"] = cfg.window ? json(*cfg.window) : json(nullptr);
    return j;
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig cfg) {
    reject_unknown(j,
                   {"experiment", "pipeline", "repetitions", "seed", "workers", "svm", "selection", "plan",
                    "mlp", "window", "sweep_windows", "epsilon", "protocol", "folds", "dataset", "out"},
                   "");
    if (j.contains("experiment")) cfg.experiment = parse_experiment(get_as<std::string>(j, "experiment"));
    if (j.contains("pipeline")) cfg.pipeline = parse_pipeline(get_as<std::string>(j, "pipeline"));
    if (j.contains("repetitions")) cfg.repetitions = get_as<int>(j, "repetitions");
    if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed");
    if (j.contains("workers")) cfg.workers = get_as<unsigned>(j, "workers");
    if (j.contains("svm")) {
        const json& s = j["svm"];
        reject_unknown(s, {"C", "kernel_scale", "gamma"}, "svm.");
        if (s.contains("C")) cfg.svm.C = get_as<double>(s, "C");
        if (s.contains("kernel_scale")) cfg.svm.kernel_scale = get_as<double>(s, "kernel_scale");
        if (s.contains("gamma")) cfg.svm.gamma = get_as<double>(s, "gamma");
    }
    if (j.contains("selection")) {
        const json& s = j["selection"];
        reject_unknown(s, {"enabled", "folds", "step"}, "selection.");
        if (s.contains("enabled")) cfg.selection.enabled = get_as<bool>(s, "enabled");
        if (s.contains("folds")) cfg.selection.folds = get_as<int>(s, "folds");
        if (s.contains("step")) cfg.selection.step = get_as<int>(s, "step");
    }
    if (j.contains("plan")) {
        const json& s = j["plan"];
        reject_unknown(s, {"start_index", "end_index", "delta"}, "plan.");
        if (s.contains("start_index")) cfg.plan.start_index = get_as<int>(s, "start_index");
        if (s.contains("end_index")) cfg.plan.end_index = get_as<int>(s, "end_index");
        if (s.contains("delta")) cfg.plan.delta = get_as<int>(s, "delta");
    }
    if (j.contains("mlp")) {
        const json& s = j["mlp"];
        reject_unknown(s, {"learning_rate", "batch_size", "epochs", "seed", "patience", "holdout_fraction"}, "mlp.");
        if (s.contains("learning_rate")) cfg.mlp.learning_rate = get_as<double>(s, "learning_rate");
        if (s.contains("batch_size")) cfg.mlp.batch_size = get_as<int>(s, "batch_size");
        if (s.contains("epochs")) cfg.mlp.epochs = get_as<int>(s, "epochs");
        if (s.contains("seed")) cfg.mlp.seed = get_as<std::uint64_t>(s, "seed");
        if (s.contains("patience")) {
            if (s["patience"].is_null()) cfg.mlp.patience.reset();
            else cfg.mlp.patience = get_as<int>(s, "patience");
        }
        if (s.contains("holdout_fraction")) cfg.mlp.holdout_fraction = get_as<double>(s, "holdout_fraction");
    }
    if (j.contains("window")) {
        if (j["window"].is_null()) cfg.window.reset();
        else cfg.window = get_as<int>(j, "window");
    }
    if (j.contains("sweep_windows")) cfg.sweep_windows = get_as<std::vector<int>>(j, "sweep_windows");
    if (j.contains("epsilon")) cfg.epsilon = get_as<double>(j, "epsilon");
    if (j.contains("protocol")) cfg.protocol = parse_protocol(get_as<std::string>(j, "protocol"));
    if (j.contains("folds")) cfg.folds = get_as<int>(j, "folds");
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (!(cfg.svm.C > 0.0)) throw ConfigError("svm.C must be positive");
    if (cfg.svm.kernel_scale && !(*cfg.svm.kernel_scale > 0.0)) throw ConfigError("svm.kernel_scale must be positive");
    if (cfg.svm.gamma && !(*cfg.svm.gamma > 0.0)) throw ConfigError("svm.gamma must be positive");
    if (cfg.selection.step < 1) throw ConfigError("selection.step must be >= 1");
    if (cfg.selection.folds < 2) throw ConfigError("selection.folds must be >= 2");
    if (cfg.folds < 2) throw ConfigError("folds must be >= 2");
    if (!(cfg.epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    windows::validate_plan(cfg.plan);
    if (cfg.window && (*cfg.window < 1 || *cfg.window > cfg.plan.count())) {
        throw ConfigError("window " + std::to_string(*cfg.window) + " outside [1, " +
                          std::to_string(cfg.plan.count()) + "]");
    }
    for (int t : cfg.sweep_windows) {
        if (t < 1 || t > cfg.plan.count()) throw ConfigError("sweep window " + std::to_string(t) + " out of range");
    }
}

namespace {

[[noreturn]] void rethrow_for_repetition(int rep) {
    const std::string ctx = "repetition " + std::to_string(rep) + ": ";
    try {
        throw;
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + e.what());
    } catch (const Error& e) {
        throw TrainingError(ctx + e.what());
    }
}

svm::Matrix to_matrix(const features::FingerprintTable& t, std::span<const int> columns) {
    svm::Matrix X(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.rows[r][static_cast<std::size_t>(columns[c])];
        }
    }
    return X;
}

svm::Matrix take_rows(const svm::Matrix& X, std::span<const std::size_t> rows) {
    svm::Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

struct RepOutcome {
    double train_acc = 0.0;
    double val_acc = 0.0;
    double train_sec = 0.0;
    double infer_sec = 0.0;
    int selected = 0;
};

void run_conventional(const dataset::Dataset& ds, const ExperimentConfig& cfg, RunReport& report) {
    const auto e0 = clock_type::now();
    const features::FingerprintTable table = features::extract_all(ds, cfg.workers);
    const double extract_per_row =
        std::chrono::duration<double>(clock_type::now() - e0).count() / static_cast<double>(table.rows.size());

    std::vector<int> all(table.names.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    const svm::Matrix full = to_matrix(table, all);
    const svm::KernelSpec kernel = svm::KernelSpec::gaussian(resolved_gamma(cfg));
    const eval::FoldPlan loo = eval::loo_by_bottle(table.labels, table.bottles);
    report.fold_grouping = loo.grouping;

    std::vector<RepOutcome> reps(static_cast<std::size_t>(cfg.repetitions));
    for (int r = 0; r < cfg.repetitions; ++r) {
        try {
            const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
            std::vector<int> columns = all;
            if (cfg.selection.enabled) {
                selection::RfecvOptions opt;
                opt.folds = cfg.selection.folds;
                opt.step = cfg.selection.step;
                opt.seed = rep_seed;
                opt.C = cfg.svm.C;
                opt.kernel = kernel;
                opt.workers = cfg.workers;
                columns = selection::rfecv_select(full, table.labels, table.bottles, opt).chosen_indices;
            }
            const svm::Matrix X = to_matrix(table, columns);

            struct FoldOut {
                std::size_t correct = 0;
                double train_acc = 0.0, train_sec = 0.0, infer_sec = 0.0;
            };
            std::vector<FoldOut> outs(loo.folds.size());
            parallel_for(loo.folds.size(), cfg.workers, [&](std::size_t f) {
                std::vector<std::size_t> train = loo.folds[f].train;
                Rng(derive_seed(rep_seed, 1000 + f)).shuffle(train);
                const svm::Matrix Xt = take_rows(X, train);
                std::vector<ClassLabel> yt;
                for (std::size_t i : train) yt.push_back(table.labels[i]);
                const auto t0 = clock_type::now();
                const svm::MulticlassModel model = svm::train_ovo(Xt, yt, cfg.svm.C, kernel);
                const auto t1 = clock_type::now();
                outs[f].train_acc = svm::accuracy(model, Xt, yt);
                const auto t2 = clock_type::now();
                for (std::size_t i : loo.folds[f].validation) {
                    if (model.predict(X.row(static_cast<Eigen::Index>(i)).transpose()) == static_cast<int>(table.labels[i])) {
                        ++outs[f].correct;
                    }
                }
                outs[f].train_sec = std::chrono::duration<double>(t1 - t0).count();
                const std::size_t nv = loo.folds[f].validation.size();
                if (nv) outs[f].infer_sec = std::chrono::duration<double>(clock_type::now() - t2).count() / static_cast<double>(nv) + extract_per_row;
            });
            RepOutcome& o = reps[static_cast<std::size_t>(r)];
            std::size_t correct = 0;
            const double nf = static_cast<double>(outs.size());
            for (const FoldOut& f : outs) {
                correct += f.correct;
                o.train_acc += f.train_acc / nf;
                o.train_sec += f.train_sec / nf;
                o.infer_sec += f.infer_sec / nf;
            }
            o.val_acc = static_cast<double>(correct) / static_cast<double>(table.rows.size());
            o.selected = static_cast<int>(columns.size());
        } catch (...) {
            rethrow_for_repetition(r);
        }
    }

    std::vector<double> train_sec, infer_sec;
    for (const RepOutcome& o : reps) {
        report.train_accuracy.push_back(o.train_acc);
        report.validation_accuracy.push_back(o.val_acc);
        report.selected_sizes.push_back(o.selected);
        train_sec.push_back(o.train_sec);
        infer_sec.push_back(o.infer_sec);
    }
    report.train_seconds = eval::median(train_sec);
    report.inference_seconds = eval::median(infer_sec);
    std::vector<int> sizes = report.selected_sizes;
    std::sort(sizes.begin(), sizes.end());
    report.input_size = sizes[sizes.size() / 2];
    report.recognition_seconds =
        windows::full_signal_seconds(ds.manifest.n_points, cfg.plan.start_index, ds.manifest.sample_rate_hz);
    report.preprocessing = cfg.selection.enabled ? "feature extraction + RFECV selection" : "feature extraction";
    report.online = false;
}

void run_rapid(const dataset::Dataset& ds, const ExperimentConfig& cfg, RunReport& report) {
    windows::SweepOptions opt;
    opt.protocol = cfg.protocol;
    opt.folds = cfg.folds;
    opt.repetitions = cfg.repetitions;
    opt.seed = cfg.seed;
    opt.workers = cfg.workers;
    if (cfg.window) opt.windows = {*cfg.window};
    else opt.windows = cfg.sweep_windows;

    windows::WindowSweepResult sw = windows::sweep(ds, cfg.plan, cfg.mlp, opt);
    const int t = cfg.window ? *cfg.window : windows::select_earliest(sw, cfg.epsilon);
    std::size_t pos = 0;
    while (sw.windows[pos].t != t) ++pos;

    std::vector<double> train_sec, infer_sec;
    for (std::size_t r = 0; r < sw.train_accuracy.size(); ++r) {
        report.train_accuracy.push_back(sw.train_accuracy[r][pos]);
        report.validation_accuracy.push_back(sw.validation_accuracy[r][pos]);
        train_sec.push_back(sw.train_seconds[r][pos]);
        infer_sec.push_back(sw.inference_seconds[r][pos]);
    }
    report.train_seconds = eval::median(train_sec);
    report.inference_seconds = eval::median(infer_sec);
    report.window = t;
    report.recognition_seconds = windows::window_to_seconds(t, cfg.plan.delta, ds.manifest.sample_rate_hz);
    report.input_size = dataset::kSensorCount * cfg.plan.length(t);
    report.preprocessing = "none (raw window, min-max scaling)";
    report.online = true;
    report.fold_grouping = cfg.protocol == windows::Protocol::LeaveOneBottleOut ? "bottle" : "group-kfold";
    if (!cfg.window) report.sweep = std::move(sw);
}

} // namespace

RunReport run_experiment(const dataset::Dataset& input, const ExperimentConfig& cfg) {
    validate_config(cfg);
    const dataset::Dataset ds = dataset::restrict_to(input, cfg.experiment);
    if (ds.measurements.empty()) throw InputError("no measurements for " + std::string(to_string(cfg.experiment)));

    RunReport report;
    report.experiment = std::string(to_string(cfg.experiment));
    report.pipeline = std::string(to_string(cfg.pipeline));
    report.repetitions = cfg.repetitions;
    report.seed = cfg.seed;
    report.config_digest = fnv1a_hex(to_json(cfg).dump());
    const bool bottle_folds =
        cfg.pipeline == Pipeline::Conventional || cfg.protocol == windows::Protocol::LeaveOneBottleOut;
    if (cfg.experiment == Experiment::FourClass && bottle_folds) {
        report.fold_note = "ethanol batches are dealt round-robin across bottle folds";
    }
    if (cfg.pipeline == Pipeline::Conventional) run_conventional(ds, cfg, report);
    else run_rapid(ds, cfg, report);
    report.train = eval::summarize(report.train_accuracy);
    report.validation = eval::summarize(report.validation_accuracy);
    return report;
}

json to_json(const RunReport& r) {
    json j = {{"format", "enose.report/1"},
              {"experiment", r.experiment},
              {"pipeline", r.pipeline},
              {"repetitions", r.repetitions},
              {"seed", r.seed},
              {"recognition_seconds", r.recognition_seconds},
              {"preprocessing", r.preprocessing},
              {"online", r.online},
              {"input_size", r.input_size},
              {"selected_sizes", r.selected_sizes},
              {"train_accuracy", r.train_accuracy},
              {"validation_accuracy", r.validation_accuracy},
              {"train_mean", r.train.mean},
              {"train_std", r.train.std},
              {"val_mean", r.validation.mean},
              {"val_std", r.validation.std},
              {"fold_grouping", r.fold_grouping},
              {"fold_note", r.fold_note},
              {"config_digest", r.config_digest}};
    j["window"] = r.window ? json(*r.window) : json(nullptr);
    if (r.sweep) j["sweep"] = windows::to_json(*r.sweep);
    j["metadata"] = {{"train_seconds_median", r.train_seconds}, {"inference_seconds_median", r.inference_seconds}};
    return j;
}

RunReport report_from_json(const json& j) {
    RunReport r;
    try {
        if (j.at("format").get<std::string>() != "enose.report/1") throw ParseError("not an enose report");
        r.experiment = j.at("experiment").get<std::string>();
        r.pipeline = j.at("pipeline").get<std::string>();
        r.repetitions = j.at("repetitions").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.recognition_seconds = j.at("recognition_seconds").get<double>();
        r.preprocessing = j.at("preprocessing").get<std::string>();
        r.online = j.at("online").get<bool>();
        r.input_size = j.at("input_size").get<int>();
        r.selected_sizes = j.value("selected_sizes", std::vector<int>{});
        r.train_accuracy = j.at("train_accuracy").get<std::vector<double>>();
        r.validation_accuracy = j.at("validation_accuracy").get<std::vector<double>>();
        r.fold_grouping = j.value("fold_grouping", "");
        r.fold_note = j.value("fold_note", "");
        r.config_digest = j.value("config_digest", "");
        if (j.contains("window") && !j["window"].is_null()) r.window = j["window"].get<int>();
        if (j.contains("metadata")) {
            r.train_seconds = j["metadata"].value("train_seconds_median", 0.0);
            r.inference_seconds = j["metadata"].value("inference_seconds_median", 0.0);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    for (double a : r.validation_accuracy) {
        if (!(a >= 0.0 && a <= 1.0)) throw IntegrityError("report: accuracy outside [0, 1]");
    }
    if (static_cast<int>(r.validation_accuracy.size()) != r.repetitions) {
        throw IntegrityError("report: repetition count does not match accuracies");
    }
    r.train = eval::summarize(r.train_accuracy);
    r.validation = eval::summarize(r.validation_accuracy);
    return r;
}

namespace {

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string line;
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            if (c) line += "  ";
            line += rows[i][c] + std::string(width[c] - rows[i][c].size(), ' ');
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
        if (i == 0) {
            std::size_t total = 0;
            for (std::size_t w : width) total += w;
            out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
        }
    }
    return out;
}

std::string approach_name(const RunReport& r) {
    std::string s = r.experiment + " " + r.pipeline;
    if (r.window) s += " (t=" + std::to_string(*r.window) + ")";
    return s;
}

} // namespace

std::string format_table(std::span<const RunReport> reports) {
    std::vector<std::vector<std::string>> rows{{"approach", "accuracy (%)", "recognition (s)", "preprocessing",
                                                "online", "input size", "training (s)", "validation (s)"}};
    for (const RunReport& r : reports) {
        rows.push_back({approach_name(r),
                        fixed(100.0 * r.validation.mean, 2) + " +- " + fixed(100.0 * r.validation.std, 2),
                        fixed(r.recognition_seconds, 2), r.preprocessing, r.online ? "yes" : "no",
                        std::to_string(r.input_size), fixed(r.train_seconds, 4), fixed(r.inference_seconds, 6)});
    }
    std::string out = render(rows);
    for (const RunReport& r : reports) {
        if (!r.fold_note.empty()) {
            out += "note: " + r.fold_note + "\n";
            break;
        }
    }
    return out;
}

Comparison compare_reports(const RunReport& a, const RunReport& b, eval::Alternative alternative) {
    if (a.experiment != b.experiment) {
        throw ProtocolError("refusing to compare reports from different experiments (" + a.experiment + " vs " +
                            b.experiment + ")");
    }
    Comparison c;
    c.experiment = a.experiment;
    c.test = eval::mann_whitney_u(a.validation_accuracy, b.validation_accuracy, alternative);
    return c;
}

std::string format_comparison(const RunReport& a, const RunReport& b, const Comparison& c) {
    const std::vector<RunReport> both{a, b};
    std::string out = format_table(both);
    out += "Mann-Whitney U (" + std::string(eval::to_string(c.test.alternative)) + ", " +
           (c.test.method == eval::TestMethod::Exact ? "exact" : "normal approximation") +
           "): U=" + format_double(c.test.u) + " p=" + format_double(c.test.p_value) + "\n";
    return out;
}

} // namespace enose::experiment

#include "enose/windows.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "enose/error.hpp"
#include "enose/parallel.hpp"
#include "enose/rng.hpp"
#include "enose/text.hpp"

namespace enose::windows {

void validate_plan(const WindowPlan& plan) {
    if (plan.delta < 1) throw ConfigError("window delta must be >= 1");
    if (plan.start_index < 0) throw ConfigError("window start must be >= 0");
    if (plan.end_index - plan.start_index < plan.delta) {
        throw ConfigError("window interval [" + std::to_string(plan.start_index) + ", " +
                          std::to_string(plan.end_index) + ") shorter than delta " +
                          std::to_string(plan.delta));
    }
}

std::vector<double> slice_window(const dataset::Measurement& m, const WindowPlan& plan, int t) {
    validate_plan(plan);
    if (t < 1 || t > plan.count()) {
        throw BoundsError("window " + std::to_string(t) + " outside [1, " + std::to_string(plan.count()) + "]");
    }
    const std::size_t len = static_cast<std::size_t>(plan.length(t));
    const auto begin = static_cast<std::size_t>(plan.start_index);
    std::vector<const dataset::SensorTrace*> traces;
    for (const dataset::SensorTrace& tr : m.traces) traces.push_back(&tr);
    std::sort(traces.begin(), traces.end(),
              [](const auto* a, const auto* b) { return a->sensor_index < b->sensor_index; });
    std::vector<double> out;
    out.reserve(len * traces.size());
    for (const dataset::SensorTrace* tr : traces) {
        if (tr->samples.size() < begin + len) {
            throw BoundsError("measurement " + m.id + ": trace " + std::to_string(tr->sensor_index) +
                              " too short for window " + std::to_string(t));
        }
        out.insert(out.end(), tr->samples.begin() + static_cast<std::ptrdiff_t>(begin),
                   tr->samples.begin() + static_cast<std::ptrdiff_t>(begin + len));
    }
    return out;
}

double window_to_seconds(int t, int delta, double rate_hz) {
    if (t < 1 || delta < 1 || !(rate_hz > 0.0)) throw InputError("window_to_seconds: arguments must be positive");
    return static_cast<double>(t) * delta / rate_hz;
}

double full_signal_seconds(int n_points, int start_index, double rate_hz) {
    if (start_index < 0 || n_points <= start_index || !(rate_hz > 0.0)) {
        throw InputError("full_signal_seconds: need 0 <= start < n_points and a positive rate");
    }
    return static_cast<double>(n_points - start_index) / rate_hz;
}

std::vector<ClassLabel> roster_for(Experiment experiment) {
    std::vector<ClassLabel> r{ClassLabel::HQ, ClassLabel::AQ, ClassLabel::LQ};
    if (experiment == Experiment::FourClass) r.push_back(ClassLabel::Ea);
    return r;
}

ClassLabel WindowClassifier::predict(std::span<const double> flat_window) const {
    const Eigen::Map<const mlp::Vector> x(flat_window.data(), static_cast<Eigen::Index>(flat_window.size()));
    return classes.at(static_cast<std::size_t>(mlp::predict(model, x)));
}

ClassLabel WindowClassifier::predict(const dataset::Measurement& m) const {
    return predict(slice_window(m, plan, t));
}

namespace {

mlp::Matrix window_matrix(const dataset::Dataset& ds, std::span<const std::size_t> rows,
                          const WindowPlan& plan, int t) {
    const Eigen::Index width = static_cast<Eigen::Index>(plan.length(t)) * dataset::kSensorCount;
    mlp::Matrix X(static_cast<Eigen::Index>(rows.size()), width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::vector<double> v = slice_window(ds.measurements[rows[r]], plan, t);
        if (static_cast<Eigen::Index>(v.size()) != width) throw InputError("window width mismatch");
        X.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const mlp::Vector>(v.data(), width).transpose();
    }
    return X;
}

std::vector<int> class_indices(const dataset::Dataset& ds, std::span<const std::size_t> rows,
                               std::span<const ClassLabel> classes) {
    std::vector<int> y;
    for (std::size_t r : rows) {
        const auto it = std::find(classes.begin(), classes.end(), ds.measurements[r].label);
        if (it == classes.end()) throw InputError("label outside class roster");
        y.push_back(static_cast<int>(it - classes.begin()));
    }
    return y;
}

[[noreturn]] void rethrow_for_window(int t) {
    const std::string ctx = "window " + std::to_string(t) + ": ";
    try {
        throw;
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + e.what());
    } catch (const Error& e) {
        throw TrainingError(ctx + e.what());
    }
}

} // namespace

WindowClassifier train_window(const dataset::Dataset& ds, std::span<const std::size_t> rows,
                              const WindowPlan& plan, int t, std::span<const ClassLabel> classes,
                              const mlp::TrainConfig& cfg) {
    WindowClassifier wc;
    wc.plan = plan;
    wc.t = t;
    wc.classes.assign(classes.begin(), classes.end());
    const mlp::Matrix X = window_matrix(ds, rows, plan, t);
    const std::vector<int> y = class_indices(ds, rows, classes);
    const auto arch = mlp::build_architecture(t, plan.delta, dataset::kSensorCount,
                                              static_cast<int>(classes.size()));
    wc.model = mlp::train(arch, X, y, cfg);
    return wc;
}

WindowSweepResult sweep(const dataset::Dataset& ds, const WindowPlan& plan,
                        const mlp::TrainConfig& train_cfg, const SweepOptions& options) {
    validate_plan(plan);
    if (options.repetitions < 1) throw ConfigError("sweep: repetitions must be >= 1");
    if (ds.measurements.empty()) throw InputError("sweep: empty dataset");
    for (const dataset::Measurement& m : ds.measurements) {
        if (auto v = dataset::validate_measurement(m); !v.empty()) {
            throw IntegrityError("measurement " + m.id + ": " + v.front());
        }
    }

    std::vector<int> ts = options.windows;
    if (ts.empty()) {
        ts.resize(static_cast<std::size_t>(plan.count()));
        std::iota(ts.begin(), ts.end(), 1);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    for (int t : ts) {
        if (t < 1 || t > plan.count()) throw BoundsError("sweep: window " + std::to_string(t) + " out of range");
    }

    std::set<ClassLabel> present;
    std::vector<ClassLabel> labels;
    std::vector<std::string> groups;
    for (const dataset::Measurement& m : ds.measurements) {
        present.insert(m.label);
        labels.push_back(m.label);
        groups.push_back(m.bottle_id);
    }
    const std::vector<ClassLabel> classes(present.begin(), present.end());
    if (classes.size() < 2) throw TrainingError("sweep: need at least 2 classes");

    std::vector<eval::FoldPlan> plans;
    for (int r = 0; r < options.repetitions; ++r) {
        plans.push_back(options.protocol == Protocol::LeaveOneBottleOut
                            ? eval::loo_by_bottle(labels, groups)
                            : eval::grouped_kfold(groups, options.folds,
                                                  derive_seed(options.seed, static_cast<std::uint64_t>(r))));
    }

    struct Task {
        int rep;
        std::size_t window;
        std::size_t fold;
    };
    std::vector<Task> tasks;
    for (int r = 0; r < options.repetitions; ++r) {
        for (std::size_t w = 0; w < ts.size(); ++w) {
            for (std::size_t f = 0; f < plans[static_cast<std::size_t>(r)].folds.size(); ++f) {
                tasks.push_back({r, w, f});
            }
        }
    }
    struct Outcome {
        double train_acc = 0.0;
        double train_sec = 0.0;
        double infer_sec = 0.0;
        std::size_t correct = 0;
        std::size_t total = 0;
    };
    std::vector<Outcome> outcomes(tasks.size());

    parallel_for(tasks.size(), options.workers, [&](std::size_t i) {
        const Task& task = tasks[i];
        const int t = ts[task.window];
        try {
            const eval::Fold& fold = plans[static_cast<std::size_t>(task.rep)].folds[task.fold];
            mlp::TrainConfig cfg = train_cfg;
            cfg.seed = derive_seed(train_cfg.seed ^ options.seed,
                                   (static_cast<std::uint64_t>(task.rep) << 32) |
                                       (static_cast<std::uint64_t>(t) << 16) | task.fold);
            using clock = std::chrono::steady_clock;
            const auto t0 = clock::now();
            const WindowClassifier wc = train_window(ds, fold.train, plan, t, classes, cfg);
            const auto t1 = clock::now();
            std::size_t train_correct = 0;
            for (std::size_t r : fold.train) {
                if (wc.predict(ds.measurements[r]) == ds.measurements[r].label) ++train_correct;
            }
            Outcome& o = outcomes[i];
            o.train_acc = static_cast<double>(train_correct) / static_cast<double>(fold.train.size());
            const auto t2 = clock::now();
            for (std::size_t r : fold.validation) {
                if (wc.predict(ds.measurements[r]) == ds.measurements[r].label) ++o.correct;
            }
            o.total = fold.validation.size();
            o.train_sec = std::chrono::duration<double>(t1 - t0).count();
            if (o.total) o.infer_sec = std::chrono::duration<double>(clock::now() - t2).count() / static_cast<double>(o.total);
        } catch (...) {
            rethrow_for_window(t);
        }
    });

    WindowSweepResult res;
    res.plan = plan;
    res.repetitions = options.repetitions;
    res.train_accuracy.assign(static_cast<std::size_t>(options.repetitions), std::vector<double>(ts.size(), 0.0));
    res.validation_accuracy = res.train_accuracy;
    res.train_seconds = res.train_accuracy;
    res.inference_seconds = res.train_accuracy;
    {
        std::vector<std::vector<std::size_t>> correct(res.train_accuracy.size(), std::vector<std::size_t>(ts.size(), 0));
        std::vector<std::vector<std::size_t>> total = correct;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            const auto r = static_cast<std::size_t>(tasks[i].rep);
            const std::size_t w = tasks[i].window;
            correct[r][w] += outcomes[i].correct;
            total[r][w] += outcomes[i].total;
            const double nf = static_cast<double>(plans[r].folds.size());
            res.train_accuracy[r][w] += outcomes[i].train_acc / nf;
            res.train_seconds[r][w] += outcomes[i].train_sec / nf;
            res.inference_seconds[r][w] += outcomes[i].infer_sec / nf;
        }
        for (std::size_t r = 0; r < correct.size(); ++r) {
            for (std::size_t w = 0; w < ts.size(); ++w) {
                res.validation_accuracy[r][w] =
                    total[r][w] ? static_cast<double>(correct[r][w]) / static_cast<double>(total[r][w]) : 0.0;
            }
        }
    }

    for (std::size_t w = 0; w < ts.size(); ++w) {
        WindowStats s;
        s.t = ts[w];
        s.seconds = window_to_seconds(ts[w], plan.delta, ds.manifest.sample_rate_hz);
        std::vector<double> tr, va;
        for (std::size_t r = 0; r < res.train_accuracy.size(); ++r) {
            tr.push_back(res.train_accuracy[r][w]);
            va.push_back(res.validation_accuracy[r][w]);
        }
        s.train = eval::summarize(tr);
        s.validation = eval::summarize(va);
        res.windows.push_back(s);
    }
    for (std::size_t r = 0; r < res.train_accuracy.size(); ++r) {
        const auto& va = res.validation_accuracy[r];
        const auto& tr = res.train_accuracy[r];
        ++res.windows[static_cast<std::size_t>(std::max_element(va.begin(), va.end()) - va.begin())].best_count;
        ++res.windows[static_cast<std::size_t>(std::max_element(tr.begin(), tr.end()) - tr.begin())].best_train_count;
    }
    return res;
}

int select_earliest(const WindowSweepResult& result, double epsilon) {
    if (result.windows.empty()) throw InputError("select_earliest: empty sweep");
    if (!(epsilon >= 0.0)) throw InputError("select_earliest: epsilon must be >= 0");
    double best = result.windows.front().validation.mean;
    for (const WindowStats& w : result.windows) best = std::max(best, w.validation.mean);
    // Slack absorbs rounding in (best - epsilon).
    const double threshold = best - epsilon - 1e-12;
    for (const WindowStats& w : result.windows) {
        if (w.validation.mean >= threshold) return w.t;
    }
    return result.windows.back().t;
}

nlohmann::json to_json(const WindowSweepResult& result) {
    nlohmann::json j;
    j["format"] = "enose.sweep/1";
    j["plan"] = {{"start_index", result.plan.start_index},
                 {"end_index", result.plan.end_index},
                 {"delta", result.plan.delta},
                 {"count", result.plan.count()}};
    j["repetitions"] = result.repetitions;
    nlohmann::json ws = nlohmann::json::array();
    for (const WindowStats& w : result.windows) {
        ws.push_back({{"t", w.t},
                      {"seconds", w.seconds},
                      {"train_mean", w.train.mean},
                      {"train_std", w.train.std},
                      {"val_mean", w.validation.mean},
                      {"val_std", w.validation.std},
                      {"best_freq", w.best_count},
                      {"best_train_freq", w.best_train_count}});
    }
    j["windows"] = ws;
    return j;
}

std::string format_sweep_csv(const WindowSweepResult& result) {
    std::string out = "t,seconds,train_mean,train_std,val_mean,val_std,best_freq,best_train_freq\n";
    for (const WindowStats& w : result.windows) {
        out += std::to_string(w.t) + "," + format_double(w.seconds) + "," + format_double(w.train.mean) +
               "," + format_double(w.train.std) + "," + format_double(w.validation.mean) + "," +
               format_double(w.validation.std) + "," + std::to_string(w.best_count) + "," +
               std::to_string(w.best_train_count) + "\n";
    }
    return out;
}

OnlineSession::OnlineSession(WindowClassifier classifier)
    : classifier_(std::move(classifier)), buffers_(dataset::kSensorCount) {
    validate_plan(classifier_.plan);
    if (classifier_.t < 1 || classifier_.t > classifier_.plan.count()) {
        throw BoundsError("online session: window out of range");
    }
    if (classifier_.classes.size() != static_cast<std::size_t>(classifier_.model.architecture.outputs())) {
        throw ConfigError("online session: class roster does not match model outputs");
    }
    for (auto& b : buffers_) b.reserve(static_cast<std::size_t>(frames_needed()));
}

std::optional<ClassLabel> OnlineSession::feed(std::span<const double> sensor_frame) {
    if (sensor_frame.size() != buffers_.size()) {
        throw InputError("online frame has " + std::to_string(sensor_frame.size()) + " values, expected " +
                         std::to_string(buffers_.size()));
    }
    for (double v : sensor_frame) {
        if (!std::isfinite(v)) throw InputError("online frame holds a non-finite value");
    }
    ++frames_;
    if (emitted_) return std::nullopt;
    for (std::size_t s = 0; s < buffers_.size(); ++s) buffers_[s].push_back(sensor_frame[s]);
    if (frames_ < frames_needed()) return std::nullopt;

    std::vector<double> flat;
    flat.reserve(buffers_.size() * buffers_.front().size());
    for (const auto& b : buffers_) flat.insert(flat.end(), b.begin(), b.end());
    emitted_ = classifier_.predict(flat);
    return emitted_;
}

} // namespace enose::windows

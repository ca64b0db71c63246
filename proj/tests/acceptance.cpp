// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when all pass).

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "enose/dataset.hpp"
#include "enose/error.hpp"
#include "enose/eval.hpp"
#include "enose/experiment.hpp"
#include "enose/features.hpp"
#include "enose/mlp.hpp"
#include "enose/rng.hpp"
#include "enose/selection.hpp"
#include "enose/svm.hpp"
#include "enose/windows.hpp"

using namespace enose;
using clock_type = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "failed: ";
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

const dataset::Dataset& default_dataset() {
    static const dataset::Dataset ds = dataset::generate_synthetic(dataset::default_generator_config());
    return ds;
}

// 1 -------------------------------------------------------------------------
Outcome window_arithmetic() {
    Outcome o;
    const double w1 = windows::window_to_seconds(1, 50, 18.5);
    const double w13 = windows::window_to_seconds(13, 50, 18.5);
    const double w24 = windows::window_to_seconds(24, 50, 18.5);
    const windows::WindowPlan plan{150, 3300, 50};
    const double full = windows::full_signal_seconds(dataset::kCanonicalPoints, 150, 18.5);
    o.require(std::abs(w1 - 2.70) <= 0.01, "t=1 gives " + fmt(w1));
    o.require(std::abs(w13 - 35.13) <= 0.01, "t=13 gives " + fmt(w13));
    o.require(std::abs(w24 - 64.86) <= 0.01, "t=24 gives " + fmt(w24));
    o.require(plan.count() == 63, "window count " + std::to_string(plan.count()));
    o.require(std::abs(full - 171.89) <= 0.01, "conventional span " + fmt(full));
    o.detail << (o.pass ? "" : " | ") << "t=1 " << fmt(w1, 3) << " s, t=13 " << fmt(w13, 3) << " s, t=24 "
             << fmt(w24, 3) << " s, " << plan.count() << " windows, conventional span (" << dataset::kCanonicalPoints
             << "-150)/18.5 = " << fmt(full, 3) << " s";
    return o;
}

// 2 -------------------------------------------------------------------------
Outcome parameter_counts() {
    Outcome o;
    const auto c1 = mlp::layer_param_counts(mlp::build_architecture(1, 50, 6, 4));
    const std::vector<long long> want{30100, 3030, 930, 930, 930, 930, 930, 124};
    o.require(c1 == want, "window-1 layer counts differ");
    const long long l12 = mlp::layer_param_counts(mlp::build_architecture(12, 50, 6, 4))[0];
    const long long l63 = mlp::layer_param_counts(mlp::build_architecture(63, 50, 6, 4))[0];
    o.require(l12 == 360100, "t=12 layer 1 = " + std::to_string(l12));
    o.require(l63 == 1890100, "t=63 layer 1 = " + std::to_string(l63));
    o.detail << (o.pass ? "" : " | ") << "t=1 layers";
    for (long long c : c1) o.detail << " " << c;
    o.detail << "; t=12 layer 1 " << l12 << "; t=63 layer 1 " << l63;
    return o;
}

// 3 -------------------------------------------------------------------------
Outcome fingerprint_shape() {
    Outcome o;
    const auto& ds = default_dataset();
    const auto a = features::extract_fingerprint(ds.measurements.front());
    const auto b = features::extract_fingerprint(ds.measurements.front());
    o.require(a.values.size() == 138, "fingerprint has " + std::to_string(a.values.size()) + " values");
    o.require(a.names.size() == 138, "fingerprint has " + std::to_string(a.names.size()) + " names");
    o.require(std::set<std::string>(a.names.begin(), a.names.end()).size() == a.names.size(), "names repeat");
    o.require(a.names == b.names && a.values == b.values, "repeat extraction differs");
    o.require(a.names == features::fingerprint_names(features::default_catalog()), "names differ from catalog order");

    dataset::Dataset few = ds;
    few.measurements.resize(12);
    const auto t1 = features::extract_all(few, 1);
    const auto tn = features::extract_all(few, std::max(2u, workers()));
    o.require(t1.names == a.names && tn.names == a.names, "table header differs");
    o.require(t1.rows == tn.rows, "table rows depend on worker count");
    o.detail << (o.pass ? "" : " | ") << a.names.size() << " named features, first " << a.names.front() << ", last "
             << a.names.back();
    return o;
}

// 4 -------------------------------------------------------------------------
Outcome backprop() {
    Outcome o;
    const auto t0 = clock_type::now();
    Rng rng(2024);
    double worst = 0.0;
    const int trials = 25;
    for (int k = 0; k < trials; ++k) {
        mlp::MlpArchitecture a;
        a.layer_sizes.push_back(1 + static_cast<int>(rng.below(6)));
        const int hidden = static_cast<int>(rng.below(4));
        for (int h = 0; h < hidden; ++h) a.layer_sizes.push_back(1 + static_cast<int>(rng.below(8)));
        const int outputs = 2 + static_cast<int>(rng.below(3));
        a.layer_sizes.push_back(outputs);
        mlp::Vector x(a.inputs());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
        const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(outputs)));
        const double err = mlp::gradient_check(a, x, label, 1e-5, 100 + static_cast<std::uint64_t>(k));
        worst = std::max(worst, err);
    }
    const double elapsed = seconds_since(t0);
    o.require(worst < 1e-4, "max relative error " + std::to_string(worst));
    o.require(elapsed < 60.0, "took " + fmt(elapsed, 1) + " s");
    o.detail << (o.pass ? "" : " | ") << trials << " architectures, max relative error " << worst << ", "
             << fmt(elapsed, 2) << " s";
    return o;
}

// 5 -------------------------------------------------------------------------
double kernel_oracle(const svm::KernelSpec& k, const svm::Vector& a, const svm::Vector& b) {
    if (k.kind == svm::KernelSpec::Kind::Linear) return a.dot(b);
    return std::exp(-k.gamma * (a - b).squaredNorm());
}

Outcome smo() {
    Outcome o;
    const double tol = 1e-3;
    Rng rng(77);
    int violations = 0, objective_drops = 0, points = 0;
    for (int k = 0; k < 50; ++k) {
        const int n = 8 + static_cast<int>(rng.below(33));
        const int d = 1 + static_cast<int>(rng.below(4));
        const double C = std::vector<double>{0.1, 1.0, 10.0, 100.0}[rng.below(4)];
        const svm::KernelSpec kern =
            k % 5 == 0 ? svm::KernelSpec::linear() : svm::KernelSpec::gaussian(0.05 + 2.0 * rng.uniform(0.0, 1.0));
        const double shift = rng.uniform(0.0, 2.0);
        svm::Matrix X(n, d);
        std::vector<int> y;
        for (int i = 0; i < n; ++i) {
            const int label = i % 2 ? 1 : -1;
            y.push_back(label);
            for (int j = 0; j < d; ++j) X(i, j) = rng.normal() + (j == 0 ? shift * label : 0.0);
        }
        svm::SmoTrace trace;
        const auto s = svm::solve_dual(X, y, C, kern, {tol, 10'000'000, true}, &trace);
        for (int i = 0; i < n; ++i) {
            double f = s.bias;
            for (int j = 0; j < n; ++j) f += s.alpha(j) * y[static_cast<std::size_t>(j)] * kernel_oracle(kern, X.row(j), X.row(i));
            const double yf = y[static_cast<std::size_t>(i)] * f;
            const double a = s.alpha(i);
            bool ok = a >= 0.0 && a <= C;
            if (a <= 0.0) ok = ok && yf >= 1.0 - tol;
            else if (a >= C) ok = ok && yf <= 1.0 + tol;
            else ok = ok && std::abs(yf - 1.0) <= tol;
            if (!ok) ++violations;
            ++points;
        }
        for (std::size_t t = 1; t < trace.objective.size(); ++t) {
            if (trace.objective[t] < trace.objective[t - 1] - 1e-12) ++objective_drops;
        }
    }
    svm::Matrix xor_x(4, 2);
    xor_x << 0, 0, 1, 1, 0, 1, 1, 0;
    const std::vector<int> xor_y{1, 1, -1, -1};
    const auto m = svm::train_binary_svm(xor_x, xor_y, 10.0, svm::KernelSpec::gaussian(1.0));
    int xor_ok = 0;
    for (int i = 0; i < 4; ++i) xor_ok += m.predict(xor_x.row(i).transpose()) == xor_y[static_cast<std::size_t>(i)];

    o.require(violations == 0, std::to_string(violations) + " KKT violations");
    o.require(objective_drops == 0, std::to_string(objective_drops) + " objective decreases");
    o.require(xor_ok == 4, "XOR training accuracy " + std::to_string(xor_ok) + "/4");
    o.detail << (o.pass ? "" : " | ") << "50 datasets, " << points << " points within tol 1e-3, dual objective "
             << "monotone, XOR " << xor_ok << "/4";
    return o;
}

// 6 -------------------------------------------------------------------------
Outcome mann_whitney() {
    Outcome o;
    Rng rng(6);
    int pairs = 0, mismatches = 0, identity = 0;
    for (int n1 = 1; n1 <= 9; ++n1) {
        for (int n2 = 1; n1 + n2 <= 10; ++n2) {
            const int n = n1 + n2;
            std::vector<double> pool(static_cast<std::size_t>(n));
            for (auto& v : pool) v = rng.normal();
            const std::vector<double> a(pool.begin(), pool.begin() + n1), b(pool.begin() + n1, pool.end());
            auto u_of = [&](unsigned mask) {
                double u = 0;
                for (int i = 0; i < n; ++i) {
                    if (!(mask >> i & 1u)) continue;
                    for (int j = 0; j < n; ++j) {
                        if (!(mask >> j & 1u) && pool[static_cast<std::size_t>(i)] > pool[static_cast<std::size_t>(j)]) u += 1;
                    }
                }
                return u;
            };
            const double u = u_of((1u << n1) - 1u);
            const double mid = n1 * n2 / 2.0;
            double le = 0, ge = 0, far = 0, total = 0;
            for (unsigned mask = 0; mask < (1u << n); ++mask) {
                if (std::popcount(mask) != n1) continue;
                const double v = u_of(mask);
                total += 1;
                le += v <= u;
                ge += v >= u;
                far += std::abs(v - mid) >= std::abs(u - mid);
            }
            const auto less = eval::mann_whitney_u(a, b, eval::Alternative::Less, eval::TestMethod::Exact);
            const auto greater = eval::mann_whitney_u(a, b, eval::Alternative::Greater, eval::TestMethod::Exact);
            const auto two = eval::mann_whitney_u(a, b, eval::Alternative::TwoSided, eval::TestMethod::Exact);
            auto close = [](double x, double y) { return std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(y)); };
            if (less.u != u || !close(less.p_value, le / total) || !close(greater.p_value, ge / total) ||
                !close(two.p_value, std::min(1.0, far / total))) {
                ++mismatches;
            }
            for (const auto& r : {less, greater, two}) {
                if (r.u + r.u_other != n1 * n2) ++identity;
            }
            ++pairs;
        }
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " size pairs disagree with enumeration");
    o.require(identity == 0, std::to_string(identity) + " U identity failures");
    o.detail << (o.pass ? "" : " | ") << pairs << " size pairs (n1+n2 <= 10) match full enumeration; U_a + U_b = n1*n2";
    return o;
}

// 7 -------------------------------------------------------------------------
Outcome pca() {
    Outcome o;
    Rng rng(7);
    double ortho = 0.0, recon = 0.0;
    for (int k = 0; k < 10; ++k) {
        const int n = 10 + static_cast<int>(rng.below(40));
        const int d = 2 + static_cast<int>(rng.below(7));
        Eigen::MatrixXd X(n, d);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) X(i, j) = rng.normal() * (1 + j) + (j ? 0.5 * X(i, j - 1) : 0.0);
        }
        const int r = std::min(n - 1, d);
        const auto m = eval::pca_fit(X, r);
        ortho = std::max(ortho, (m.components * m.components.transpose() - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff());
        const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
        recon = std::max(recon, (eval::pca_scores(m, X) * m.components - centered).cwiseAbs().maxCoeff());
    }
    Eigen::MatrixXd line(6, 3);
    for (int i = 0; i < 6; ++i) line.row(i) << i, 2.0 * i, -0.5 * i;
    const double ratio = eval::pca_fit(line, 1).explained_ratio(0);
    o.require(ortho < 1e-8, "orthonormality error " + std::to_string(ortho));
    o.require(recon < 1e-8, "reconstruction error " + std::to_string(recon));
    o.require(std::abs(ratio - 1.0) < 1e-9, "rank-1 ratio " + std::to_string(ratio));
    o.detail << (o.pass ? "" : " | ") << "orthonormality " << ortho << ", reconstruction " << recon
             << ", rank-1 first ratio " << fmt(ratio, 12);
    return o;
}

// 8 -------------------------------------------------------------------------
Outcome end_to_end() {
    Outcome o;
    const auto t0 = clock_type::now();
    const auto& ds = default_dataset();
    const int reps = 5;
    std::ostringstream d;

    for (Experiment e : {Experiment::ThreeClass, Experiment::FourClass}) {
        const std::string tag(to_string(e));
        experiment::ExperimentConfig conv;
        conv.experiment = e;
        conv.pipeline = experiment::Pipeline::Conventional;
        conv.repetitions = reps;
        conv.seed = 1;
        conv.workers = workers();
        const auto rc = experiment::run_experiment(ds, conv);

        experiment::ExperimentConfig rapid = conv;
        rapid.pipeline = experiment::Pipeline::Rapid;
        rapid.window = 1;
        rapid.mlp.epochs = 100;
        const auto rr = experiment::run_experiment(ds, rapid);

        experiment::ExperimentConfig sweep = rapid;
        sweep.window.reset();
        sweep.sweep_windows = {1, 2, 4, 8}; // t=8 (21.6 s) lies past the 1/10 bound
        sweep.protocol = windows::Protocol::GroupedKFold;
        sweep.folds = 5;
        const auto rs = experiment::run_experiment(ds, sweep);

        o.require(rc.validation.mean >= 0.95, tag + " conventional accuracy " + fmt(rc.validation.mean));
        o.require(rr.validation.mean >= 0.95, tag + " rapid t=1 accuracy " + fmt(rr.validation.mean));
        o.require(rs.recognition_seconds < rc.recognition_seconds / 10.0,
                  tag + " earliest window " + fmt(rs.recognition_seconds, 2) + " s");
        d << "; " << tag << ": conventional " << fmt(100 * rc.validation.mean, 2) << "+-"
          << fmt(100 * rc.validation.std, 2) << "% (" << fmt(rc.recognition_seconds, 2) << " s), rapid t=1 "
          << fmt(100 * rr.validation.mean, 2) << "+-" << fmt(100 * rr.validation.std, 2)
          << "%, earliest t=" << *rs.window << " (" << fmt(rs.recognition_seconds, 2) << " s, "
          << fmt(rc.recognition_seconds / rs.recognition_seconds, 1) << "x sooner)";
    }
    const double elapsed = seconds_since(t0);
    o.require(elapsed <= 900.0, "took " + fmt(elapsed, 0) + " s");
    o.detail << (o.pass ? "" : " | ") << reps << " repetitions" << d.str() << "; " << fmt(elapsed, 0) << " s";
    return o;
}

// 9 -------------------------------------------------------------------------
Outcome online_batch() {
    Outcome o;
    const auto& ds = default_dataset();
    const windows::WindowPlan plan;
    std::vector<std::size_t> rows(ds.measurements.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    mlp::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 3;
    int checked = 0, early = 0, late = 0, mismatched = 0;
    for (int t : {1, 5, 13}) {
        const auto wc = windows::train_window(ds, rows, plan, t, windows::roster_for(Experiment::FourClass), cfg);
        for (const auto& m : ds.measurements) {
            windows::OnlineSession s(wc);
            const ClassLabel batch = wc.predict(windows::slice_window(m, plan, t));
            std::optional<ClassLabel> got;
            int emitted_at = 0;
            std::vector<double> frame(m.traces.size());
            for (int i = 0; i < plan.length(t) + 5; ++i) {
                for (const auto& tr : m.traces) {
                    frame[static_cast<std::size_t>(tr.sensor_index - 1)] = tr.samples[static_cast<std::size_t>(plan.start_index + i)];
                }
                const auto r = s.feed(frame);
                if (r) {
                    if (got) ++late;
                    got = r;
                    emitted_at = i + 1;
                }
            }
            if (emitted_at < plan.length(t)) ++early;
            if (emitted_at > plan.length(t)) ++late;
            if (!got || *got != batch) ++mismatched;
            ++checked;
        }
    }
    o.require(early == 0 && late == 0, std::to_string(early + late) + " emissions off frame t*delta");
    o.require(mismatched == 0, std::to_string(mismatched) + " online labels differ from batch");
    o.detail << (o.pass ? "" : " | ") << checked << " streams over t in {1, 5, 13}: all emitted at frame t*50 with the batch label";
    return o;
}

// 10 ------------------------------------------------------------------------
Outcome rfecv() {
    Outcome o;
    const int informative = 5, noise = 133, classes = 6, groups = 5, per_group = 4;
    int worst_kept_noise = 0, missing = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        const int n = classes * groups * per_group, d = informative + noise;
        svm::Matrix X(n, d);
        std::vector<int> y;
        std::vector<std::string> g;
        int r = 0;
        for (int c = 0; c < classes; ++c) {
            for (int gi = 0; gi < groups; ++gi) {
                for (int k = 0; k < per_group; ++k, ++r) {
                    y.push_back(c);
                    g.push_back(std::to_string(c) + "-" + std::to_string(gi));
                    for (int j = 0; j < d; ++j) X(r, j) = rng.normal();
                    for (int j = 0; j < informative; ++j) X(r, j) = 3.0 * (c == j + 1) + 0.5 * rng.normal();
                }
            }
        }
        selection::RfecvOptions opt;
        opt.seed = seed;
        opt.kernel = svm::KernelSpec::gaussian(0.1);
        opt.workers = workers();
        const auto res = selection::rfecv_select(X, y, g, opt);
        int kept_noise = 0;
        for (int j : res.chosen_indices) kept_noise += j >= informative;
        for (int j = 0; j < informative; ++j) {
            missing += !std::binary_search(res.chosen_indices.begin(), res.chosen_indices.end(), j);
        }
        worst_kept_noise = std::max(worst_kept_noise, kept_noise);
    }
    const double eliminated = 1.0 - static_cast<double>(worst_kept_noise) / noise;
    o.require(missing == 0, std::to_string(missing) + " planted features dropped");
    o.require(eliminated >= 0.8, "only " + fmt(100 * eliminated, 1) + "% of noise eliminated");
    o.detail << (o.pass ? "" : " | ") << "10 seeds: all " << informative << " planted features kept, worst case "
             << worst_kept_noise << " of " << noise << " noise features kept (" << fmt(100 * eliminated, 1)
             << "% eliminated)";
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"window arithmetic", window_arithmetic},
        {"MLP parameter counts", parameter_counts},
        {"fingerprint shape", fingerprint_shape},
        {"backprop gradient check", backprop},
        {"SMO correctness", smo},
        {"Mann-Whitney exact oracle", mann_whitney},
        {"PCA correctness", pca},
        {"end-to-end synthetic experiment", end_to_end},
        {"online/batch equivalence", online_batch},
        {"RFECV planted features", rfecv},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = clock_type::now();
        bool pass = false;
        std::string detail;
        try {
            Outcome o = criteria[i].second();
            pass = o.pass;
            detail = o.detail.str();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << " (" << fmt(seconds_since(t0), 1)
                  << " s): " << detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed;
}

#include "enose/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "enose/error.hpp"
#include "enose/rng.hpp"

namespace enose::eval {

// ---------------------------------------------------------------------------
// Folds

namespace {

Fold fold_for(const std::set<std::string>& held_out, std::span<const std::string> groups) {
    Fold f;
    for (std::size_t r = 0; r < groups.size(); ++r) {
        (held_out.count(groups[r]) ? f.validation : f.train).push_back(r);
    }
    return f;
}

} // namespace

FoldPlan loo_by_bottle(std::span<const ClassLabel> labels, std::span<const std::string> groups) {
    if (labels.size() != groups.size()) throw InputError("loo_by_bottle: labels/groups size mismatch");
    std::set<std::string> bottles, batches;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        (is_wine(labels[r]) ? bottles : batches).insert(groups[r]);
    }
    for (const std::string& b : batches) {
        if (bottles.count(b)) throw IntegrityError("group " + b + " mixes wine and ethanol rows");
    }
    if (bottles.size() < 2) {
        throw ProtocolError("leave-one-bottle-out needs at least 2 wine bottles, found " +
                            std::to_string(bottles.size()));
    }
    std::vector<std::set<std::string>> held(bottles.size());
    std::size_t i = 0;
    for (const std::string& b : bottles) held[i++].insert(b);
    i = 0;
    for (const std::string& k : batches) held[i++ % held.size()].insert(k);

    FoldPlan plan;
    plan.grouping = "bottle";
    for (const auto& h : held) plan.folds.push_back(fold_for(h, groups));
    return plan;
}

FoldPlan loo_by_bottle(const dataset::Dataset& ds) {
    std::vector<ClassLabel> labels;
    std::vector<std::string> groups;
    for (const dataset::Measurement& m : ds.measurements) {
        labels.push_back(m.label);
        groups.push_back(m.bottle_id);
    }
    return loo_by_bottle(labels, groups);
}

FoldPlan grouped_kfold(std::span<const std::string> groups, int k, std::uint64_t seed) {
    const std::set<std::string> distinct(groups.begin(), groups.end());
    if (k < 2) throw ProtocolError("grouped k-fold needs k >= 2");
    if (static_cast<std::size_t>(k) > distinct.size()) {
        throw ProtocolError("grouped k-fold: k=" + std::to_string(k) + " exceeds " +
                            std::to_string(distinct.size()) + " groups");
    }
    std::vector<std::string> order(distinct.begin(), distinct.end());
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::set<std::string>> held(static_cast<std::size_t>(k));
    for (std::size_t p = 0; p < order.size(); ++p) held[p % held.size()].insert(order[p]);

    FoldPlan plan;
    plan.grouping = "group-kfold";
    plan.seed = seed;
    for (const auto& h : held) plan.folds.push_back(fold_for(h, groups));
    return plan;
}

std::vector<std::string> check_fold_plan(const FoldPlan& plan, std::span<const std::string> groups) {
    std::vector<std::string> out;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const Fold& fold = plan.folds[f];
        std::set<std::size_t> train_rows(fold.train.begin(), fold.train.end());
        std::set<std::string> train_groups;
        for (std::size_t r : fold.train) train_groups.insert(groups[r]);
        for (std::size_t r : fold.validation) {
            if (train_rows.count(r)) out.push_back("fold " + std::to_string(f) + ": row " + std::to_string(r) + " on both sides");
            if (train_groups.count(groups[r])) {
                out.push_back("fold " + std::to_string(f) + ": group " + groups[r] + " leaks into training");
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

Summary summarize(std::span<const double> values) {
    Summary s;
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::string_view to_string(Alternative a) {
    switch (a) {
    case Alternative::TwoSided: return "two-sided";
    case Alternative::Less: return "less";
    case Alternative::Greater: return "greater";
    }
    return "?";
}

Alternative parse_alternative(std::string_view text) {
    if (text == "two-sided") return Alternative::TwoSided;
    if (text == "less") return Alternative::Less;
    if (text == "greater") return Alternative::Greater;
    throw ParseError("unknown alternative '" + std::string(text) + "'");
}

std::vector<double> u_null_counts(int n1, int n2) {
    // table[a][b] holds the count vector for sample sizes (a, b); the largest
    // observation either belongs to the first sample (adding b to U) or not.
    std::vector<std::vector<std::vector<double>>> table(
        static_cast<std::size_t>(n1 + 1), std::vector<std::vector<double>>(static_cast<std::size_t>(n2 + 1)));
    for (int a = 0; a <= n1; ++a) {
        for (int b = 0; b <= n2; ++b) {
            std::vector<double>& cur = table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            cur.assign(static_cast<std::size_t>(a * b + 1), 0.0);
            if (a == 0 || b == 0) {
                cur[0] = 1.0;
                continue;
            }
            const auto& with_a = table[static_cast<std::size_t>(a - 1)][static_cast<std::size_t>(b)];
            const auto& with_b = table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b - 1)];
            for (std::size_t u = 0; u < with_a.size(); ++u) cur[u + static_cast<std::size_t>(b)] += with_a[u];
            for (std::size_t u = 0; u < with_b.size(); ++u) cur[u] += with_b[u];
        }
    }
    return table[static_cast<std::size_t>(n1)][static_cast<std::size_t>(n2)];
}

StatTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                              Alternative alternative, std::optional<TestMethod> force) {
    if (a.empty() || b.empty()) throw InputError("mann_whitney_u: empty sample");
    const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;

    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(n);
    for (double v : a) pooled.emplace_back(v, 0);
    for (double v : b) pooled.emplace_back(v, 1);
    for (const auto& [v, _] : pooled) {
        if (!std::isfinite(v)) throw InputError("mann_whitney_u: non-finite value");
    }
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });

    double rank_sum_a = 0.0, tie_term = 0.0;
    bool ties = false;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pooled[j].first == pooled[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        const double t = static_cast<double>(j - i);
        if (t > 1) {
            ties = true;
            tie_term += t * t * t - t;
        }
        for (std::size_t k = i; k < j; ++k) {
            if (pooled[k].second == 0) rank_sum_a += midrank;
        }
        i = j;
    }

    StatTestResult res;
    res.alternative = alternative;
    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
    res.u = rank_sum_a - dn1 * (dn1 + 1.0) / 2.0;
    res.u_other = dn1 * dn2 - res.u;

    const bool exact_ok = !ties;
    const bool use_exact = exact_ok && (force ? *force == TestMethod::Exact : n <= 12);
    double p = 1.0;
    if (use_exact) {
        res.method = TestMethod::Exact;
        const std::vector<double> counts = u_null_counts(static_cast<int>(n1), static_cast<int>(n2));
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        const auto u = static_cast<std::size_t>(std::lround(res.u));
        double lower = 0.0, upper = 0.0;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if (k <= u) lower += counts[k];
            if (k >= u) upper += counts[k];
        }
        lower /= total;
        upper /= total;
        switch (alternative) {
        case Alternative::Less: p = lower; break;
        case Alternative::Greater: p = upper; break;
        case Alternative::TwoSided: p = std::min(1.0, 2.0 * std::min(lower, upper)); break;
        }
    } else {
        res.method = TestMethod::Normal;
        const double dn = static_cast<double>(n);
        const double mu = dn1 * dn2 / 2.0;
        const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
        if (var <= 0.0) {
            p = 1.0;
        } else {
            const double sigma = std::sqrt(var);
            auto upper_tail = [](double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); };
            switch (alternative) {
            case Alternative::Less: p = 1.0 - upper_tail((res.u - mu + 0.5) / sigma); break;
            case Alternative::Greater: p = upper_tail((res.u - mu - 0.5) / sigma); break;
            case Alternative::TwoSided: {
                const double umax = std::max(res.u, res.u_other);
                p = std::min(1.0, 2.0 * upper_tail((umax - mu - 0.5) / sigma));
                break;
            }
            }
        }
    }
    res.p_value = std::clamp(p, std::numeric_limits<double>::min(), 1.0);
    return res;
}

// ---------------------------------------------------------------------------
// PCA

PcaModel pca_fit(const Eigen::MatrixXd& X, int n_components) {
    const Eigen::Index rows = X.rows(), cols = X.cols();
    if (rows < 2) throw InputError("pca needs at least 2 rows");
    if (n_components < 1 || n_components > std::min(rows - 1, cols)) {
        throw InputError("pca: n_components=" + std::to_string(n_components) + " outside [1, " +
                         std::to_string(std::min(rows - 1, cols)) + "]");
    }
    if (!X.allFinite()) throw InputError("pca: non-finite input");
    PcaModel m;
    m.mean = X.colwise().mean().transpose();
    const Eigen::MatrixXd centered = X.rowwise() - m.mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(rows - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericalError("pca: eigen-decomposition failed");

    const Eigen::VectorXd values = solver.eigenvalues().cwiseMax(0.0);
    const double total = values.sum();
    m.components.resize(n_components, cols);
    m.explained_variance.resize(n_components);
    m.explained_ratio.resize(n_components);
    for (int c = 0; c < n_components; ++c) {
        const Eigen::Index src = cols - 1 - c; // eigenvalues come ascending
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        m.components.row(c) = v.transpose();
        m.explained_variance(c) = values(src);
        m.explained_ratio(c) = total > 0.0 ? values(src) / total : 0.0;
    }
    return m;
}

Eigen::MatrixXd pca_scores(const PcaModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.mean.size()) throw InputError("pca_scores: column count mismatch");
    return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

} // namespace enose::eval

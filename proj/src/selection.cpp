#include "enose/selection.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "enose/error.hpp"
#include "enose/eval.hpp"
#include "enose/parallel.hpp"

namespace enose::selection {

namespace {

svm::Matrix columns(const svm::Matrix& X, std::span<const int> cols) {
    svm::Matrix out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = X.col(cols[c]);
    return out;
}

svm::Matrix rows_of(const svm::Matrix& X, std::span<const std::size_t> rows) {
    svm::Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

} // namespace

Ranking rfe_rank(const svm::Matrix& X, std::span<const ClassLabel> y, int step, double C) {
    return rfe_rank(X, std::span<const int>(svm::class_ids(y)), step, C);
}

Ranking rfe_rank(const svm::Matrix& X, std::span<const int> y, int step, double C) {
    if (step < 1) throw ConfigError("rfe step must be >= 1");
    const int n = static_cast<int>(X.cols());
    std::vector<int> alive(static_cast<std::size_t>(n));
    std::iota(alive.begin(), alive.end(), 0);

    Ranking r;
    r.rank.assign(static_cast<std::size_t>(n), 0);
    while (!alive.empty()) {
        const svm::Matrix sub = columns(X, alive);
        const svm::MulticlassModel model = svm::train_ovo(sub, y, C, svm::KernelSpec::linear());
        std::vector<double> score(alive.size(), 0.0);
        for (const svm::BinaryModel& pair : model.pairs) {
            const svm::Vector w = pair.linear_weights();
            for (std::size_t f = 0; f < alive.size(); ++f) {
                score[f] += w(static_cast<Eigen::Index>(f)) * w(static_cast<Eigen::Index>(f));
            }
        }
        std::vector<std::size_t> order(alive.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (score[a] != score[b]) return score[a] < score[b];
            return alive[a] < alive[b];
        });
        const std::size_t drop = std::min<std::size_t>(static_cast<std::size_t>(step), alive.size());
        std::vector<int> removed;
        for (std::size_t k = 0; k < drop; ++k) removed.push_back(alive[order[k]]);
        for (int f : removed) {
            r.elimination_order.push_back(f);
            r.rank[static_cast<std::size_t>(f)] = static_cast<int>(r.elimination_order.size());
        }
        std::erase_if(alive, [&](int f) {
            return std::find(removed.begin(), removed.end(), f) != removed.end();
        });
    }
    return r;
}

std::vector<int> surviving_features(const Ranking& ranking, int size) {
    const int n = static_cast<int>(ranking.elimination_order.size());
    if (size < 0 || size > n) throw BoundsError("subset size out of range");
    std::vector<int> out(ranking.elimination_order.end() - size, ranking.elimination_order.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t pick_size(std::span<const int> sizes, std::span<const double> curve) {
    if (sizes.empty() || sizes.size() != curve.size()) throw InputError("pick_size: bad curve");
    std::size_t best = 0;
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (curve[i] > curve[best] || (curve[i] == curve[best] && sizes[i] < sizes[best])) best = i;
    }
    return best;
}

SelectionResult rfecv_select(const svm::Matrix& X, std::span<const ClassLabel> y,
                             std::span<const std::string> groups, const RfecvOptions& options) {
    return rfecv_select(X, std::span<const int>(svm::class_ids(y)), groups, options);
}

SelectionResult rfecv_select(const svm::Matrix& X, std::span<const int> y,
                             std::span<const std::string> groups, const RfecvOptions& options) {
    if (options.folds < 2) throw ProtocolError("rfecv needs at least 2 folds");
    const std::set<std::string> distinct(groups.begin(), groups.end());
    if (distinct.size() < static_cast<std::size_t>(options.folds)) {
        throw ProtocolError("rfecv: " + std::to_string(distinct.size()) + " groups for " +
                            std::to_string(options.folds) + " folds");
    }
    SelectionResult res;
    const svm::Matrix Z = svm::standardize_fit(X).apply(X);
    res.ranking = rfe_rank(Z, y, options.step, options.C);

    const int n = static_cast<int>(X.cols());
    for (int s = n; s > 0; s -= options.step) res.sizes.push_back(s);

    const eval::FoldPlan plan = eval::grouped_kfold(groups, options.folds, options.seed);
    std::vector<std::vector<int>> fold_train_y, fold_val_y;
    for (const eval::Fold& f : plan.folds) {
        std::vector<int> ty, vy;
        for (std::size_t r : f.train) ty.push_back(y[r]);
        for (std::size_t r : f.validation) vy.push_back(y[r]);
        fold_train_y.push_back(std::move(ty));
        fold_val_y.push_back(std::move(vy));
    }

    res.cv_curve.assign(res.sizes.size(), 0.0);
    parallel_for(res.sizes.size(), options.workers, [&](std::size_t i) {
        const std::vector<int> feats = surviving_features(res.ranking, res.sizes[i]);
        const svm::Matrix sub = columns(X, feats);
        double total = 0.0;
        for (std::size_t f = 0; f < plan.folds.size(); ++f) {
            const svm::MulticlassModel model =
                svm::train_ovo(rows_of(sub, plan.folds[f].train), fold_train_y[f], options.C,
                               options.kernel);
            total += svm::accuracy(model, rows_of(sub, plan.folds[f].validation), fold_val_y[f]);
        }
        res.cv_curve[i] = total / static_cast<double>(plan.folds.size());
    });

    const std::size_t best = pick_size(res.sizes, res.cv_curve);
    res.chosen_size = res.sizes[best];
    res.chosen_indices = surviving_features(res.ranking, res.chosen_size);
    return res;
}

nlohmann::json to_json(const SelectionResult& result, std::span<const std::string> names) {
    nlohmann::json j;
    j["format"] = "enose.selection/1";
    j["chosen_size"] = result.chosen_size;
    j["chosen_indices"] = result.chosen_indices;
    std::vector<std::string> chosen_names;
    for (int i : result.chosen_indices) {
        chosen_names.push_back(static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                                        : std::to_string(i));
    }
    j["chosen_names"] = chosen_names;
    j["ranking"] = result.ranking.rank;
    j["elimination_order"] = result.ranking.elimination_order;
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t i = 0; i < result.sizes.size(); ++i) {
        curve.push_back({{"size", result.sizes[i]}, {"cv_accuracy", result.cv_curve[i]}});
    }
    j["cv_curve"] = curve;
    return j;
}

} // namespace enose::selection

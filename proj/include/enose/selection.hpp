#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "enose/labels.hpp"
#include "enose/svm.hpp"

namespace enose::selection {

struct Ranking {
    // Feature indices in the order they were removed (first removed first).
    std::vector<int> elimination_order;
    // rank[f] = 1-based position of feature f in elimination_order.
    std::vector<int> rank;
};

// Recursive elimination driven by a linear one-vs-one SVM. Each round scores
// the surviving features by the sum over pair models of squared primal
// weights and drops the `step` lowest (ties: lower index first). X is
// expected to be standardized already.
Ranking rfe_rank(const svm::Matrix& X, std::span<const int> y, int step = 1,
                 double C = 10.0);
Ranking rfe_rank(const svm::Matrix& X, std::span<const ClassLabel> y, int step = 1,
                 double C = 10.0);

// Subsets along the elimination path: survivors of the last `size` removals.
std::vector<int> surviving_features(const Ranking& ranking, int size);

struct RfecvOptions {
    int folds = 5;
    int step = 1;
    std::uint64_t seed = 0;
    double C = 10.0;
    svm::KernelSpec kernel = svm::KernelSpec::gaussian_from_scale(8.3);
    unsigned workers = 1;
};

struct SelectionResult {
    std::vector<int> chosen_indices; // ascending
    Ranking ranking;
    std::vector<int> sizes;          // evaluated subset sizes, descending
    std::vector<double> cv_curve;    // mean grouped-CV accuracy per size
    int chosen_size = 0;
};

// Index of the best mean accuracy, ties going to the smallest size.
std::size_t pick_size(std::span<const int> sizes, std::span<const double> curve);

// Ranks on the full (standardized) data, then scores every subset size on
// the elimination path with a gaussian OvO SVM over group-aware folds whose
// standardization is refit on each training side. Throws ProtocolError if
// there are fewer distinct groups than folds.
SelectionResult rfecv_select(const svm::Matrix& X, std::span<const int> y,
                             std::span<const std::string> groups, const RfecvOptions& options);
SelectionResult rfecv_select(const svm::Matrix& X, std::span<const ClassLabel> y,
                             std::span<const std::string> groups, const RfecvOptions& options);

nlohmann::json to_json(const SelectionResult& result, std::span<const std::string> names);

} // namespace enose::selection

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "enose/dataset.hpp"
#include "enose/labels.hpp"

namespace enose::eval {

// Folds ---------------------------------------------------------------------

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

struct FoldPlan {
    std::vector<Fold> folds;
    std::string grouping; // "bottle" or "group-kfold"
    std::uint64_t seed = 0;
};

// One fold per wine bottle. Ethanol batches (label Ea) are dealt round-robin
// across the folds in sorted batch order so that each fold's validation side
// may contain ethanol. Throws ProtocolError with fewer than 2 wine bottles.
FoldPlan loo_by_bottle(std::span<const ClassLabel> labels, std::span<const std::string> groups);
FoldPlan loo_by_bottle(const dataset::Dataset& ds);

// Groups are shuffled with `seed` and dealt into k folds whose sizes differ
// by at most one group. Throws ProtocolError if k < 2 or k > #groups.
FoldPlan grouped_kfold(std::span<const std::string> groups, int k, std::uint64_t seed);

// Empty when every fold keeps its validation groups out of training.
std::vector<std::string> check_fold_plan(const FoldPlan& plan, std::span<const std::string> groups);

// Statistics ----------------------------------------------------------------

struct Summary {
    double mean = 0.0;
    double std = 0.0; // n-1 divisor; 0 for a single value
};
Summary summarize(std::span<const double> values);
double median(std::vector<double> values);

enum class Alternative { TwoSided, Less, Greater };
std::string_view to_string(Alternative a);
Alternative parse_alternative(std::string_view text);

enum class TestMethod { Exact, Normal };

struct StatTestResult {
    double u = 0.0;       // U of the first sample
    double u_other = 0.0; // U of the second sample; u + u_other = n1*n2
    double p_value = 1.0;
    Alternative alternative = Alternative::TwoSided;
    TestMethod method = TestMethod::Exact;
};

// Rank-sum test with midranks for ties. "Less" tests whether the first sample
// tends to be smaller. Exact null distribution when n1 + n2 <= 12 and there
// are no ties, otherwise normal approximation with tie and continuity
// corrections. `force` overrides the method choice (exact still requires no
// ties). Throws InputError on an empty sample.
StatTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                              Alternative alternative = Alternative::TwoSided,
                              std::optional<TestMethod> force = std::nullopt);

// Number of arrangements giving each U value, for U = 0..n1*n2.
std::vector<double> u_null_counts(int n1, int n2);

// PCA -----------------------------------------------------------------------

struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components; // rows are orthonormal directions
    Eigen::VectorXd explained_variance;
    Eigen::VectorXd explained_ratio;
};

// Eigen-decomposition of the sample covariance. Each component is flipped so
// its largest-magnitude entry is positive. Throws InputError unless
// 1 <= n_components <= min(rows - 1, cols).
PcaModel pca_fit(const Eigen::MatrixXd& X, int n_components);
Eigen::MatrixXd pca_scores(const PcaModel& model, const Eigen::MatrixXd& X);

} // namespace enose::eval

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "enose/labels.hpp"

namespace enose::svm {

using Matrix = Eigen::MatrixXd; // rows are samples
using Vector = Eigen::VectorXd;

struct KernelSpec {
    enum class Kind { Gaussian, Linear };
    Kind kind = Kind::Gaussian;
    double gamma = 1.0; // gaussian only: K(x,z) = exp(-gamma |x-z|^2)

    static KernelSpec linear() { return {Kind::Linear, 0.0}; }
    static KernelSpec gaussian(double gamma);
    // Toolbox "kernel scale" s divides the inputs: gamma = 1 / s^2.
    static KernelSpec gaussian_from_scale(double scale);

    double operator()(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z) const;
};

// Per-feature z-scoring. std uses the population divisor n so that a
// two-point column [1, 3] maps to [-1, 1]; zero-variance columns map to 0.
struct Standardization {
    Vector mean;
    Vector scale; // 0 marks a constant column

    Matrix apply(const Matrix& X) const;
    Vector apply(const Eigen::Ref<const Vector>& x) const;
};

// Throws InputError with fewer than 2 rows.
Standardization standardize_fit(const Matrix& X);

struct SmoOptions {
    double tol = 1e-3;
    int max_iterations = 1'000'000;
    // Records the dual objective after every pair update (tests only).
    bool record_objective = false;
};

struct SmoTrace {
    int iterations = 0;
    bool converged = false;
    double final_gap = 0.0;
    std::vector<double> objective;
};

struct BinaryModel {
    KernelSpec kernel;
    Matrix support_vectors;  // rows with alpha > 0
    Vector coef;             // alpha_i * y_i
    Vector alpha;            // alpha_i, parallel to support_vectors
    double bias = 0.0;
    double C = 1.0;
    int positive_class = 0;  // class index predicted by +1
    int negative_class = 1;

    double decision_value(const Eigen::Ref<const Vector>& x) const;
    // Sign of the decision value; an exact 0 goes to +1.
    int predict(const Eigen::Ref<const Vector>& x) const;
    // Primal weights for a linear kernel: sum_i coef_i * sv_i.
    Vector linear_weights() const;
};

// Dual coordinate ascent over maximal-violating pairs until the KKT gap is
// below tol. y must hold only -1/+1 with both present; C > 0.
// Throws TrainingError on single-class input, InputError on non-finite X.
BinaryModel train_binary_svm(const Matrix& X, std::span<const int> y, double C,
                             const KernelSpec& kernel, const SmoOptions& options = {},
                             SmoTrace* trace = nullptr);

// Full dual solution for KKT checks: alpha for every training row plus bias.
struct DualSolution {
    Vector alpha;
    double bias = 0.0;
};
DualSolution solve_dual(const Matrix& X, std::span<const int> y, double C,
                        const KernelSpec& kernel, const SmoOptions& options = {},
                        SmoTrace* trace = nullptr);

struct MulticlassModel {
    KernelSpec kernel;
    double C = 1.0;
    Standardization standardization;
    std::vector<int> classes;        // sorted class ids; index -> id
    std::vector<BinaryModel> pairs;  // (i, j) with i < j in lexicographic order

    // Majority vote; ties go to the tied class with the largest summed
    // |decision value| over the pairs it won, then to the lower index.
    int predict(const Eigen::Ref<const Vector>& raw_x) const; // class id
    int predict_index(const Eigen::Ref<const Vector>& raw_x) const;
    std::size_t input_size() const { return static_cast<std::size_t>(standardization.mean.size()); }
};

// Fits standardization on X, then one binary model per class pair trained
// on that pair's rows. If `roster` is given, every listed class must have at
// least one row (TrainingError otherwise).
// Class ids are arbitrary ints; ClassLabel overloads use the enum values.
MulticlassModel train_ovo(const Matrix& X, std::span<const int> y, double C,
                          const KernelSpec& kernel,
                          std::optional<std::vector<int>> roster = std::nullopt,
                          const SmoOptions& options = {});
MulticlassModel train_ovo(const Matrix& X, std::span<const ClassLabel> y, double C,
                          const KernelSpec& kernel,
                          std::optional<std::vector<ClassLabel>> roster = std::nullopt,
                          const SmoOptions& options = {});
std::vector<int> class_ids(std::span<const ClassLabel> y);

// Vote resolution exposed for testing: pairwise decision values, in pair
// order, over n classes.
int resolve_votes(int n_classes, std::span<const double> decisions);

double accuracy(const MulticlassModel& model, const Matrix& X, std::span<const int> y);
double accuracy(const MulticlassModel& model, const Matrix& X, std::span<const ClassLabel> y);

nlohmann::json to_json(const MulticlassModel& model);
MulticlassModel multiclass_from_json(const nlohmann::json& j);

} // namespace enose::svm

#include "enose/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "enose/error.hpp"

namespace enose::svm {

namespace {

constexpr double kTau = 1e-12; // curvature floor for non-PD pairs
constexpr const char* kFormat = "enose.svm/1";

std::string class_name(int id) {
    if (id >= 0 && id < static_cast<int>(kAllLabels.size())) {
        return std::string(to_string(kAllLabels[static_cast<std::size_t>(id)]));
    }
    return std::to_string(id);
}

Matrix kernel_matrix(const Matrix& X, const KernelSpec& k) {
    Matrix G = X * X.transpose();
    if (k.kind == KernelSpec::Kind::Linear) return G;
    const Vector sq = G.diagonal();
    const Eigen::Index n = X.rows();
    Matrix K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d2 = std::max(0.0, sq(i) + sq(j) - 2.0 * G(i, j));
            K(i, j) = i == j ? 1.0 : std::exp(-k.gamma * d2);
        }
    }
    return K;
}

void check_finite(const Matrix& X) {
    if (!X.allFinite()) throw InputError("svm: non-finite feature values");
}

} // namespace

KernelSpec KernelSpec::gaussian(double gamma) {
    if (!(gamma > 0.0)) throw ConfigError("gaussian kernel gamma must be positive");
    return {Kind::Gaussian, gamma};
}

KernelSpec KernelSpec::gaussian_from_scale(double scale) {
    if (!(scale > 0.0)) throw ConfigError("kernel scale must be positive");
    return gaussian(1.0 / (scale * scale));
}

double KernelSpec::operator()(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const Vector>& z) const {
    if (kind == Kind::Linear) return x.dot(z);
    return std::exp(-gamma * (x - z).squaredNorm());
}

Standardization standardize_fit(const Matrix& X) {
    if (X.rows() < 2) throw InputError("standardize_fit needs at least 2 rows");
    Standardization s;
    s.mean = X.colwise().mean().transpose();
    s.scale.resize(X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const double var = (X.col(c).array() - s.mean(c)).square().mean();
        s.scale(c) = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return s;
}

Matrix Standardization::apply(const Matrix& X) const {
    if (X.cols() != mean.size()) throw InputError("standardize_apply: column count mismatch");
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (scale(c) > 0.0) {
            out.col(c) = (X.col(c).array() - mean(c)) / scale(c);
        } else {
            out.col(c).setZero();
        }
    }
    return out;
}

Vector Standardization::apply(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != mean.size()) throw InputError("standardize_apply: dimension mismatch");
    Vector out(x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        out(c) = scale(c) > 0.0 ? (x(c) - mean(c)) / scale(c) : 0.0;
    }
    return out;
}

DualSolution solve_dual(const Matrix& X, std::span<const int> y, double C,
                        const KernelSpec& kernel, const SmoOptions& options, SmoTrace* trace) {
    const Eigen::Index n = X.rows();
    if (static_cast<std::size_t>(n) != y.size()) throw InputError("svm: X rows != labels");
    if (!(C > 0.0)) throw ConfigError("svm: C must be positive");
    check_finite(X);
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw InputError("svm: binary labels must be -1 or +1");
    }
    if (!has_pos || !has_neg) throw TrainingError("svm: training data holds a single class");

    const Matrix K = kernel_matrix(X, kernel);
    Vector alpha = Vector::Zero(n);
    Vector grad = Vector::Constant(n, -1.0); // gradient of 0.5 a'Qa - e'a
    auto yv = [&](Eigen::Index t) { return static_cast<double>(y[static_cast<std::size_t>(t)]); };
    auto in_up = [&](Eigen::Index t) {
        return (yv(t) > 0 && alpha(t) < C) || (yv(t) < 0 && alpha(t) > 0);
    };
    auto in_low = [&](Eigen::Index t) {
        return (yv(t) > 0 && alpha(t) > 0) || (yv(t) < 0 && alpha(t) < C);
    };
    auto dual_objective = [&] { return 0.5 * (alpha.array() * (1.0 - grad.array())).sum(); };

    SmoTrace local;
    SmoTrace& tr = trace ? *trace : local;
    tr = SmoTrace{};
    if (options.record_objective) tr.objective.push_back(dual_objective());

    for (;;) {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmin = std::numeric_limits<double>::infinity();
        Eigen::Index i = -1, j = -1;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double v = -yv(t) * grad(t);
            if (in_up(t) && v > gmax) { gmax = v; i = t; }
            if (in_low(t) && v < gmin) { gmin = v; j = t; }
        }
        tr.final_gap = gmax - gmin;
        if (i < 0 || j < 0 || gmax - gmin < options.tol) {
            tr.converged = true;
            break;
        }
        if (tr.iterations >= options.max_iterations) break;
        ++tr.iterations;

        const double Qii = K(i, i), Qjj = K(j, j), Qij = yv(i) * yv(j) * K(i, j);
        const double old_i = alpha(i), old_j = alpha(j);
        if (yv(i) != yv(j)) {
            double quad = Qii + Qjj + 2.0 * Qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad(i) - grad(j)) / quad;
            const double diff = alpha(i) - alpha(j);
            alpha(i) += delta;
            alpha(j) += delta;
            if (diff > 0) {
                if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = diff; }
            } else {
                if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = -diff; }
            }
            if (diff > 0) {
                if (alpha(i) > C) { alpha(i) = C; alpha(j) = C - diff; }
            } else {
                if (alpha(j) > C) { alpha(j) = C; alpha(i) = C + diff; }
            }
        } else {
            double quad = Qii + Qjj - 2.0 * Qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad(i) - grad(j)) / quad;
            const double sum = alpha(i) + alpha(j);
            alpha(i) -= delta;
            alpha(j) += delta;
            if (sum > C) {
                if (alpha(i) > C) { alpha(i) = C; alpha(j) = sum - C; }
                if (alpha(j) > C) { alpha(j) = C; alpha(i) = sum - C; }
            } else {
                if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = sum; }
                if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = sum; }
            }
        }
        const double di = alpha(i) - old_i, dj = alpha(j) - old_j;
        for (Eigen::Index t = 0; t < n; ++t) {
            grad(t) += yv(t) * (yv(i) * K(t, i) * di + yv(j) * K(t, j) * dj);
        }
        if (options.record_objective) tr.objective.push_back(dual_objective());
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    int free_count = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = yv(t) * grad(t);
        if (alpha(t) >= C) {
            if (yv(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (alpha(t) <= 0) {
            if (yv(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++free_count;
            free_sum += yg;
        }
    }
    const double rho = free_count > 0 ? free_sum / free_count : 0.5 * (ub + lb);
    return {alpha, -rho};
}

BinaryModel train_binary_svm(const Matrix& X, std::span<const int> y, double C,
                             const KernelSpec& kernel, const SmoOptions& options,
                             SmoTrace* trace) {
    const DualSolution sol = solve_dual(X, y, C, kernel, options, trace);
    BinaryModel m;
    m.kernel = kernel;
    m.C = C;
    m.bias = sol.bias;
    std::vector<Eigen::Index> sv;
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
        if (sol.alpha(t) > 0.0) sv.push_back(t);
    }
    m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
    m.coef.resize(static_cast<Eigen::Index>(sv.size()));
    m.alpha.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t r = 0; r < sv.size(); ++r) {
        const auto e = static_cast<Eigen::Index>(r);
        m.support_vectors.row(e) = X.row(sv[r]);
        m.alpha(e) = sol.alpha(sv[r]);
        m.coef(e) = sol.alpha(sv[r]) * y[static_cast<std::size_t>(sv[r])];
    }
    return m;
}

double BinaryModel::decision_value(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != support_vectors.cols() && support_vectors.rows() > 0) {
        throw InputError("svm: input dimension " + std::to_string(x.size()) + " != " +
                         std::to_string(support_vectors.cols()));
    }
    double f = bias;
    for (Eigen::Index r = 0; r < support_vectors.rows(); ++r) {
        f += coef(r) * kernel(support_vectors.row(r).transpose(), x);
    }
    return f;
}

int BinaryModel::predict(const Eigen::Ref<const Vector>& x) const {
    return decision_value(x) >= 0.0 ? 1 : -1;
}

Vector BinaryModel::linear_weights() const {
    return support_vectors.transpose() * coef;
}

int resolve_votes(int n_classes, std::span<const double> decisions) {
    std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
    std::vector<double> confidence(static_cast<std::size_t>(n_classes), 0.0);
    std::size_t p = 0;
    for (int a = 0; a < n_classes; ++a) {
        for (int b = a + 1; b < n_classes; ++b, ++p) {
            const double d = decisions[p];
            const int winner = d >= 0.0 ? a : b;
            ++votes[static_cast<std::size_t>(winner)];
            confidence[static_cast<std::size_t>(winner)] += std::abs(d);
        }
    }
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
        const auto uc = static_cast<std::size_t>(c), ub = static_cast<std::size_t>(best);
        if (votes[uc] > votes[ub] || (votes[uc] == votes[ub] && confidence[uc] > confidence[ub])) {
            best = c;
        }
    }
    return best;
}

int MulticlassModel::predict_index(const Eigen::Ref<const Vector>& raw_x) const {
    const Vector x = standardization.apply(raw_x);
    std::vector<double> d;
    d.reserve(pairs.size());
    for (const BinaryModel& m : pairs) d.push_back(m.decision_value(x));
    return resolve_votes(static_cast<int>(classes.size()), d);
}

int MulticlassModel::predict(const Eigen::Ref<const Vector>& raw_x) const {
    return classes[static_cast<std::size_t>(predict_index(raw_x))];
}

std::vector<int> class_ids(std::span<const ClassLabel> y) {
    std::vector<int> out;
    out.reserve(y.size());
    for (ClassLabel l : y) out.push_back(static_cast<int>(l));
    return out;
}

MulticlassModel train_ovo(const Matrix& X, std::span<const ClassLabel> y, double C,
                          const KernelSpec& kernel, std::optional<std::vector<ClassLabel>> roster,
                          const SmoOptions& options) {
    std::optional<std::vector<int>> ids;
    if (roster) ids = class_ids(*roster);
    return train_ovo(X, std::span<const int>(class_ids(y)), C, kernel, std::move(ids), options);
}

MulticlassModel train_ovo(const Matrix& X, std::span<const int> y, double C,
                          const KernelSpec& kernel, std::optional<std::vector<int>> roster,
                          const SmoOptions& options) {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw InputError("svm: X rows != labels");
    check_finite(X);
    std::vector<int> classes;
    if (roster) {
        classes = *roster;
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
        for (int c : classes) {
            if (std::find(y.begin(), y.end(), c) == y.end()) {
                throw TrainingError("svm: class " + class_name(c) + " has no rows");
            }
        }
        for (int l : y) {
            if (!std::binary_search(classes.begin(), classes.end(), l)) {
                throw TrainingError("svm: label " + class_name(l) + " not in roster");
            }
        }
    } else {
        classes.assign(y.begin(), y.end());
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    }
    if (classes.size() < 2) throw TrainingError("svm: need at least 2 classes");

    MulticlassModel model;
    model.kernel = kernel;
    model.C = C;
    model.classes = classes;
    model.standardization = standardize_fit(X);
    const Matrix Z = model.standardization.apply(X);

    for (std::size_t a = 0; a < classes.size(); ++a) {
        for (std::size_t b = a + 1; b < classes.size(); ++b) {
            std::vector<Eigen::Index> rows;
            std::vector<int> yy;
            for (std::size_t r = 0; r < y.size(); ++r) {
                if (y[r] == classes[a] || y[r] == classes[b]) {
                    rows.push_back(static_cast<Eigen::Index>(r));
                    yy.push_back(y[r] == classes[a] ? 1 : -1);
                }
            }
            Matrix sub(static_cast<Eigen::Index>(rows.size()), Z.cols());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                sub.row(static_cast<Eigen::Index>(r)) = Z.row(rows[r]);
            }
            BinaryModel bm = train_binary_svm(sub, yy, C, kernel, options);
            bm.positive_class = static_cast<int>(a);
            bm.negative_class = static_cast<int>(b);
            model.pairs.push_back(std::move(bm));
        }
    }
    return model;
}

double accuracy(const MulticlassModel& model, const Matrix& X, std::span<const ClassLabel> y) {
    return accuracy(model, X, std::span<const int>(class_ids(y)));
}

double accuracy(const MulticlassModel& model, const Matrix& X, std::span<const int> y) {
    if (y.empty()) return 0.0;
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        if (model.predict(X.row(r).transpose()) == y[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vec_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json kernel_json(const KernelSpec& k) {
    nlohmann::json j;
    j["kind"] = k.kind == KernelSpec::Kind::Linear ? "linear" : "gaussian";
    if (k.kind == KernelSpec::Kind::Gaussian) j["gamma"] = k.gamma;
    return j;
}

KernelSpec kernel_from(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "linear") return KernelSpec::linear();
    if (kind == "gaussian") return KernelSpec::gaussian(j.at("gamma").get<double>());
    throw ParseError("svm model: unknown kernel kind " + kind);
}

} // namespace

nlohmann::json to_json(const MulticlassModel& model) {
    nlohmann::json j;
    j["format"] = kFormat;
    j["kernel"] = kernel_json(model.kernel);
    j["C"] = model.C;
    j["standardization"] = {{"mean", vec_json(model.standardization.mean)},
                            {"scale", vec_json(model.standardization.scale)}};
    nlohmann::json classes = nlohmann::json::array();
    for (int c : model.classes) classes.push_back(c);
    j["classes"] = classes;
    nlohmann::json pairs = nlohmann::json::array();
    for (const BinaryModel& b : model.pairs) {
        nlohmann::json p;
        p["positive"] = b.positive_class;
        p["negative"] = b.negative_class;
        p["bias"] = b.bias;
        p["alpha"] = vec_json(b.alpha);
        p["coef"] = vec_json(b.coef);
        nlohmann::json sv = nlohmann::json::array();
        for (Eigen::Index r = 0; r < b.support_vectors.rows(); ++r) {
            sv.push_back(vec_json(b.support_vectors.row(r).transpose()));
        }
        p["support_vectors"] = sv;
        pairs.push_back(p);
    }
    j["pairs"] = pairs;
    return j;
}

MulticlassModel multiclass_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kFormat) {
            throw ParseError("svm model: unsupported format tag");
        }
        MulticlassModel m;
        m.kernel = kernel_from(j.at("kernel"));
        m.C = j.at("C").get<double>();
        m.standardization.mean = vec_from(j.at("standardization").at("mean"));
        m.standardization.scale = vec_from(j.at("standardization").at("scale"));
        for (const auto& c : j.at("classes")) m.classes.push_back(c.get<int>());
        const Eigen::Index dim = m.standardization.mean.size();
        for (const auto& p : j.at("pairs")) {
            BinaryModel b;
            b.kernel = m.kernel;
            b.C = m.C;
            b.positive_class = p.at("positive").get<int>();
            b.negative_class = p.at("negative").get<int>();
            b.bias = p.at("bias").get<double>();
            b.alpha = vec_from(p.at("alpha"));
            b.coef = vec_from(p.at("coef"));
            const auto& sv = p.at("support_vectors");
            b.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), dim);
            for (std::size_t r = 0; r < sv.size(); ++r) {
                b.support_vectors.row(static_cast<Eigen::Index>(r)) = vec_from(sv[r]).transpose();
            }
            m.pairs.push_back(std::move(b));
        }
        const std::size_t n = m.classes.size();
        if (m.pairs.size() != n * (n - 1) / 2) throw ParseError("svm model: wrong pair count");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("svm model: ") + e.what());
    }
}

} // namespace enose::svm

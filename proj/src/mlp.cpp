#include "enose/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "enose/error.hpp"
#include "enose/rng.hpp"

namespace enose::mlp {

namespace {

constexpr const char* kFormat = "enose.mlp/1";

void softmax_columns(Matrix& Z) {
    for (Eigen::Index c = 0; c < Z.cols(); ++c) {
        auto col = Z.col(c);
        const double m = col.maxCoeff();
        col = (col.array() - m).exp();
        col /= col.sum();
    }
}

// Per-column cross-entropy from logits, via log-sum-exp.
double cross_entropy_sum(const Matrix& logits, std::span<const int> y) {
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const auto col = logits.col(c);
        const double m = col.maxCoeff();
        const double lse = m + std::log((col.array() - m).exp().sum());
        total += lse - col(y[static_cast<std::size_t>(c)]);
    }
    return total;
}

struct ForwardCache {
    std::vector<Matrix> activations; // a_0 (input) .. a_{L-1}; last layer kept as logits
    std::vector<Matrix> pre;         // z_1 .. z_L
};

ForwardCache forward_cached(const MlpModel& m, const Matrix& A0) {
    ForwardCache fc;
    fc.activations.push_back(A0);
    const std::size_t L = m.layers.size();
    for (std::size_t l = 0; l < L; ++l) {
        Matrix z = m.layers[l].weights * fc.activations.back();
        z.colwise() += m.layers[l].bias;
        if (l + 1 < L) fc.activations.push_back(z.cwiseMax(0.0));
        fc.pre.push_back(std::move(z));
    }
    return fc;
}

// Gradients of the summed loss over the batch columns, scaled by `scale`.
Gradients backward(const MlpModel& m, const ForwardCache& fc, std::span<const int> y, double scale) {
    const std::size_t L = m.layers.size();
    Gradients g;
    g.weights.resize(L);
    g.bias.resize(L);
    Matrix delta = fc.pre.back();
    softmax_columns(delta);
    for (Eigen::Index c = 0; c < delta.cols(); ++c) delta(y[static_cast<std::size_t>(c)], c) -= 1.0;
    delta *= scale;
    for (std::size_t l = L; l-- > 0;) {
        g.weights[l] = delta * fc.activations[l].transpose();
        g.bias[l] = delta.rowwise().sum();
        if (l == 0) break;
        Matrix back = m.layers[l].weights.transpose() * delta;
        delta = back.cwiseProduct((fc.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return g;
}

void check_labels(std::span<const int> y, int outputs) {
    for (int v : y) {
        if (v < 0 || v >= outputs) throw InputError("mlp: label " + std::to_string(v) + " outside roster");
    }
}

Matrix gather_columns(const Matrix& X, std::span<const std::size_t> idx) {
    Matrix out(X.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = X.col(static_cast<Eigen::Index>(idx[c]));
    return out;
}

} // namespace

MlpArchitecture build_architecture(int t, int delta, int n_sensors, int n_classes) {
    if (t < 1 || delta < 1 || n_sensors < 1) throw ConfigError("architecture: t, delta, sensors must be >= 1");
    if (n_classes < 2) throw ConfigError("architecture: need at least 2 classes");
    MlpArchitecture a;
    a.layer_sizes.push_back(n_sensors * t * delta);
    a.layer_sizes.push_back(kFirstHidden);
    for (int i = 0; i < kNarrowLayers; ++i) a.layer_sizes.push_back(kNarrowHidden);
    a.layer_sizes.push_back(n_classes);
    return a;
}

std::vector<long long> layer_param_counts(const MlpArchitecture& a) {
    std::vector<long long> out;
    for (std::size_t l = 1; l < a.layer_sizes.size(); ++l) {
        const long long in = a.layer_sizes[l - 1], n = a.layer_sizes[l];
        out.push_back(in * n + n);
    }
    return out;
}

long long param_count(const MlpArchitecture& a) {
    const auto v = layer_param_counts(a);
    return std::accumulate(v.begin(), v.end(), 0LL);
}

ScalingParams scale_fit(const Matrix& X) {
    if (X.rows() < 1) throw InputError("scale_fit: no rows");
    ScalingParams p;
    p.min = X.colwise().minCoeff().transpose();
    p.range = X.colwise().maxCoeff().transpose() - p.min;
    return p;
}

Matrix ScalingParams::apply(const Matrix& X) const {
    if (X.cols() != min.size()) throw InputError("scale_apply: column count mismatch");
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (range(c) > 0.0) out.col(c) = (X.col(c).array() - min(c)) / range(c);
        else out.col(c).setZero();
    }
    return out;
}

Vector ScalingParams::apply(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != min.size()) throw InputError("scale_apply: dimension mismatch");
    Vector out(x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        out(c) = range(c) > 0.0 ? (x(c) - min(c)) / range(c) : 0.0;
    }
    return out;
}

Matrix MlpModel::logits(const Matrix& scaled_columns) const {
    Matrix a = scaled_columns;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix z = layers[l].weights * a;
        z.colwise() += layers[l].bias;
        a = l + 1 < layers.size() ? Matrix(z.cwiseMax(0.0)) : z;
    }
    return a;
}

MlpModel zero_model(const MlpArchitecture& a) {
    if (a.layer_sizes.size() < 2) throw ConfigError("architecture needs at least one weight layer");
    MlpModel m;
    m.architecture = a;
    for (std::size_t l = 1; l < a.layer_sizes.size(); ++l) {
        m.layers.push_back({Matrix::Zero(a.layer_sizes[l], a.layer_sizes[l - 1]),
                            Vector::Zero(a.layer_sizes[l])});
    }
    return m;
}

MlpModel init_model(const MlpArchitecture& a, std::uint64_t seed) {
    MlpModel m = zero_model(a);
    Rng rng(seed);
    for (DenseLayer& layer : m.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.weights.cols()));
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                layer.weights(r, c) = rng.uniform(-limit, limit);
            }
        }
    }
    return m;
}

Vector forward(const MlpModel& model, const Eigen::Ref<const Vector>& x) {
    if (x.size() != model.architecture.inputs()) {
        throw InputError("mlp: input size " + std::to_string(x.size()) + " != " +
                         std::to_string(model.architecture.inputs()));
    }
    Matrix col = model.scaling.min.size() > 0 ? Matrix(model.scaling.apply(x)) : Matrix(x);
    Matrix out = model.logits(col);
    softmax_columns(out);
    return out.col(0);
}

int predict(const MlpModel& model, const Eigen::Ref<const Vector>& x) {
    Eigen::Index arg = 0;
    forward(model, x).maxCoeff(&arg);
    return static_cast<int>(arg);
}

double loss(const MlpModel& model, const Matrix& scaled_columns, std::span<const int> y) {
    if (scaled_columns.cols() == 0) return 0.0;
    return cross_entropy_sum(model.logits(scaled_columns), y) / static_cast<double>(scaled_columns.cols());
}

MlpModel train(const MlpArchitecture& architecture, const Matrix& X, std::span<const int> y,
               const TrainConfig& config, TrainStats* stats) {
    if (!(config.learning_rate > 0.0)) throw ConfigError("mlp: learning rate must be positive");
    if (config.epochs < 1) throw ConfigError("mlp: epochs must be >= 1");
    if (config.batch_size < 1) throw ConfigError("mlp: batch size must be >= 1");
    if (config.patience && (*config.patience < 1 || !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0))) {
        throw ConfigError("mlp: early stopping needs patience >= 1 and holdout fraction in (0, 1)");
    }
    if (X.cols() != architecture.inputs()) {
        throw InputError("mlp: X has " + std::to_string(X.cols()) + " columns, architecture expects " +
                         std::to_string(architecture.inputs()));
    }
    if (static_cast<std::size_t>(X.rows()) != y.size() || X.rows() == 0) {
        throw InputError("mlp: X rows and labels differ or are empty");
    }
    check_labels(y, architecture.outputs());

    MlpModel model = init_model(architecture, derive_seed(config.seed, 0));
    model.scaling = scale_fit(X);
    const Matrix data = model.scaling.apply(X).transpose(); // columns are samples

    std::vector<std::size_t> fit_rows(y.size());
    std::iota(fit_rows.begin(), fit_rows.end(), 0);
    std::vector<std::size_t> holdout_rows;
    if (config.patience) {
        Rng split(derive_seed(config.seed, 1));
        split.shuffle(fit_rows);
        const auto n_hold = static_cast<std::size_t>(
            std::max(1.0, std::round(config.holdout_fraction * static_cast<double>(fit_rows.size()))));
        if (n_hold >= fit_rows.size()) throw InputError("mlp: too few rows for early stopping holdout");
        holdout_rows.assign(fit_rows.end() - static_cast<std::ptrdiff_t>(n_hold), fit_rows.end());
        fit_rows.resize(fit_rows.size() - n_hold);
        std::sort(fit_rows.begin(), fit_rows.end());
    }
    auto labels_of = [&](std::span<const std::size_t> idx) {
        std::vector<int> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(y[i]);
        return out;
    };
    const Matrix fit_data = config.patience ? gather_columns(data, fit_rows) : data;
    const std::vector<int> fit_y = labels_of(fit_rows);
    const Matrix hold_data = gather_columns(data, holdout_rows);
    const std::vector<int> hold_y = labels_of(holdout_rows);

    TrainStats local;
    TrainStats& st = stats ? *stats : local;
    st = TrainStats{};
    st.initial_loss = loss(model, fit_data, fit_y);
    if (!std::isfinite(st.initial_loss)) throw DivergenceError("mlp: non-finite initial loss", 0);

    double best_hold = std::numeric_limits<double>::infinity();
    MlpModel best = model;
    int since_best = 0;
    Rng order_rng(derive_seed(config.seed, 2));
    std::vector<std::size_t> order(fit_y.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Matrix batch = gather_columns(fit_data, idx);
            std::vector<int> by;
            by.reserve(idx.size());
            for (std::size_t i : idx) by.push_back(fit_y[i]);
            const ForwardCache fc = forward_cached(model, batch);
            epoch_loss += cross_entropy_sum(fc.pre.back(), by);
            const Gradients g = backward(model, fc, by, 1.0 / static_cast<double>(idx.size()));
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                model.layers[l].weights.noalias() -= config.learning_rate * g.weights[l];
                model.layers[l].bias.noalias() -= config.learning_rate * g.bias[l];
            }
            ++st.updates;
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) {
            throw DivergenceError("mlp: loss became non-finite at epoch " + std::to_string(epoch), epoch);
        }
        st.epoch_loss.push_back(epoch_loss);
        st.epochs_run = epoch;

        if (config.patience) {
            const double h = loss(model, hold_data, hold_y);
            if (h < best_hold) {
                best_hold = h;
                best = model;
                since_best = 0;
            } else if (++since_best >= *config.patience) {
                break;
            }
        }
    }
    return config.patience ? best : model;
}

Gradients backprop(const MlpModel& model, const Eigen::Ref<const Vector>& scaled_x, int label) {
    if (scaled_x.size() != model.architecture.inputs()) throw InputError("backprop: input size mismatch");
    check_labels(std::span<const int>(&label, 1), model.architecture.outputs());
    const ForwardCache fc = forward_cached(model, Matrix(scaled_x));
    return backward(model, fc, std::span<const int>(&label, 1), 1.0);
}

double gradient_check(const MlpModel& model, const Eigen::Ref<const Vector>& x, int label,
                      double epsilon) {
    const Gradients g = backprop(model, x, label);
    MlpModel probe = model;
    const Matrix col = x;
    const std::span<const int> y(&label, 1);
    double worst = 0.0;
    auto compare = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + epsilon;
        const double up = loss(probe, col, y);
        param = saved - epsilon;
        const double down = loss(probe, col, y);
        param = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double err = std::abs(analytic - numeric) /
                           std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
        worst = std::max(worst, err);
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        Matrix& W = probe.layers[l].weights;
        for (Eigen::Index c = 0; c < W.cols(); ++c) {
            for (Eigen::Index r = 0; r < W.rows(); ++r) compare(W(r, c), g.weights[l](r, c));
        }
        Vector& b = probe.layers[l].bias;
        for (Eigen::Index r = 0; r < b.size(); ++r) compare(b(r), g.bias[l](r));
    }
    return worst;
}

double gradient_check(const MlpArchitecture& architecture, const Eigen::Ref<const Vector>& x,
                      int label, double epsilon, std::uint64_t seed) {
    MlpModel m = init_model(architecture, seed);
    // Small random biases so the check also covers the bias path.
    Rng rng(derive_seed(seed, 99));
    for (DenseLayer& layer : m.layers) {
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-0.1, 0.1);
    }
    return gradient_check(m, x, label, epsilon);
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const MlpModel& model) {
    nlohmann::json j;
    j["format"] = kFormat;
    j["layer_sizes"] = model.architecture.layer_sizes;
    j["activation"] = {{"hidden", "relu"}, {"output", "softmax"}};
    nlohmann::json layers = nlohmann::json::array();
    for (const DenseLayer& l : model.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weights.size()));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
        }
        layers.push_back({{"weights_row_major", w},
                          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    j["layers"] = layers;
    j["scaling"] = {
        {"min", std::vector<double>(model.scaling.min.data(), model.scaling.min.data() + model.scaling.min.size())},
        {"range", std::vector<double>(model.scaling.range.data(), model.scaling.range.data() + model.scaling.range.size())}};
    return j;
}

MlpModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kFormat) throw ParseError("mlp model: unsupported format tag");
        MlpArchitecture a;
        a.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        MlpModel m = zero_model(a);
        const auto& layers = j.at("layers");
        if (layers.size() != m.layers.size()) throw ParseError("mlp model: layer count mismatch");
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            const auto w = layers[l].at("weights_row_major").get<std::vector<double>>();
            const auto b = layers[l].at("bias").get<std::vector<double>>();
            Matrix& W = m.layers[l].weights;
            if (w.size() != static_cast<std::size_t>(W.size()) || b.size() != static_cast<std::size_t>(W.rows())) {
                throw ParseError("mlp model: layer " + std::to_string(l) + " dimensions do not chain");
            }
            for (Eigen::Index r = 0; r < W.rows(); ++r) {
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[static_cast<std::size_t>(r * W.cols() + c)];
            }
            m.layers[l].bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
        }
        const auto mn = j.at("scaling").at("min").get<std::vector<double>>();
        const auto rg = j.at("scaling").at("range").get<std::vector<double>>();
        if (mn.size() != rg.size() || (!mn.empty() && mn.size() != static_cast<std::size_t>(a.inputs()))) {
            throw ParseError("mlp model: scaling dimensions mismatch");
        }
        m.scaling.min = Eigen::Map<const Vector>(mn.data(), static_cast<Eigen::Index>(mn.size()));
        m.scaling.range = Eigen::Map<const Vector>(rg.data(), static_cast<Eigen::Index>(rg.size()));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("mlp model: ") + e.what());
    }
}

} // namespace enose::mlp

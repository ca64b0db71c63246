#include <doctest.h>

#include <cmath>
#include <set>

#include "enose/dataset.hpp"
#include "enose/error.hpp"
#include "enose/features.hpp"
#include "enose/rng.hpp"
#include "support.hpp"

using namespace enose;
using namespace enose::features;

namespace {

dataset::GeneratorConfig noiseless(int per_class = 1) {
    auto cfg = testing::small_config(per_class, 1);
    cfg.noise_std = 0.0;
    cfg.bottle_jitter = 0.0;
    cfg.measurement_jitter = 0.0;
    cfg.drift_per_s = 0.0;
    return cfg;
}

// Composite Simpson on a fine grid.
template <class F>
double simpson(F f, double a, double b, int n = 200000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

} // namespace

TEST_CASE("delta_g and its normalized form") {
    const std::vector<double> flat(10, 3.0), a{1, 3, 2}, b{2, 4};
    CHECK(delta_g(flat) == 0.0);
    CHECK(delta_g(a) == 2.0);
    CHECK(delta_g_norm(flat) == 0.0);
    CHECK(delta_g_norm(b) == 1.0);
    CHECK(delta_g_norm(a) == 2.0);
}

TEST_CASE("delta_g of a noiseless archetype matches the closed form") {
    const auto cfg = noiseless();
    const auto ds = dataset::generate_synthetic(cfg);
    for (const auto& m : ds.measurements) {
        for (const auto& tr : m.traces) {
            const auto& sa = cfg.archetypes.at(m.label).sensors[static_cast<std::size_t>(tr.sensor_index - 1)];
            const double A = sa.amplitude.mid(), ta = sa.tau_absorb_s.mid();
            // Peak sits at the desorption onset sample; minimum is the baseline.
            const double rise = (m.desorption_onset() - m.injection_index) / cfg.sample_rate_hz;
            CHECK(std::abs(delta_g(tr.samples) - A * (1.0 - std::exp(-rise / ta))) < 1e-9);
        }
    }
}

TEST_CASE("scaling laws of delta_g on random traces") {
    Rng rng(9);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> g(50), g2(50);
        const double c = rng.uniform(0.1, 10.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = rng.uniform(0.5, 2.0);
            g2[i] = c * g[i];
        }
        CHECK(delta_g(g2) == doctest::Approx(c * delta_g(g)).epsilon(1e-12));
        CHECK(delta_g_norm(g2) == doctest::Approx(delta_g_norm(g)).epsilon(1e-12));
    }
}

TEST_CASE("trapezoidal auc") {
    const std::vector<double> c(11, 2.5);
    CHECK(auc(c, {0, 11}, 18.5) == doctest::Approx(2.5 * 10 / 18.5).epsilon(1e-14));
    const std::vector<double> two{0.5, 1.5};
    CHECK(auc(two, {0, 2}, 1.0) == 1.0);
    CHECK_THROWS_AS(auc(two, {0, 3}, 1.0), BoundsError);
    CHECK_THROWS_AS(auc(two, {-1, 1}, 1.0), BoundsError);
    CHECK_THROWS_AS(auc(two, {2, 1}, 1.0), BoundsError);
}

TEST_CASE("absorption auc agrees with fine quadrature of the response") {
    const auto cfg = noiseless();
    const auto ds = dataset::generate_synthetic(cfg);
    const auto& m = ds.measurements.front();
    const double rate = cfg.sample_rate_hz;
    for (const auto& tr : m.traces) {
        const auto& sa = cfg.archetypes.at(m.label).sensors[static_cast<std::size_t>(tr.sensor_index - 1)];
        const double B = cfg.baseline[static_cast<std::size_t>(tr.sensor_index - 1)];
        const double A = sa.amplitude.mid(), ta = sa.tau_absorb_s.mid();
        const auto ctx = make_context(m, tr.sensor_index - 1);
        const double t0 = m.injection_index / rate, t1 = (m.desorption_onset() - 1) / rate;
        const double want = simpson([&](double t) { return B + A * (1.0 - std::exp(-(t - t0) / ta)); }, t0, t1);
        const double got = auc(tr.samples, ctx.absorption, rate);
        CHECK(std::abs(got - want) / want < 1e-6);
    }
}

TEST_CASE("ema recurrence") {
    const std::vector<double> flat(8, 1.7);
    for (double y : ema_transform(flat, 0.1)) CHECK(y == 0.0);

    std::vector<double> step(6, 1.0);
    step[0] = 0.0;
    const auto y = ema_transform(step, 0.1);
    REQUIRE(y.size() == step.size());
    CHECK(y[0] == 0.0);
    CHECK(y[1] == doctest::Approx(0.1));
    CHECK(y[2] == doctest::Approx(0.09));
    CHECK(y[3] == doctest::Approx(0.081));
    CHECK(y[5] == doctest::Approx(0.1 * std::pow(0.9, 4)));

    std::vector<double> ramp(3000);
    for (std::size_t k = 0; k < ramp.size(); ++k) ramp[k] = static_cast<double>(k);
    for (double a : {0.1, 0.01}) CHECK(ema_transform(ramp, a).back() == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(ema_transform(step, 0.0), InputError);
    CHECK_THROWS_AS(ema_transform(step, 1.0), InputError);
    CHECK_THROWS_AS(ema_transform(std::vector<double>{1.0}, 0.5), InputError);
}

TEST_CASE("ema ignores a constant offset") {
    Rng rng(4);
    std::vector<double> x(100), shifted(100);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(1.0, 2.0);
        shifted[i] = x[i] + 5.0;
    }
    const auto a = ema_transform(x, 0.01), b = ema_transform(shifted, 0.01);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("ema extrema") {
    const std::vector<double> flat(20, 1.0);
    const auto e = ema_extrema(flat, 0.1, {0, 10}, {10, 20});
    CHECK(e.rising_max == 0.0);
    CHECK(e.falling_min == 0.0);

    std::vector<double> step(20, 1.0);
    step[0] = 0.0;
    CHECK(ema_extrema(step, 0.1, {0, 10}, {10, 20}).rising_max == doctest::Approx(0.1));
    CHECK_THROWS_AS(ema_extrema(step, 0.1, {0, 30}, {10, 20}), BoundsError);

    const auto ds = dataset::generate_synthetic(noiseless());
    for (const auto& m : ds.measurements) {
        const auto& g = m.traces.front().samples;
        const auto y = ema_transform(g, 0.01);
        const auto arg = static_cast<int>(std::max_element(y.begin(), y.end()) - y.begin());
        CHECK(arg >= m.injection_index);
        CHECK(arg < m.desorption_onset());
        const auto ctx = make_context(m, 0);
        CHECK(ema_extrema(g, 0.01, ctx.absorption, ctx.desorption).rising_max == y[static_cast<std::size_t>(arg)]);
    }
}

TEST_CASE("catalog order and fingerprint names") {
    const auto& cat = default_catalog();
    REQUIRE(cat.size() == 23);
    const std::vector<std::string> expected{
        "delta_g", "delta_g_norm", "auc_absorption", "auc_desorption", "ema_max_0.1", "ema_min_0.1",
        "ema_max_0.01", "ema_min_0.01", "ema_max_0.001", "ema_min_0.001", "baseline_mean", "final_value",
        "maximum", "minimum", "mean", "std", "max_diff", "min_diff", "rise_time_90", "fall_time_10",
        "slope_absorption", "slope_desorption", "auc_total"};
    for (std::size_t i = 0; i < cat.size(); ++i) CHECK(cat[i].name == expected[i]);
    const auto names = fingerprint_names(cat);
    REQUIRE(names.size() == 138);
    CHECK(names[0] == "delta_g_s1");
    CHECK(names[23] == "delta_g_s2");
    CHECK(names[137] == "auc_total_s6");
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == 138);
}

TEST_CASE("fingerprint shape, determinism and scaling") {
    const auto ds = dataset::generate_synthetic(testing::small_config(1, 1));
    const auto& m = ds.measurements.front();
    const auto a = extract_fingerprint(m), b = extract_fingerprint(m);
    CHECK(a.values.size() == 138);
    CHECK(a.values == b.values);
    CHECK(a.measurement_id == m.id);
    for (double v : a.values) CHECK(std::isfinite(v));

    auto doubled = m;
    for (auto& tr : doubled.traces) {
        for (double& v : tr.samples) v *= 2.0;
    }
    const auto d = extract_fingerprint(doubled);
    for (int s = 0; s < 6; ++s) {
        const std::size_t base = static_cast<std::size_t>(s * 23);
        CHECK(d.values[base] == doctest::Approx(2.0 * a.values[base]).epsilon(1e-12));
        CHECK(d.values[base + 1] == doctest::Approx(a.values[base + 1]).epsilon(1e-12));
    }
}

TEST_CASE("fingerprint follows sensor index, not storage order") {
    const auto ds = dataset::generate_synthetic(testing::small_config(1, 1));
    auto m = ds.measurements.front();
    const auto a = extract_fingerprint(m);
    std::reverse(m.traces.begin(), m.traces.end());
    CHECK(extract_fingerprint(m).values == a.values);
}

TEST_CASE("trimmed measurement ignores samples outside the interval") {
    const auto ds = dataset::generate_synthetic(testing::small_config(1, 1));
    auto m = ds.measurements.front();
    const auto a = extract_fingerprint(dataset::trim_to_interval(m, 150, 3300));
    for (auto& tr : m.traces) {
        for (int k = 0; k < 150; ++k) tr.samples[static_cast<std::size_t>(k)] = 99.0;
        for (int k = 3300; k < 3330; ++k) tr.samples[static_cast<std::size_t>(k)] = 0.01;
    }
    CHECK(extract_fingerprint(dataset::trim_to_interval(m, 150, 3300)).values == a.values);
}

TEST_CASE("extraction errors") {
    const auto ds = dataset::generate_synthetic(testing::small_config(1, 1));
    auto cat = default_catalog();
    cat.pop_back();
    CHECK_THROWS_AS(extract_fingerprint(ds.measurements.front(), cat), ConfigError);

    auto bad = default_catalog();
    bad[4].compute = [](const TraceContext&) { return std::nan(""); };
    try {
        extract_fingerprint(ds.measurements.front(), bad);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("ema_max_0.1") != std::string::npos);
        CHECK(msg.find("sensor 1") != std::string::npos);
    }
    CHECK_THROWS_AS(extract_all(dataset::Dataset{}), InputError);
}

TEST_CASE("fingerprint table csv round-trip and worker independence") {
    const auto ds = dataset::generate_synthetic(testing::small_config(2, 1));
    const auto t1 = extract_all(ds, 1), t3 = extract_all(ds, 3);
    CHECK(t1.rows == t3.rows);
    const std::string csv = format_fingerprint_csv(t1);
    const auto first_line = csv.substr(0, csv.find('\n'));
    CHECK(first_line.size() > 20);
    CHECK(first_line.substr(first_line.size() - 16) == ",label,bottle_id");
    const auto back = parse_fingerprint_csv(csv, "mem");
    CHECK(back.names == t1.names);
    CHECK(back.rows == t1.rows);
    CHECK(back.labels == t1.labels);
    CHECK(back.bottles == t1.bottles);
    CHECK_THROWS_AS(parse_fingerprint_csv("a,b\n1\n", "mem"), ParseError);
}

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "enose/error.hpp"
#include "enose/labels.hpp"
#include "enose/parallel.hpp"
#include "enose/rng.hpp"
#include "enose/text.hpp"

using namespace enose;

TEST_CASE("labels round-trip and reject unknown names") {
    for (ClassLabel l : kAllLabels) CHECK(parse_label(to_string(l)) == l);
    CHECK_THROWS_AS(parse_label("hq"), ParseError);
    CHECK_THROWS_AS(parse_label(""), ParseError);
    CHECK(is_wine(ClassLabel::LQ));
    CHECK_FALSE(is_wine(ClassLabel::Ea));
    CHECK(parse_experiment("exp1") == Experiment::ThreeClass);
    CHECK(parse_experiment("exp2") == Experiment::FourClass);
    CHECK(to_string(Experiment::FourClass) == "exp2");
    CHECK_THROWS_AS(parse_experiment("exp3"), ParseError);
}

TEST_CASE("format_double gives the shortest round-tripping text") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(-1.5e-7) == "-1.5e-07");
    for (double v : {1.0 / 3.0, 171.89189189189189, 1e300, -2.5e-308}) {
        CHECK(parse_double(format_double(v), "x") == v);
    }
}

TEST_CASE("strict numeric parsing") {
    CHECK(parse_double(" 2.5", "f") == 2.5);
    CHECK_THROWS_AS(parse_double("2.5x", "f"), ParseError);
    CHECK_THROWS_AS(parse_double("", "f"), ParseError);
    CHECK(parse_int("42", "f") == 42);
    CHECK_THROWS_AS(parse_int("4.2", "f"), ParseError);
}

TEST_CASE("split keeps empty fields") {
    const auto parts = split("a,,b,", ',');
    REQUIRE(parts.size() == 4);
    CHECK(parts[0] == "a");
    CHECK(parts[1].empty());
    CHECK(parts[3].empty());
}

TEST_CASE("fnv1a matches published test vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("rng streams are reproducible and seed dependent") {
    Rng a(5), b(5), c(6);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        differs |= x != c.uniform();
    }
    CHECK(differs);
}

TEST_CASE("rng normal has unit moments") {
    Rng r(11);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(s2 / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("rng below and shuffle") {
    Rng r(3);
    std::vector<int> hist(5, 0);
    for (int i = 0; i < 50000; ++i) ++hist[r.below(5)];
    for (int h : hist) CHECK(std::abs(h - 10000) < 500);

    std::vector<int> v(20);
    std::iota(v.begin(), v.end(), 0);
    r.shuffle(v);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 20);
}

TEST_CASE("derive_seed separates tags") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t t = 0; t < 1000; ++t) seen.insert(derive_seed(42, t));
    CHECK(seen.size() == 1000);
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("parallel_for visits each index once for any worker count") {
    for (unsigned w : {1u, 2u, 7u}) {
        std::vector<std::atomic<int>> hits(100);
        parallel_for(hits.size(), w, [&](std::size_t i) { ++hits[i]; });
        for (auto& h : hits) CHECK(h.load() == 1);
    }
    CHECK(default_workers() >= 1);
}

TEST_CASE("parallel_for rethrows a task failure") {
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 4) throw InputError("boom");
                    }),
                    InputError);
}

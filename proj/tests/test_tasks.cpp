#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "mmaml/tasks.hpp"

using namespace mmaml;

TEST_CASE("mode sets are ordered prefixes") {
    CHECK(mode_set(2) == std::vector<FunctionMode>{FunctionMode::Sinusoidal, FunctionMode::Linear});
    CHECK(mode_set(3).back() == FunctionMode::Quadratic);
    CHECK(mode_set(5).size() == 5);
    CHECK_THROWS_AS(mode_set(4), Error);
}

TEST_CASE("mode frequencies are uniform over the configured set") {
    RngStream rng(123);
    auto modes = mode_set(2);
    std::map<FunctionMode, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[sample_task(modes, rng).mode]++;
    for (auto [mode, c] : counts) {
        double freq = static_cast<double>(c) / n;
        CHECK(freq > 0.45);
        CHECK(freq < 0.55);
    }
}

TEST_CASE("sampled parameters stay inside their documented ranges") {
    RngStream rng(99);
    auto modes = mode_set(5);
    bool saw_negative_split = false, saw_positive_split = false;
    for (int i = 0; i < 100000; ++i) {
        TaskSpec s = sample_task(modes, rng);
        switch (s.mode) {
            case FunctionMode::Sinusoidal:
                CHECK(s.A >= 0.1);
                CHECK(s.A <= 5.0);
                CHECK(s.w >= 0.5);
                CHECK(s.w <= 2.0);
                CHECK(s.b >= 0.0);
                CHECK(s.b <= 6.2831853072);
                break;
            case FunctionMode::Linear:
                CHECK(std::abs(s.A) <= 3.0);
                CHECK(std::abs(s.b) <= 3.0);
                break;
            case FunctionMode::Quadratic:
            case FunctionMode::L1Norm:
                CHECK(std::abs(s.A) >= 0.02);
                CHECK(std::abs(s.A) <= 0.15);
                CHECK(std::abs(s.c) <= 3.0);
                CHECK(std::abs(s.b) <= 3.0);
                (s.A < 0 ? saw_negative_split : saw_positive_split) = true;
                break;
            case FunctionMode::Tanh:
                CHECK(std::abs(s.A) <= 3.0);
                CHECK(std::abs(s.c) <= 3.0);
                CHECK(std::abs(s.b) <= 3.0);
                break;
        }
    }
    CHECK(saw_negative_split);
    CHECK(saw_positive_split);
}

TEST_CASE("same seed gives the same task sequence") {
    auto modes = mode_set(5);
    RngStream a(7), b(7);
    for (int i = 0; i < 100; ++i) {
        TaskSpec sa = sample_task(modes, a), sb = sample_task(modes, b);
        CHECK(sa.mode == sb.mode);
        CHECK(sa.A == sb.A);
        CHECK(sa.w == sb.w);
        CHECK(sa.c == sb.c);
        CHECK(sa.b == sb.b);
    }
}

TEST_CASE("empty mode set is an error") {
    RngStream rng(0);
    CHECK_THROWS_AS(sample_task({}, rng), Error);
}

TEST_CASE("evaluate_function closed forms") {
    CHECK(evaluate_function({FunctionMode::Linear, 1.0, 0, 0, 0.0}, 2.0) == 2.0);
    CHECK(evaluate_function({FunctionMode::Quadratic, 0.1, 0, 0.0, 0.0}, 3.0) ==
          doctest::Approx(0.9).epsilon(1e-15));
    CHECK(evaluate_function({FunctionMode::L1Norm, 0.1, 0, 1.0, 2.0}, -1.0) ==
          doctest::Approx(2.2).epsilon(1e-15));
    TaskSpec sine{FunctionMode::Sinusoidal, 2.0, 1.5, 0, 0.25};
    CHECK(evaluate_function(sine, 0.8) == doctest::Approx(2.0 * std::sin(1.5 * 0.8 + 0.25)));
    TaskSpec th{FunctionMode::Tanh, -2.0, 0, 1.0, 0.5};
    CHECK(evaluate_function(th, 3.0) == doctest::Approx(-2.0 * std::tanh(2.0) + 0.5));
}

TEST_CASE("zero noise reproduces the ground truth exactly and support is sorted") {
    RngStream rng(5);
    TaskSpec spec = sample_task(mode_set(5), rng);
    TaskSample t = realize_task(spec, 5, 10, 0.0, rng);
    CHECK(t.support.size() == 5);
    CHECK(t.query.size() == 10);
    for (const Point& p : t.support) CHECK(p.y == evaluate_function(spec, p.x));
    for (const Point& p : t.query) CHECK(p.y == evaluate_function(spec, p.x));
    for (std::size_t i = 1; i < t.support.size(); ++i) CHECK(t.support[i - 1].x <= t.support[i].x);
    CHECK(t.mode_label == mode_index(spec.mode));
}

TEST_CASE("x values live in [-5, 5]") {
    RngStream rng(17);
    for (int i = 0; i < 200; ++i) {
        TaskSample t = realize_task(sample_task(mode_set(5), rng), 5, 10, 0.3, rng);
        for (const Point& p : t.support) {
            CHECK(p.x >= -5.0);
            CHECK(p.x <= 5.0);
        }
        for (const Point& p : t.query) {
            CHECK(p.x >= -5.0);
            CHECK(p.x <= 5.0);
        }
    }
}

TEST_CASE("empirical noise std matches sigma=0.3") {
    RngStream rng(31);
    const std::size_t total = 100000;
    double sq = 0.0, mean = 0.0;
    std::size_t count = 0;
    while (count < total) {
        TaskSpec spec = sample_task(mode_set(5), rng);
        TaskSample t = realize_task(spec, 5, 10, 0.3, rng);
        for (const auto& pts : {t.support, t.query})
            for (const Point& p : pts) {
                double r = p.y - evaluate_function(spec, p.x);
                mean += r;
                sq += r * r;
                ++count;
            }
    }
    mean /= static_cast<double>(count);
    double std_dev = std::sqrt(sq / static_cast<double>(count) - mean * mean);
    CHECK(std_dev > 0.295);
    CHECK(std_dev < 0.305);
}

TEST_CASE("realize_task validates arguments") {
    RngStream rng(1);
    TaskSpec spec = sample_task(mode_set(2), rng);
    CHECK_THROWS_AS(realize_task(spec, 0, 10, 0.3, rng), Error);
    CHECK_THROWS_AS(realize_task(spec, 5, 0, 0.3, rng), Error);
    CHECK_THROWS_AS(realize_task(spec, 5, 10, -0.1, rng), Error);
}

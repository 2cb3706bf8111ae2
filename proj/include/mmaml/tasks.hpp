#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mmaml/rng.hpp"
#include "mmaml/tensor.hpp"

namespace mmaml {

// The five function families of the multimodal regression distribution.
// Mode-set configurations are ordered prefixes of this list:
// 2 modes = {Sinusoidal, Linear}, 3 adds Quadratic, 5 takes all.
enum class FunctionMode { Sinusoidal, Linear, Quadratic, L1Norm, Tanh };

constexpr std::array<FunctionMode, 5> kAllModes = {
    FunctionMode::Sinusoidal, FunctionMode::Linear, FunctionMode::Quadratic,
    FunctionMode::L1Norm, FunctionMode::Tanh};

inline const char* mode_name(FunctionMode m) {
    switch (m) {
        case FunctionMode::Sinusoidal: return "Sinusoidal";
        case FunctionMode::Linear: return "Linear";
        case FunctionMode::Quadratic: return "Quadratic";
        case FunctionMode::L1Norm: return "L1Norm";
        case FunctionMode::Tanh: return "Tanh";
    }
    return "?";
}

inline FunctionMode mode_from_name(const std::string& s) {
    for (FunctionMode m : kAllModes)
        if (s == mode_name(m)) return m;
    throw Error("unknown function mode: " + s);
}

inline std::vector<FunctionMode> mode_set(int n_modes) {
    if (n_modes != 2 && n_modes != 3 && n_modes != 5)
        throw Error("mode set size must be 2, 3, or 5, got " + std::to_string(n_modes));
    return {kAllModes.begin(), kAllModes.begin() + n_modes};
}

inline int mode_index(FunctionMode m) {
    return static_cast<int>(m);
}

// One sampled ground-truth function: the mode plus its named parameters.
// Sinusoidal uses A, w, b; Linear uses A, b; the rest use A, c, b.
struct TaskSpec {
    FunctionMode mode = FunctionMode::Sinusoidal;
    double A = 0.0;
    double w = 0.0;
    double c = 0.0;
    double b = 0.0;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Realized support/query sets of one task. Support is stored sorted
// ascending by x; mode_label indexes into the canonical 5-mode order.
struct TaskSample {
    std::vector<Point> support;
    std::vector<Point> query;
    TaskSpec spec;
    int mode_label = 0;
};

inline TaskSpec sample_task(const std::vector<FunctionMode>& modes, RngStream& rng) {
    if (modes.empty()) throw Error("sample_task: empty mode set");
    TaskSpec spec;
    spec.mode = modes[static_cast<std::size_t>(rng.next_below(modes.size()))];
    auto split_amplitude = [&rng] {
        // A in [-0.15,-0.02] u [0.02,0.15]: fair coin for the sign region,
        // then uniform within it
        double mag = rng.uniform(0.02, 0.15);
        return rng.coin() ? mag : -mag;
    };
    switch (spec.mode) {
        case FunctionMode::Sinusoidal:
            spec.A = rng.uniform(0.1, 5.0);
            spec.w = rng.uniform(0.5, 2.0);
            spec.b = rng.uniform(0.0, 6.283185307179586476925286766559);
            break;
        case FunctionMode::Linear:
            spec.A = rng.uniform(-3.0, 3.0);
            spec.b = rng.uniform(-3.0, 3.0);
            break;
        case FunctionMode::Quadratic:
        case FunctionMode::L1Norm:
            spec.A = split_amplitude();
            spec.c = rng.uniform(-3.0, 3.0);
            spec.b = rng.uniform(-3.0, 3.0);
            break;
        case FunctionMode::Tanh:
            spec.A = rng.uniform(-3.0, 3.0);
            spec.c = rng.uniform(-3.0, 3.0);
            spec.b = rng.uniform(-3.0, 3.0);
            break;
    }
    return spec;
}

// Noise-free ground truth of the sampled function at x.
inline double evaluate_function(const TaskSpec& s, double x) {
    switch (s.mode) {
        case FunctionMode::Sinusoidal: return s.A * std::sin(s.w * x + s.b);
        case FunctionMode::Linear: return s.A * x + s.b;
        case FunctionMode::Quadratic: return s.A * (x - s.c) * (x - s.c) + s.b;
        case FunctionMode::L1Norm: return s.A * std::abs(x - s.c) + s.b;
        case FunctionMode::Tanh: return s.A * std::tanh(x - s.c) + s.b;
    }
    throw Error("evaluate_function: bad mode");
}

// Draw K support and L query points, x ~ U[-5,5], y = f(x) + N(0, sigma^2).
inline TaskSample realize_task(const TaskSpec& spec, std::size_t K, std::size_t L,
                               double noise_sigma, RngStream& rng) {
    if (K < 1 || L < 1) throw Error("realize_task: K and L must be >= 1");
    if (noise_sigma < 0.0) throw Error("realize_task: negative noise sigma");
    TaskSample sample;
    sample.spec = spec;
    sample.mode_label = mode_index(spec.mode);
    auto draw = [&](std::size_t n, std::vector<Point>& out) {
        out.resize(n);
        for (auto& p : out) {
            p.x = rng.uniform(-5.0, 5.0);
            p.y = evaluate_function(spec, p.x);
            if (noise_sigma > 0.0) p.y += rng.normal(0.0, noise_sigma);
        }
    };
    draw(K, sample.support);
    draw(L, sample.query);
    std::sort(sample.support.begin(), sample.support.end(),
              [](const Point& a, const Point& b) { return a.x < b.x; });
    return sample;
}

inline Tensor xs_of(const std::vector<Point>& pts) {
    Tensor t({pts.size(), 1});
    for (std::size_t i = 0; i < pts.size(); ++i) t.data[i] = pts[i].x;
    return t;
}

inline Tensor ys_of(const std::vector<Point>& pts) {
    Tensor t({pts.size()});
    for (std::size_t i = 0; i < pts.size(); ++i) t.data[i] = pts[i].y;
    return t;
}

}  // namespace mmaml

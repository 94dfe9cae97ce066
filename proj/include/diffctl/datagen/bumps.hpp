#pragma once

// Random Gaussian-superposition initial states and space-time controls.

#include <array>
#include <cmath>
#include <vector>

#include "diffctl/burgers/solver.hpp"
#include "diffctl/error.hpp"
#include "diffctl/rng.hpp"

namespace diffctl::datagen {

struct GaussianBumpParams {
    double a = 0.0;
    double b = 0.5;
    double sigma = 0.1;

    double operator()(double x) const {
        const double d = x - b;
        return a * std::exp(-d * d / (2.0 * sigma * sigma));
    }
};

/// u0(x) = sum of two bumps.
struct InitialConditionParams {
    std::array<GaussianBumpParams, 2> bumps;

    double operator()(double x) const { return bumps[0](x) + bumps[1](x); }
};

/// One separable space-time bump a * g(x; b1, s1) * g(t; b2, s2).
struct SpaceTimeBump {
    double a = 0.0;
    double b_x = 0.5, sigma_x = 0.1;
    double b_t = 0.5, sigma_t = 0.1;

    double operator()(double t, double x) const {
        const double dx = x - b_x, dt = t - b_t;
        return a * std::exp(-dx * dx / (2.0 * sigma_x * sigma_x)) * std::exp(-dt * dt / (2.0 * sigma_t * sigma_t));
    }
};

struct ControlParams {
    std::array<SpaceTimeBump, 8> bumps;

    double operator()(double t, double x) const {
        double s = 0.0;
        for (const auto& b : bumps) s += b(t, x);
        return s;
    }
};

inline InitialConditionParams draw_initial_condition(Rng& rng) {
    InitialConditionParams p;
    // Draw order is part of the dataset's reproducibility contract.
    p.bumps[0].a = rng.uniform(0.0, 2.0);
    p.bumps[1].a = rng.uniform(-2.0, 0.0);
    p.bumps[0].b = rng.uniform(0.2, 0.4);
    p.bumps[1].b = rng.uniform(0.6, 0.8);
    p.bumps[0].sigma = rng.uniform(0.05, 0.15);
    p.bumps[1].sigma = rng.uniform(0.05, 0.15);
    return p;
}

inline ControlParams draw_control(Rng& rng) {
    ControlParams p;
    for (std::size_t i = 0; i < p.bumps.size(); ++i) {
        auto& b = p.bumps[i];
        b.b_x = rng.uniform(0.0, 1.0);
        b.b_t = rng.uniform(0.0, 1.0);
        b.sigma_x = rng.uniform(0.05, 0.2);
        b.sigma_t = rng.uniform(0.05, 0.2);
        const bool active = (i == 0) || rng.coin(0.5);
        const double a = rng.uniform(-1.5, 1.5);
        b.a = active ? a : 0.0;
    }
    return p;
}

/// Evaluates u0 on the grid and pins the boundary entries to zero.
inline std::vector<double> evaluate_initial_condition(const InitialConditionParams& p, const burgers::SpatialGrid& grid) {
    std::vector<double> u(grid.n_x);
    for (int i = 0; i < grid.n_x; ++i) u[i] = p(grid.x(i));
    u.front() = 0.0;
    u.back() = 0.0;
    return u;
}

/// Evaluates the control at window midpoints t_j = (j + 0.5) * horizon / n_windows.
inline std::vector<double> evaluate_control(const ControlParams& p, const burgers::SpatialGrid& grid,
                                            const burgers::TimeDiscretization& time) {
    std::vector<double> w(std::size_t(time.n_windows) * grid.n_x);
    for (int j = 0; j < time.n_windows; ++j) {
        const double t = (j + 0.5) * time.window_duration();
        for (int i = 0; i < grid.n_x; ++i) w[std::size_t(j) * grid.n_x + i] = p(t, grid.x(i));
    }
    return w;
}

inline std::vector<double> sample_initial_condition(Rng& rng, const burgers::SpatialGrid& grid) {
    return evaluate_initial_condition(draw_initial_condition(rng), grid);
}

inline std::vector<double> sample_control(Rng& rng, const burgers::SpatialGrid& grid,
                                          const burgers::TimeDiscretization& time) {
    return evaluate_control(draw_control(rng), grid, time);
}

} // namespace diffctl::datagen

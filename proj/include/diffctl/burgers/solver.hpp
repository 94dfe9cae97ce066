#pragma once

// Finite-difference solver for the forced viscous Burgers' equation
//
//   u_t = -u u_x + nu u_xx + w(t, x),   x in [0, 1],   u(t, 0) = u(t, 1) = 0
//
// Explicit Euler in time, central second difference for u_xx. The advection
// term uses central differences by default; first-order upwind is available
// for comparison. The control is piecewise constant over `n_windows` equal
// windows and the state is recorded at every window boundary.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffctl/error.hpp"

namespace diffctl::burgers {

struct SpatialGrid {
    int n_x = 128;

    double dx() const { return 1.0 / (n_x - 1); }
    double x(int i) const { return i * dx(); }

    void validate() const {
        if (n_x < 3) throw ConfigError("SpatialGrid: n_x must be >= 3");
    }
};

struct TimeDiscretization {
    double horizon = 1.0;
    int n_substeps = 10000;
    int n_windows = 10;

    double dt() const { return horizon / n_substeps; }
    int substeps_per_window() const { return n_substeps / n_windows; }
    double window_duration() const { return horizon / n_windows; }

    void validate() const {
        if (horizon <= 0) throw ConfigError("TimeDiscretization: horizon must be positive");
        if (n_windows < 1 || n_substeps < 1) throw ConfigError("TimeDiscretization: step counts must be positive");
        if (n_substeps % n_windows != 0)
            throw ConfigError("TimeDiscretization: n_substeps must be divisible by n_windows");
    }
};

enum class AdvectionScheme { central, upwind };

inline std::string scheme_id(AdvectionScheme s) {
    return s == AdvectionScheme::central ? "euler-central" : "euler-upwind";
}

inline AdvectionScheme parse_scheme(const std::string& s) {
    if (s == "euler-central" || s == "central") return AdvectionScheme::central;
    if (s == "euler-upwind" || s == "upwind") return AdvectionScheme::upwind;
    throw ConfigError("unknown advection scheme '" + s + "'");
}

struct PhysicsParams {
    double nu = 0.01;
    AdvectionScheme scheme = AdvectionScheme::central;
};

/// State sequence u[0..n_windows] and control w[0..n_windows-1], row-major.
struct Trajectory {
    int n_windows = 0;
    int n_x = 0;
    std::vector<double> u; // (n_windows + 1) * n_x
    std::vector<double> w; // n_windows * n_x

    Trajectory() = default;
    Trajectory(int windows, int nx)
        : n_windows(windows), n_x(nx), u(std::size_t(windows + 1) * nx, 0.0), w(std::size_t(windows) * nx, 0.0) {}

    std::span<double> u_row(int t) { return {u.data() + std::size_t(t) * n_x, std::size_t(n_x)}; }
    std::span<const double> u_row(int t) const { return {u.data() + std::size_t(t) * n_x, std::size_t(n_x)}; }
    std::span<double> w_row(int t) { return {w.data() + std::size_t(t) * n_x, std::size_t(n_x)}; }
    std::span<const double> w_row(int t) const { return {w.data() + std::size_t(t) * n_x, std::size_t(n_x)}; }

    bool operator==(const Trajectory&) const = default;
};

/// Checks the step-independent stability bound nu*dt/dx^2 <= 0.5.
inline void check_diffusion_stability(const SpatialGrid& grid, double dt, const PhysicsParams& params) {
    if (params.nu < 0) throw ConfigError("PhysicsParams: nu must be >= 0");
    const double r = params.nu * dt / (grid.dx() * grid.dx());
    if (r > 0.5)
        throw ConfigError("explicit diffusion bound violated: nu*dt/dx^2 = " + std::to_string(r) + " > 0.5");
}

/// One explicit Euler update of `u` under forcing `w_row`, written to `out`.
/// `out` must not alias `u`. Boundary entries of `out` are pinned to zero.
inline void step(std::span<const double> u, std::span<const double> w_row, double dt, const SpatialGrid& grid,
                 const PhysicsParams& params, std::span<double> out) {
    const int n = grid.n_x;
    if (static_cast<int>(u.size()) != n || static_cast<int>(w_row.size()) != n || static_cast<int>(out.size()) != n)
        throw ShapeError("burgers::step: row length does not match grid");
    const double dx = grid.dx();
    const double inv_dx = 1.0 / dx;
    const double inv_dx2 = inv_dx * inv_dx;
    const double nu = params.nu;

    double umax = 0.0;
    std::ptrdiff_t argmax = 0;
    for (int i = 1; i < n - 1; ++i) {
        const double a = std::abs(u[i]);
        if (!(a <= umax)) {
            umax = a;
            argmax = i;
        }
    }
    if (!std::isfinite(umax)) throw NumericalBlowup("burgers::step: non-finite input state", argmax);
    if (umax * dt * inv_dx > 1.0) throw NumericalBlowup("burgers::step: CFL bound |u|dt/dx <= 1 violated", argmax);
    if (params.scheme == AdvectionScheme::central && umax * umax * dt > 2.0 * nu)
        throw NumericalBlowup("burgers::step: advection-diffusion bound u^2 dt <= 2 nu violated", argmax);

    out[0] = 0.0;
    out[n - 1] = 0.0;
    for (int i = 1; i < n - 1; ++i) {
        const double ui = u[i];
        double adv;
        if (params.scheme == AdvectionScheme::central) {
            adv = ui * (u[i + 1] - u[i - 1]) * (0.5 * inv_dx);
        } else {
            adv = ui > 0 ? ui * (ui - u[i - 1]) * inv_dx : ui * (u[i + 1] - ui) * inv_dx;
        }
        const double lap = (u[i + 1] - 2.0 * ui + u[i - 1]) * inv_dx2;
        const double v = ui + dt * (-adv + nu * lap + w_row[i]);
        if (!std::isfinite(v)) throw NumericalBlowup("burgers::step: non-finite state", i);
        out[i] = v;
    }
}

inline std::vector<double> step(std::span<const double> u, std::span<const double> w_row, double dt,
                                const SpatialGrid& grid, const PhysicsParams& params) {
    std::vector<double> out(u.size());
    step(u, w_row, dt, grid, params, out);
    return out;
}

/// Integrates from `u0` over the full horizon holding `w` row j fixed inside
/// window j. `w` is n_windows x n_x, row-major.
inline Trajectory simulate(std::span<const double> u0, std::span<const double> w, const SpatialGrid& grid,
                           const TimeDiscretization& time, const PhysicsParams& params) {
    grid.validate();
    time.validate();
    const int n = grid.n_x;
    if (static_cast<int>(u0.size()) != n) throw ShapeError("burgers::simulate: u0 length does not match grid");
    if (w.size() != std::size_t(time.n_windows) * n) throw ShapeError("burgers::simulate: w shape mismatch");
    const double dt = time.dt();
    check_diffusion_stability(grid, dt, params);

    Trajectory traj(time.n_windows, n);
    std::copy(u0.begin(), u0.end(), traj.u.begin());
    traj.w.assign(w.begin(), w.end());

    std::vector<double> cur(u0.begin(), u0.end());
    std::vector<double> next(n);
    const int per_window = time.substeps_per_window();
    for (int j = 0; j < time.n_windows; ++j) {
        const auto w_row = traj.w_row(j);
        for (int s = 0; s < per_window; ++s) {
            step(cur, w_row, dt, grid, params, next);
            cur.swap(next);
        }
        std::copy(cur.begin(), cur.end(), traj.u_row(j + 1).begin());
    }
    return traj;
}

} // namespace diffctl::burgers

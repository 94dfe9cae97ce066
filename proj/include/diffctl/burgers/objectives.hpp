#pragma once

#include <span>

#include "diffctl/burgers/solver.hpp"
#include "diffctl/datagen/setting.hpp"

namespace diffctl::burgers {

struct Objectives {
    double j_actual = 0.0;
    double j_energy = 0.0;
};

// Rectangle rule with weight dx on every grid point. Boundary entries are
// pinned to zero so including them is inert.

inline double control_error(std::span<const double> u_final, std::span<const double> u_target,
                            const TaskSetting& setting, const SpatialGrid& grid) {
    const int n = grid.n_x;
    if (static_cast<int>(u_final.size()) != n || static_cast<int>(u_target.size()) != n || setting.n_x() != n)
        throw ShapeError("control_error: shape mismatch");
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!setting.observation_mask[i]) continue;
        const double d = u_final[i] - u_target[i];
        acc += d * d;
    }
    return acc * grid.dx();
}

inline double control_energy(std::span<const double> w, const SpatialGrid& grid, const TimeDiscretization& time) {
    if (w.size() != std::size_t(time.n_windows) * grid.n_x) throw ShapeError("control_energy: w shape mismatch");
    double acc = 0.0;
    for (double v : w) acc += v * v;
    return acc * grid.dx() * time.window_duration();
}

inline Objectives objectives(std::span<const double> u_final, std::span<const double> u_target,
                             std::span<const double> w, const TaskSetting& setting, const SpatialGrid& grid,
                             const TimeDiscretization& time) {
    return {control_error(u_final, u_target, setting, grid), control_energy(w, grid, time)};
}

} // namespace diffctl::burgers

#pragma once

// Plain loop-based Burgers integrator used as an independent oracle: same PDE,
// written without the library's step/simulate code paths, on an arbitrary
// refinement of the grid and time step.

#include <cmath>
#include <vector>

namespace testing_support {

/// Integrates u_t = -u u_x + nu u_xx + w on [0, 1] with zero Dirichlet ends.
/// `u0` and the rows of `w` are given on the coarse grid of `n_coarse` points;
/// the fine grid has (n_coarse - 1) * refine + 1 points and coarse values are
/// linearly interpolated onto it. Returns the fine state at t = horizon.
inline std::vector<double> reference_run(const std::vector<double>& u0, const std::vector<double>& w, int n_coarse,
                                         int n_windows, double horizon, long substeps, double nu, int refine) {
    const int n = (n_coarse - 1) * refine + 1;
    const double dx = 1.0 / (n - 1);
    const double dt = horizon / double(substeps);
    auto interp = [&](const double* row) {
        std::vector<double> f(n);
        for (int i = 0; i < n; ++i) {
            const int c = i / refine, r = i % refine;
            f[i] = r == 0 ? row[c] : row[c] + (row[c + 1] - row[c]) * double(r) / refine;
        }
        return f;
    };
    std::vector<double> u = interp(u0.data()), next(n, 0.0);
    const long per_window = substeps / n_windows;
    for (int j = 0; j < n_windows; ++j) {
        const auto f = interp(w.data() + std::size_t(j) * n_coarse);
        for (long s = 0; s < per_window; ++s) {
            for (int i = 1; i < n - 1; ++i) {
                const double ux = (u[i + 1] - u[i - 1]) / (2 * dx);
                const double uxx = (u[i + 1] - 2 * u[i] + u[i - 1]) / (dx * dx);
                next[i] = u[i] + dt * (-u[i] * ux + nu * uxx + f[i]);
            }
            next[0] = next[n - 1] = 0.0;
            u.swap(next);
        }
    }
    return u;
}

/// Restricts a fine-grid state back to the coarse points.
inline std::vector<double> restrict_to_coarse(const std::vector<double>& fine, int n_coarse, int refine) {
    std::vector<double> c(n_coarse);
    for (int i = 0; i < n_coarse; ++i) c[i] = fine[std::size_t(i) * refine];
    return c;
}

inline double relative_l2(const std::vector<double>& a, const std::vector<double>& ref) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ref[i]) * (a[i] - ref[i]);
        den += ref[i] * ref[i];
    }
    return std::sqrt(num / den);
}

} // namespace testing_support

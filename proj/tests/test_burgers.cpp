#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "diffctl/burgers/objectives.hpp"
#include "diffctl/burgers/solver.hpp"
#include "diffctl/rng.hpp"
#include "reference_solver.hpp"

using namespace diffctl;
using namespace diffctl::burgers;

namespace {

std::vector<double> random_row(Rng& rng, int n, double scale) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    v.front() = v.back() = 0.0;
    return v;
}

std::vector<double> pulse(const SpatialGrid& g) {
    std::vector<double> u(g.n_x);
    for (int i = 0; i < g.n_x; ++i) u[i] = std::exp(-std::pow(g.x(i) - 0.5, 2) / (2 * 0.01));
    u.front() = u.back() = 0.0;
    return u;
}

} // namespace

TEST(BurgersStep, ZeroIsFixedPoint) {
    SpatialGrid g;
    std::vector<double> z(g.n_x, 0.0);
    EXPECT_EQ(step(z, z, 1e-4, g, PhysicsParams{}), z);
}

TEST(BurgersStep, BoundaryStaysPinnedForRandomInputs) {
    SpatialGrid g;
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        auto u = random_row(rng, g.n_x, 1.0);
        auto w = random_row(rng, g.n_x, 3.0);
        w.front() = rng.uniform(-1, 1);
        auto out = step(u, w, 1e-4, g, PhysicsParams{});
        EXPECT_EQ(out.front(), 0.0);
        EXPECT_EQ(out.back(), 0.0);
    }
}

TEST(BurgersStep, CentralUpdateMatchesHandFormula) {
    SpatialGrid g{5};
    std::vector<double> u{0, 0.2, -0.1, 0.3, 0}, w{0, 1, 2, 3, 0};
    const double dt = 1e-3, dx = 0.25, nu = 0.01;
    auto out = step(u, w, dt, g, PhysicsParams{nu, AdvectionScheme::central});
    for (int i = 1; i < 4; ++i) {
        const double expect = u[i] + dt * (-u[i] * (u[i + 1] - u[i - 1]) / (2 * dx) +
                                           nu * (u[i + 1] - 2 * u[i] + u[i - 1]) / (dx * dx) + w[i]);
        EXPECT_NEAR(out[i], expect, 1e-15);
    }
}

TEST(BurgersStep, UpwindFollowsSignOfVelocity) {
    SpatialGrid g{5};
    std::vector<double> u{0, 0.2, -0.1, 0.3, 0}, w(5, 0.0);
    const double dt = 1e-3, dx = 0.25, nu = 0.0;
    auto out = step(u, w, dt, g, PhysicsParams{nu, AdvectionScheme::upwind});
    EXPECT_NEAR(out[1], 0.2 - dt * 0.2 * (0.2 - 0.0) / dx, 1e-15);
    EXPECT_NEAR(out[2], -0.1 - dt * -0.1 * (0.3 - -0.1) / dx, 1e-15);
}

TEST(BurgersStep, BlowupNamesOffendingIndex) {
    SpatialGrid g;
    std::vector<double> u(g.n_x, 0.0), w(g.n_x, 0.0);
    u[40] = 50.0;
    try {
        step(u, w, 1e-4, g, PhysicsParams{});
        FAIL() << "expected a blowup";
    } catch (const NumericalBlowup& e) {
        EXPECT_EQ(e.index(), 40);
    }
    u[40] = std::nan("");
    EXPECT_THROW(step(u, w, 1e-4, g, PhysicsParams{}), NumericalBlowup);
}

TEST(BurgersSimulate, ZeroInputsStayZero) {
    SpatialGrid g;
    TimeDiscretization t;
    std::vector<double> u0(g.n_x, 0.0), w(std::size_t(t.n_windows) * g.n_x, 0.0);
    auto traj = simulate(u0, w, g, t, PhysicsParams{});
    for (double v : traj.u) EXPECT_EQ(v, 0.0);
}

TEST(BurgersSimulate, FirstSnapshotIsInputAndBoundariesAreZero) {
    SpatialGrid g;
    TimeDiscretization t;
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        auto u0 = pulse(g);
        for (auto& v : u0) v *= rng.uniform(-1, 1);
        std::vector<double> w(std::size_t(t.n_windows) * g.n_x);
        for (auto& v : w) v = rng.uniform(-1, 1);
        auto traj = simulate(u0, w, g, t, PhysicsParams{});
        EXPECT_TRUE(std::equal(u0.begin(), u0.end(), traj.u.begin()));
        for (int s = 0; s <= t.n_windows; ++s) {
            EXPECT_EQ(traj.u_row(s).front(), 0.0);
            EXPECT_EQ(traj.u_row(s).back(), 0.0);
        }
        EXPECT_EQ(simulate(u0, w, g, t, PhysicsParams{}), traj);
    }
}

TEST(BurgersSimulate, PulseMatchesRefinedReference) {
    SpatialGrid g;
    TimeDiscretization t{0.1, 1000, 1};
    auto u0 = pulse(g);
    std::vector<double> w(g.n_x, 0.0);
    auto traj = simulate(u0, w, g, t, PhysicsParams{});
    auto fine = testing_support::reference_run(u0, w, g.n_x, 1, 0.1, 10000, 0.01, 4);
    auto ref = testing_support::restrict_to_coarse(fine, g.n_x, 4);
    std::vector<double> uT(traj.u_row(1).begin(), traj.u_row(1).end());
    EXPECT_LT(testing_support::relative_l2(uT, ref), 1e-2);
}

TEST(BurgersSimulate, TimeErrorIsFirstOrder) {
    SpatialGrid g;
    Rng rng(3);
    auto u0 = pulse(g);
    std::vector<double> w(std::size_t(10) * g.n_x);
    for (auto& v : w) v = rng.uniform(-0.5, 0.5);
    auto final_state = [&](int substeps) {
        auto tr = simulate(u0, w, g, TimeDiscretization{1.0, substeps, 10}, PhysicsParams{});
        return std::vector<double>(tr.u_row(10).begin(), tr.u_row(10).end());
    };
    auto ref = final_state(80000);
    const double e1 = testing_support::relative_l2(final_state(10000), ref);
    const double e2 = testing_support::relative_l2(final_state(20000), ref);
    EXPECT_GT(e1 / e2, 1.8);
    EXPECT_LT(e1 / e2, 2.8);
}

TEST(BurgersSimulate, RejectsUnstableDiffusionSetup) {
    SpatialGrid g;
    TimeDiscretization t{1.0, 100, 10};
    std::vector<double> u0(g.n_x, 0.0), w(std::size_t(10) * g.n_x, 0.0);
    EXPECT_THROW(simulate(u0, w, g, t, PhysicsParams{1.0}), ConfigError);
}

TEST(BurgersObjectives, ConstantOffsetClosedForm) {
    SpatialGrid g;
    TimeDiscretization t;
    auto setting = TaskSetting::make(SettingKind::FO_FC, g.n_x);
    std::vector<double> ud(g.n_x, 0.3), uT(g.n_x, 0.4), w(std::size_t(t.n_windows) * g.n_x, 0.0);
    auto o = objectives(uT, ud, w, setting, g, t);
    EXPECT_NEAR(o.j_actual, 0.01 * g.dx() * 128, 1e-12);
    EXPECT_EQ(o.j_energy, 0.0);
    EXPECT_EQ(objectives(ud, ud, w, setting, g, t).j_actual, 0.0);
}

TEST(BurgersObjectives, EnergyAndObservationMask) {
    SpatialGrid g;
    TimeDiscretization t;
    std::vector<double> w(std::size_t(t.n_windows) * g.n_x, 2.0);
    EXPECT_NEAR(control_energy(w, g, t), 4.0 * w.size() * g.dx() * 0.1, 1e-12);
    auto po = TaskSetting::make(SettingKind::PO_FC, g.n_x);
    std::vector<double> ud(g.n_x, 0.0), uT(g.n_x, 1.0);
    EXPECT_NEAR(control_error(uT, ud, po, g), 64 * g.dx(), 1e-12);
}

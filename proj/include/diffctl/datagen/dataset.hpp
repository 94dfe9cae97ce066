#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "diffctl/burgers/solver.hpp"
#include "diffctl/datagen/bumps.hpp"
#include "diffctl/datagen/setting.hpp"
#include "diffctl/io/tensor_file.hpp"
#include "diffctl/rng.hpp"

namespace diffctl::datagen {

inline constexpr int kDatasetFormatVersion = 1;

/// Solver configuration shared by generation and evaluation.
struct SolverSetup {
    burgers::SpatialGrid grid;
    burgers::TimeDiscretization time;
    burgers::PhysicsParams physics;

    void validate() const {
        grid.validate();
        time.validate();
        burgers::check_diffusion_stability(grid, time.dt(), physics);
    }

    Json to_json() const {
        return {{"n_x", grid.n_x},
                {"horizon", time.horizon},
                {"n_substeps", time.n_substeps},
                {"n_windows", time.n_windows},
                {"nu", physics.nu},
                {"scheme", burgers::scheme_id(physics.scheme)}};
    }

    static SolverSetup from_json(const Json& j) {
        SolverSetup s;
        s.grid.n_x = j.at("n_x").get<int>();
        s.time.horizon = j.at("horizon").get<double>();
        s.time.n_substeps = j.at("n_substeps").get<int>();
        s.time.n_windows = j.at("n_windows").get<int>();
        s.physics.nu = j.at("nu").get<double>();
        s.physics.scheme = burgers::parse_scheme(j.at("scheme").get<std::string>());
        return s;
    }

    bool operator==(const SolverSetup& o) const { return to_json() == o.to_json(); }
};

/// In-memory dataset. `u` holds the setting-applied states (what the models
/// see), `u0_true` the unmasked initial states (what the solver needs when a
/// generated control is evaluated).
struct Dataset {
    SolverSetup solver;
    SettingKind setting = SettingKind::FO_FC;
    std::uint64_t seed = 0;
    std::int64_t rejected = 0;
    FloatArray u;       // [n, n_windows + 1, n_x]
    FloatArray w;       // [n, n_windows, n_x]
    FloatArray u0_true; // [n, n_x]

    std::int64_t size() const { return u.shape.empty() ? 0 : u.shape[0]; }
    int n_x() const { return solver.grid.n_x; }
    int n_windows() const { return solver.time.n_windows; }
    TaskSetting task() const { return TaskSetting::make(setting, n_x()); }

    /// Trajectory i in double precision.
    burgers::Trajectory trajectory(std::int64_t i) const {
        burgers::Trajectory t(n_windows(), n_x());
        const auto us = std::size_t(n_windows() + 1) * n_x();
        const auto ws = std::size_t(n_windows()) * n_x();
        std::copy_n(u.data.begin() + i * us, us, t.u.begin());
        std::copy_n(w.data.begin() + i * ws, ws, t.w.begin());
        return t;
    }

    std::vector<double> true_initial_state(std::int64_t i) const {
        return {u0_true.data.begin() + i * n_x(), u0_true.data.begin() + (i + 1) * n_x()};
    }

    bool operator==(const Dataset&) const = default;
};

/// Zeroes hidden state (PO) and uncontrollable control (PC). Idempotent.
inline burgers::Trajectory apply_setting(burgers::Trajectory traj, const TaskSetting& setting) {
    if (setting.n_x() != traj.n_x) throw ShapeError("apply_setting: setting grid does not match trajectory");
    for (int t = 0; t <= traj.n_windows; ++t) {
        auto row = traj.u_row(t);
        for (int i = 0; i < traj.n_x; ++i)
            if (!setting.observation_mask[i]) row[i] = 0.0;
    }
    for (int t = 0; t < traj.n_windows; ++t) {
        auto row = traj.w_row(t);
        for (int i = 0; i < traj.n_x; ++i)
            if (!setting.control_mask[i]) row[i] = 0.0;
    }
    return traj;
}

/// Masks the uncontrollable region and applies the setting's control gain.
inline void prepare_control(std::vector<double>& w, const TaskSetting& setting) {
    const int n = setting.n_x();
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (!setting.control_mask[k % n]) w[k] = 0.0;
        w[k] *= setting.control_gain;
    }
}

struct GeneratedSample {
    burgers::Trajectory observed; // setting applied
    std::vector<double> u0_true;
    int rejected = 0;
};

/// Draws and simulates trajectory `index` of a dataset with the given seed.
/// Blown-up draws are rejected and redrawn from the same stream.
inline GeneratedSample generate_sample(std::uint64_t seed, std::int64_t index, const TaskSetting& setting,
                                       const SolverSetup& solver, int max_attempts = 100) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(index));
    GeneratedSample out;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        auto u0 = sample_initial_condition(rng, solver.grid);
        auto w = sample_control(rng, solver.grid, solver.time);
        prepare_control(w, setting);
        try {
            auto traj = burgers::simulate(u0, w, solver.grid, solver.time, solver.physics);
            out.observed = apply_setting(std::move(traj), setting);
            out.u0_true = std::move(u0);
            return out;
        } catch (const NumericalBlowup&) {
            ++out.rejected;
        }
    }
    throw NumericalError("generate_sample: no stable draw after " + std::to_string(max_attempts) + " attempts");
}

/// Generates `n` trajectories. Work is split over `threads` workers; the
/// result depends only on (n, setting, seed, solver).
inline Dataset build_dataset(std::int64_t n, SettingKind kind, std::uint64_t seed, const SolverSetup& solver,
                             int threads = 1) {
    if (n < 1) throw ConfigError("build_dataset: n must be >= 1");
    solver.validate();
    const auto setting = TaskSetting::make(kind, solver.grid.n_x);
    const int nx = solver.grid.n_x, nw = solver.time.n_windows;

    Dataset d;
    d.solver = solver;
    d.setting = kind;
    d.seed = seed;
    d.u = FloatArray({n, nw + 1, nx});
    d.w = FloatArray({n, nw, nx});
    d.u0_true = FloatArray({n, nx});
    std::vector<int> rejected(n, 0);

    auto work = [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            auto s = generate_sample(seed, i, setting, solver);
            std::copy(s.observed.u.begin(), s.observed.u.end(), d.u.data.begin() + i * (nw + 1) * nx);
            std::copy(s.observed.w.begin(), s.observed.w.end(), d.w.data.begin() + i * nw * nx);
            std::copy(s.u0_true.begin(), s.u0_true.end(), d.u0_true.data.begin() + i * nx);
            rejected[i] = s.rejected;
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::int64_t chunk = (n + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const std::int64_t b = t * chunk, e = std::min<std::int64_t>(n, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    for (int r : rejected) d.rejected += r;
    return d;
}

inline TensorFile to_tensor_file(const Dataset& d) {
    TensorFile f;
    f.meta = {{"kind", "dataset"},
              {"dataset_format_version", kDatasetFormatVersion},
              {"solver", d.solver.to_json()},
              {"setting", to_string(d.setting)},
              {"seed", d.seed},
              {"count", d.size()},
              {"rejected_draws", d.rejected}};
    f.put("u", d.u);
    f.put("w", d.w);
    f.put("u0_true", d.u0_true);
    return f;
}

inline Dataset dataset_from_tensor_file(const TensorFile& f) {
    if (f.meta.value("kind", "") != "dataset") throw FormatError("tensor file is not a dataset");
    if (f.meta.value("dataset_format_version", 0) != kDatasetFormatVersion)
        throw FormatError("unsupported dataset format version");
    Dataset d;
    d.solver = SolverSetup::from_json(f.meta.at("solver"));
    d.setting = parse_setting_kind(f.meta.at("setting").get<std::string>());
    d.seed = f.meta.at("seed").get<std::uint64_t>();
    d.rejected = f.meta.value("rejected_draws", std::int64_t{0});
    d.u = f.floats("u");
    d.w = f.floats("w");
    d.u0_true = f.floats("u0_true");
    const auto n = f.meta.at("count").get<std::int64_t>();
    const std::int64_t nx = d.solver.grid.n_x, nw = d.solver.time.n_windows;
    if (d.u.shape != std::vector<std::int64_t>{n, nw + 1, nx} || d.w.shape != std::vector<std::int64_t>{n, nw, nx} ||
        d.u0_true.shape != std::vector<std::int64_t>{n, nx})
        throw FormatError("dataset header shapes do not match tensor shapes");
    for (const auto* a : {&d.u, &d.w, &d.u0_true})
        for (float v : a->data)
            if (!std::isfinite(v)) throw FormatError("dataset contains non-finite values");
    return d;
}

inline void write_dataset(const std::string& path, const Dataset& d) { write_tensor_file(path, to_tensor_file(d)); }

inline Dataset read_dataset(const std::string& path) { return dataset_from_tensor_file(read_tensor_file(path)); }

} // namespace diffctl::datagen

#pragma once

// Closed-loop evaluation: generated controls are replayed through the
// reference solver, never trusting the generated states for j_actual.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "diffctl/burgers/objectives.hpp"
#include "diffctl/datagen/dataset.hpp"

namespace diffctl::eval {

struct EvalRecord {
    std::int64_t sample_id = 0;
    double j_actual = 0.0;
    double j_energy = 0.0;
    std::optional<double> state_mse;
    std::uint64_t seed = 0;
    int mask_violations = 0; ///< control entries outside the controllable region that had to be zeroed
    bool failed = false;
    std::string failure;
};

/// Simulates `w` ([T * n_x], row-major) from the true initial state and scores
/// it against `u_target` on the observed region. When `u_generated`
/// ([(T + 1) * n_x]) is given, state_mse compares it to the simulated,
/// setting-applied states over t = 1..T and observed positions.
inline EvalRecord evaluate_control(std::span<const double> w, std::span<const double> u0,
                                   std::span<const double> u_target, const TaskSetting& setting,
                                   const datagen::SolverSetup& solver,
                                   std::optional<std::span<const double>> u_generated = std::nullopt) {
    const int nx = solver.grid.n_x, T = solver.time.n_windows;
    if (static_cast<int>(w.size()) != T * nx || static_cast<int>(u0.size()) != nx ||
        static_cast<int>(u_target.size()) != nx || setting.n_x() != nx)
        throw ShapeError("evaluate_control: shape mismatch");
    if (u_generated && static_cast<int>(u_generated->size()) != (T + 1) * nx)
        throw ShapeError("evaluate_control: generated state shape mismatch");
    EvalRecord rec;
    std::vector<double> wc(w.begin(), w.end());
    for (std::size_t k = 0; k < wc.size(); ++k)
        if (!setting.control_mask[k % nx] && wc[k] != 0.0) {
            wc[k] = 0.0;
            ++rec.mask_violations;
        }
    for (double v : wc)
        if (!std::isfinite(v)) {
            rec.failed = true;
            rec.failure = "non-finite control";
            return rec;
        }
    try {
        auto traj = burgers::simulate(std::vector<double>(u0.begin(), u0.end()), wc, solver.grid, solver.time,
                                      solver.physics);
        traj = datagen::apply_setting(std::move(traj), setting);
        auto obj = burgers::objectives(traj.u_row(T), u_target, wc, setting, solver.grid, solver.time);
        rec.j_actual = obj.j_actual;
        rec.j_energy = obj.j_energy;
        if (u_generated) {
            double acc = 0.0;
            std::int64_t n = 0;
            for (int t = 1; t <= T; ++t) {
                auto row = traj.u_row(t);
                for (int i = 0; i < nx; ++i) {
                    if (!setting.observation_mask[i]) continue;
                    const double d = (*u_generated)[std::size_t(t) * nx + i] - row[i];
                    acc += d * d;
                    ++n;
                }
            }
            rec.state_mse = acc / double(std::max<std::int64_t>(n, 1));
        }
    } catch (const NumericalBlowup& e) {
        rec.failed = true;
        rec.failure = e.what();
    }
    return rec;
}

/// One batch of controls to evaluate against test trajectories.
struct ControlBatch {
    std::vector<std::int64_t> test_index;   ///< row in the test dataset per control
    std::vector<double> w;                  ///< [n, T, n_x]
    std::optional<std::vector<double>> u;   ///< [n, T + 1, n_x] generated states
    std::vector<std::uint64_t> seeds;       ///< optional per-sample seeds
};

/// Evaluates a batch against the test dataset (targets are the recorded final
/// states, initial states the unmasked u0). Work is split over threads.
inline std::vector<EvalRecord> evaluate_batch(const ControlBatch& b, const datagen::Dataset& test, int threads = 1) {
    const int nx = test.n_x(), T = test.n_windows();
    const auto n = static_cast<std::int64_t>(b.test_index.size());
    if (static_cast<std::int64_t>(b.w.size()) != n * T * nx) throw ShapeError("evaluate_batch: w has wrong size");
    if (b.u && static_cast<std::int64_t>(b.u->size()) != n * (T + 1) * nx)
        throw ShapeError("evaluate_batch: u has wrong size");
    const auto setting = test.task();
    std::vector<EvalRecord> out(n);
    auto work = [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            const auto idx = b.test_index[i];
            if (idx < 0 || idx >= test.size()) throw ShapeError("evaluate_batch: test index out of range");
            const auto traj = test.trajectory(idx);
            const auto u0 = test.true_initial_state(idx);
            std::optional<std::span<const double>> ug;
            if (b.u) ug = std::span<const double>(b.u->data() + i * (T + 1) * nx, std::size_t(T + 1) * nx);
            out[i] = evaluate_control(std::span<const double>(b.w.data() + i * T * nx, std::size_t(T) * nx), u0,
                                      traj.u_row(T), setting, test.solver, ug);
            out[i].sample_id = idx;
            if (i < static_cast<std::int64_t>(b.seeds.size())) out[i].seed = b.seeds[i];
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::int64_t chunk = (n + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const std::int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
            if (lo < hi) pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

/// Zero control on every test trajectory.
inline std::vector<EvalRecord> zero_control_baseline(const datagen::Dataset& test, std::int64_t count = -1) {
    const auto n = count < 0 ? test.size() : std::min(count, test.size());
    ControlBatch b;
    for (std::int64_t i = 0; i < n; ++i) b.test_index.push_back(i);
    b.w.assign(std::size_t(n) * test.n_windows() * test.n_x(), 0.0);
    return evaluate_batch(b, test);
}

struct Summary {
    double mean_j_actual = 0.0;
    double mean_j_energy = 0.0;
    std::optional<double> mean_state_mse;
    std::int64_t n_ok = 0;
    std::int64_t n_failed = 0;
    std::int64_t mask_violations = 0;
};

/// Means over the samples that succeeded in *every* compared configuration,
/// so failure exclusion is symmetric. `configs[i]` must share sample ids.
inline std::vector<Summary> summarize(const std::vector<std::vector<EvalRecord>>& configs) {
    std::set<std::int64_t> bad;
    for (const auto& recs : configs)
        for (const auto& r : recs)
            if (r.failed) bad.insert(r.sample_id);
    std::vector<Summary> out;
    for (const auto& recs : configs) {
        Summary s;
        double mse = 0.0;
        std::int64_t n_mse = 0;
        for (const auto& r : recs) {
            s.mask_violations += r.mask_violations;
            if (r.failed) ++s.n_failed;
            if (bad.count(r.sample_id)) continue;
            s.mean_j_actual += r.j_actual;
            s.mean_j_energy += r.j_energy;
            if (r.state_mse) {
                mse += *r.state_mse;
                ++n_mse;
            }
            ++s.n_ok;
        }
        if (s.n_ok > 0) {
            s.mean_j_actual /= double(s.n_ok);
            s.mean_j_energy /= double(s.n_ok);
        }
        if (n_mse > 0) s.mean_state_mse = mse / double(n_mse);
        out.push_back(s);
    }
    return out;
}

inline Summary summarize_one(const std::vector<EvalRecord>& recs) {
    return summarize(std::vector<std::vector<EvalRecord>>{recs}).front();
}

inline constexpr const char* kRecordCsvHeader = "sample_id,seed,j_actual,j_energy,state_mse,mask_violations,failed";

inline void write_records_csv(const std::string& path, const std::vector<EvalRecord>& recs) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f.precision(17);
    f << kRecordCsvHeader << "\n";
    for (const auto& r : recs) {
        f << r.sample_id << "," << r.seed << "," << r.j_actual << "," << r.j_energy << ",";
        if (r.state_mse) f << *r.state_mse;
        f << "," << r.mask_violations << "," << (r.failed ? 1 : 0) << "\n";
    }
}

struct ParetoRow {
    double lambda = 0.0;
    Summary summary;
};

/// Runs `run(lambda)` (which must use the same seeds for every lambda) for
/// each lambda in ascending order and summarizes symmetrically.
inline std::vector<ParetoRow> pareto_sweep(const std::vector<double>& lambdas,
                                           const std::function<std::vector<EvalRecord>(double)>& run) {
    if (lambdas.empty()) throw ConfigError("pareto_sweep: empty lambda list");
    if (!std::is_sorted(lambdas.begin(), lambdas.end()))
        throw ConfigError("pareto_sweep: lambda list must be sorted ascending");
    std::vector<std::vector<EvalRecord>> all;
    for (double l : lambdas) all.push_back(run(l));
    auto sums = summarize(all);
    std::vector<ParetoRow> rows;
    for (std::size_t i = 0; i < lambdas.size(); ++i) rows.push_back({lambdas[i], sums[i]});
    return rows;
}

inline constexpr const char* kParetoCsvHeader = "lambda,mean_j_actual,mean_j_energy,n_ok,n_failed";

inline void write_pareto_csv(const std::string& path, const std::vector<ParetoRow>& rows) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f.precision(17);
    f << kParetoCsvHeader << "\n";
    for (const auto& r : rows)
        f << r.lambda << "," << r.summary.mean_j_actual << "," << r.summary.mean_j_energy << "," << r.summary.n_ok
          << "," << r.summary.n_failed << "\n";
}

/// Pearson correlation; throws on fewer than two points or zero variance.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("pearson: need two equally sized series of length >= 2");
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw NumericalError("pearson: degenerate variance, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

struct CorrelationReport {
    double r = 0.0;
    std::vector<std::int64_t> sample_id;
    std::vector<double> j_actual;
    std::vector<double> state_mse;
};

inline CorrelationReport correlation_report(const std::vector<EvalRecord>& recs) {
    CorrelationReport rep;
    for (const auto& r : recs) {
        if (r.failed || !r.state_mse) continue;
        rep.sample_id.push_back(r.sample_id);
        rep.j_actual.push_back(r.j_actual);
        rep.state_mse.push_back(*r.state_mse);
    }
    if (rep.j_actual.size() < 10)
        throw ConfigError("correlation_report: need at least 10 records with state_mse, got " +
                          std::to_string(rep.j_actual.size()));
    rep.r = pearson(rep.j_actual, rep.state_mse);
    return rep;
}

inline constexpr const char* kScatterCsvHeader = "sample_id,j_actual,state_mse";

/// Scatter data; the plotting step draws the reference line j_actual = state_mse.
inline void write_scatter_csv(const std::string& path, const CorrelationReport& rep) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f.precision(17);
    f << "# pearson_r=" << rep.r << "\n" << kScatterCsvHeader << "\n";
    for (std::size_t i = 0; i < rep.j_actual.size(); ++i)
        f << rep.sample_id[i] << "," << rep.j_actual[i] << "," << rep.state_mse[i] << "\n";
}

} // namespace diffctl::eval

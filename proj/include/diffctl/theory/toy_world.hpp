#pragma once

// Exact enumeration checks of the prior-reweighting theorem on finite worlds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "diffctl/error.hpp"
#include "diffctl/rng.hpp"

namespace diffctl::theory {

/// Finite world over U x W. Tables are row-major: p_u_given_w[w * n_u + u],
/// J[u * n_w + w].
struct ToyWorld {
    int n_u = 0;
    int n_w = 0;
    std::vector<double> p_w;
    std::vector<double> p_u_given_w;
    std::vector<double> J;
    double epsilon = 0.0;

    double p_u(int u, int w) const { return p_u_given_w[std::size_t(w) * n_u + u]; }
    double j(int u, int w) const { return J[std::size_t(u) * n_w + w]; }

    void validate() const {
        if (n_u < 1 || n_w < 1) throw ConfigError("ToyWorld: empty U or W");
        if (p_w.size() != std::size_t(n_w) || p_u_given_w.size() != std::size_t(n_u) * n_w ||
            J.size() != std::size_t(n_u) * n_w)
            throw ShapeError("ToyWorld: table sizes do not match |U| and |W|");
        auto check_dist = [](auto first, auto last, const char* what) {
            double s = 0.0;
            for (auto it = first; it != last; ++it) {
                if (!(*it >= 0.0)) throw ConfigError(std::string("ToyWorld: negative probability in ") + what);
                s += *it;
            }
            if (std::abs(s - 1.0) > 1e-12) throw ConfigError(std::string("ToyWorld: ") + what + " does not sum to 1");
        };
        check_dist(p_w.begin(), p_w.end(), "p_w");
        for (int w = 0; w < n_w; ++w)
            check_dist(p_u_given_w.begin() + std::ptrdiff_t(w) * n_u, p_u_given_w.begin() + std::ptrdiff_t(w + 1) * n_u,
                       "p(u|w)");
        for (double v : J)
            if (!std::isfinite(v)) throw ConfigError("ToyWorld: non-finite objective");
        if (!(epsilon >= 0.0)) throw ConfigError("ToyWorld: epsilon must be >= 0 (otherwise Q(epsilon) is empty)");
    }

    bool supported(int u, int w) const { return p_w[w] > 0.0 && p_u(u, w) > 0.0; }

    /// Minimum objective over the support.
    double j_star() const {
        double m = std::numeric_limits<double>::infinity();
        for (int u = 0; u < n_u; ++u)
            for (int w = 0; w < n_w; ++w)
                if (supported(u, w)) m = std::min(m, j(u, w));
        return m;
    }

    bool in_q(int u, int w, double jstar) const { return j(u, w) - jstar <= epsilon; }

    /// Z_J = sum over all pairs of exp(-J), so p(Y=1|u,w) = exp(-J)/Z_J <= 1.
    double z_j() const {
        double z = 0.0;
        for (double v : J) z += std::exp(-v);
        return z;
    }

    double p_y1(int u, int w, double z) const { return std::exp(-j(u, w)) / z; }
};

/// Reweighted joint p_gamma(u, w) = p(u|w) p(w)^gamma / C_gamma, row-major [u * n_w + w].
inline std::vector<double> reweighted_joint(const ToyWorld& world, double gamma) {
    if (!(gamma > 0.0)) throw ConfigError("reweighted_joint: gamma must be > 0");
    std::vector<double> p(std::size_t(world.n_u) * world.n_w, 0.0);
    double c = 0.0;
    for (int w = 0; w < world.n_w; ++w) {
        const double pw = world.p_w[w] > 0.0 ? std::pow(world.p_w[w], gamma) : 0.0;
        for (int u = 0; u < world.n_u; ++u) {
            p[std::size_t(u) * world.n_w + w] = world.p_u(u, w) * pw;
            c += world.p_u(u, w) * pw;
        }
    }
    for (auto& v : p) v /= c;
    return p;
}

/// E(gamma): probability of landing in Q(epsilon) under p_gamma conditioned on Y = 1.
inline double e_of_gamma(const ToyWorld& world, double gamma) {
    world.validate();
    const auto p = reweighted_joint(world, gamma);
    const double jstar = world.j_star(), z = world.z_j();
    double num = 0.0, den = 0.0;
    for (int u = 0; u < world.n_u; ++u)
        for (int w = 0; w < world.n_w; ++w) {
            const double m = p[std::size_t(u) * world.n_w + w] * world.p_y1(u, w, z);
            den += m;
            if (world.in_q(u, w, jstar)) num += m;
        }
    if (!(num > 0.0)) throw NumericalError("e_of_gamma: Q(epsilon) carries no probability mass");
    return num / den;
}

/// F(1): weighted mean of ln p(w) over Q(epsilon) minus the same over its complement,
/// with weights p(u, w) p(Y=1 | u, w).
inline double f_at_one(const ToyWorld& world) {
    world.validate();
    const double jstar = world.j_star(), z = world.z_j();
    double nq = 0.0, dq = 0.0, nc = 0.0, dc = 0.0;
    for (int u = 0; u < world.n_u; ++u)
        for (int w = 0; w < world.n_w; ++w) {
            if (!world.supported(u, w)) continue;
            const double m = world.p_u(u, w) * world.p_w[w] * world.p_y1(u, w, z);
            const double lp = std::log(world.p_w[w]);
            if (world.in_q(u, w, jstar)) {
                nq += m * lp;
                dq += m;
            } else {
                nc += m * lp;
                dc += m;
            }
        }
    if (!(dq > 0.0) || !(dc > 0.0))
        throw ConfigError("f_at_one: Q(epsilon) or its complement is empty (degenerate partition)");
    return nq / dq - nc / dc;
}

enum class VerdictStatus { pass, fail, inconclusive };

inline std::string to_string(VerdictStatus s) {
    switch (s) {
    case VerdictStatus::pass: return "pass";
    case VerdictStatus::fail: return "fail";
    case VerdictStatus::inconclusive: return "inconclusive";
    }
    return "?";
}

struct Verdict {
    double f1 = 0.0;
    double e1 = 0.0;
    double slope = 0.0; ///< central difference of E at gamma = 1
    VerdictStatus status = VerdictStatus::inconclusive;
    std::optional<double> witness_gamma;
    std::optional<double> witness_e;
    bool refined = false; ///< witness found only by probing closer to 1 than the grid
};

inline constexpr double kInconclusiveTolerance = 1e-9;
inline constexpr double kSlopeStep = 1e-4;

inline std::vector<double> default_gamma_grid() {
    std::vector<double> g;
    for (int i = 2; i <= 40; ++i) g.push_back(0.05 * i);
    return g;
}

/// Looks for a gamma on the side of 1 predicted by the sign of F(1) with
/// E(gamma) > E(1). The grid is searched first; if it has no witness, points
/// 1 -/+ 10^-j (j = 2..8) are probed, since the theorem only asserts a
/// witness near 1.
inline Verdict check_theorem(const ToyWorld& world, const std::vector<double>& gamma_grid) {
    const bool below = std::any_of(gamma_grid.begin(), gamma_grid.end(), [](double g) { return g < 1.0; });
    const bool above = std::any_of(gamma_grid.begin(), gamma_grid.end(), [](double g) { return g > 1.0; });
    if (!below || !above) throw ConfigError("check_theorem: gamma grid must contain values on both sides of 1");
    for (double g : gamma_grid)
        if (!(g > 0.0)) throw ConfigError("check_theorem: gamma values must be positive");
    Verdict v;
    v.f1 = f_at_one(world);
    v.e1 = e_of_gamma(world, 1.0);
    v.slope = (e_of_gamma(world, 1.0 + kSlopeStep) - e_of_gamma(world, 1.0 - kSlopeStep)) / (2.0 * kSlopeStep);
    if (std::abs(v.f1) < kInconclusiveTolerance) return v;
    const bool want_below = v.f1 < 0.0;
    auto consider = [&](double g) {
        const double e = e_of_gamma(world, g);
        if (e > v.e1 && (!v.witness_e || e > *v.witness_e)) {
            v.witness_gamma = g;
            v.witness_e = e;
        }
    };
    for (double g : gamma_grid)
        if ((want_below && g < 1.0) || (!want_below && g > 1.0)) consider(g);
    if (!v.witness_gamma) {
        for (int j = 2; j <= 8 && !v.witness_gamma; ++j) consider(want_below ? 1.0 - std::pow(10.0, -j) : 1.0 + std::pow(10.0, -j));
        v.refined = v.witness_gamma.has_value();
    }
    v.status = v.witness_gamma ? VerdictStatus::pass : VerdictStatus::fail;
    return v;
}

/// Random world: log-normal-ish prior and conditionals, uniform objective on
/// [0, j_max], epsilon chosen so roughly a quarter of the pairs are epsilon-optimal.
inline ToyWorld random_world(std::uint64_t seed, int n_u = 8, int n_w = 8, double spread = 2.0, double j_max = 3.0) {
    if (n_u < 1 || n_w < 1) throw ConfigError("random_world: sizes must be >= 1");
    Rng rng(seed);
    auto normal = [&rng]() {
        const double u1 = 1.0 - rng.canonical(), u2 = rng.canonical();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
    };
    auto softmax_draw = [&](std::vector<double>::iterator first, int n) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += (first[i] = std::exp(spread * normal()));
        for (int i = 0; i < n; ++i) first[i] /= s;
    };
    ToyWorld w;
    w.n_u = n_u;
    w.n_w = n_w;
    w.p_w.resize(n_w);
    w.p_u_given_w.resize(std::size_t(n_u) * n_w);
    w.J.resize(std::size_t(n_u) * n_w);
    softmax_draw(w.p_w.begin(), n_w);
    for (int k = 0; k < n_w; ++k) softmax_draw(w.p_u_given_w.begin() + std::ptrdiff_t(k) * n_u, n_u);
    for (auto& v : w.J) v = rng.uniform(0.0, j_max);
    auto sorted = w.J;
    std::sort(sorted.begin(), sorted.end());
    const double jstar = w.j_star();
    w.epsilon = sorted[std::max<std::size_t>(1, sorted.size() / 4)] - jstar;
    if (w.epsilon < 0.0) w.epsilon = 0.0;
    // Renormalise so rounding never trips the 1e-12 sum check.
    auto renorm = [](std::vector<double>::iterator first, int n) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += first[i];
        for (int i = 0; i < n; ++i) first[i] /= s;
    };
    renorm(w.p_w.begin(), n_w);
    for (int k = 0; k < n_w; ++k) renorm(w.p_u_given_w.begin() + std::ptrdiff_t(k) * n_u, n_u);
    return w;
}

/// The same world with the prior masses assigned to W in reverse order.
/// When J depends on w alone and |W| = 2 this exactly negates F(1).
inline ToyWorld mirrored(const ToyWorld& world) {
    ToyWorld m = world;
    std::reverse(m.p_w.begin(), m.p_w.end());
    return m;
}

/// Two control values, J depending on w only: w = 0 is optimal, w = 1 is not.
inline ToyWorld two_level_world(double p_optimal, int n_u = 3, double j_gap = 1.0) {
    if (!(p_optimal > 0.0 && p_optimal < 1.0)) throw ConfigError("two_level_world: p_optimal must lie in (0, 1)");
    ToyWorld w;
    w.n_u = n_u;
    w.n_w = 2;
    w.p_w = {p_optimal, 1.0 - p_optimal};
    w.p_u_given_w.assign(std::size_t(n_u) * 2, 1.0 / n_u);
    w.J.resize(std::size_t(n_u) * 2);
    for (int u = 0; u < n_u; ++u) {
        w.J[std::size_t(u) * 2 + 0] = 0.0;
        w.J[std::size_t(u) * 2 + 1] = j_gap;
    }
    w.epsilon = 0.5 * j_gap;
    return w;
}

/// Worlds from seeds first_seed, first_seed + 1, ... whose F(1) is below
/// -tolerance, until `count` are found.
inline std::vector<std::pair<std::uint64_t, ToyWorld>> worlds_with_negative_f(std::uint64_t first_seed, int count,
                                                                            int max_tries = 100000) {
    std::vector<std::pair<std::uint64_t, ToyWorld>> out;
    for (std::uint64_t s = first_seed; int(out.size()) < count; ++s) {
        if (int(s - first_seed) >= max_tries) throw Error("worlds_with_negative_f: not enough worlds found");
        auto w = random_world(s);
        if (f_at_one(w) < -kInconclusiveTolerance) out.emplace_back(s, std::move(w));
    }
    return out;
}

inline constexpr const char* kVerdictCsvHeader = "world,seed,f1,e1,slope,status,witness_gamma,witness_e,refined";

struct VerdictRow {
    int world = 0;
    std::uint64_t seed = 0;
    Verdict verdict;
};

inline void write_verdict_csv(const std::string& path, const std::vector<VerdictRow>& rows) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f.precision(17);
    f << kVerdictCsvHeader << "\n";
    for (const auto& r : rows) {
        const auto& v = r.verdict;
        f << r.world << "," << r.seed << "," << v.f1 << "," << v.e1 << "," << v.slope << "," << to_string(v.status)
          << ",";
        if (v.witness_gamma) f << *v.witness_gamma;
        f << ",";
        if (v.witness_e) f << *v.witness_e;
        f << "," << (v.refined ? 1 : 0) << "\n";
    }
}

} // namespace diffctl::theory

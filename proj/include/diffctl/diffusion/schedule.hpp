#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "diffctl/error.hpp"

namespace diffctl::diffusion {

enum class ScheduleKind { linear, cosine, sigmoid };

inline std::string to_string(ScheduleKind k) {
    switch (k) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::sigmoid: return "sigmoid";
    }
    return "?";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "sigmoid") return ScheduleKind::sigmoid;
    throw ConfigError("unknown schedule kind '" + s + "'");
}

/// Variance schedule over denoising steps k = 1..K. Arrays are stored
/// 0-based: `beta[k - 1]` is beta_k. Use the `*_at(k)` accessors when working
/// with 1-based step numbers.
struct DiffusionSchedule {
    ScheduleKind kind = ScheduleKind::cosine;
    int K = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> sigma2;

    double beta_at(int k) const { return beta[checked(k)]; }
    double alpha_at(int k) const { return alpha[checked(k)]; }
    double alpha_bar_at(int k) const { return alpha_bar[checked(k)]; }
    double sigma2_at(int k) const { return sigma2[checked(k)]; }
    /// alpha_bar_{k-1}, with alpha_bar_0 = 1.
    double alpha_bar_prev(int k) const { return k == 1 ? 1.0 : alpha_bar[checked(k - 1)]; }

private:
    std::size_t checked(int k) const {
        if (k < 1 || k > K) throw Error("diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(K) + "]");
        return static_cast<std::size_t>(k - 1);
    }
};

inline constexpr double kBetaStart = 1e-4;
inline constexpr double kBetaEnd = 0.02;

/// Builds a schedule from an explicit beta array.
inline DiffusionSchedule schedule_from_betas(std::vector<double> betas, ScheduleKind kind) {
    if (betas.empty()) throw ConfigError("schedule needs K >= 1");
    DiffusionSchedule s;
    s.kind = kind;
    s.K = static_cast<int>(betas.size());
    s.beta = std::move(betas);
    s.alpha.resize(s.K);
    s.alpha_bar.resize(s.K);
    double prod = 1.0;
    for (int i = 0; i < s.K; ++i) {
        if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0)) throw ConfigError("beta values must lie in (0, 1)");
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    s.sigma2 = s.beta;
    return s;
}

inline DiffusionSchedule make_schedule(int K, ScheduleKind kind) {
    if (K < 1) throw ConfigError("make_schedule: K must be >= 1");
    std::vector<double> b(K);
    switch (kind) {
    case ScheduleKind::linear:
        for (int i = 0; i < K; ++i) b[i] = K == 1 ? kBetaStart : kBetaStart + (kBetaEnd - kBetaStart) * i / (K - 1);
        break;
    case ScheduleKind::sigmoid:
        for (int i = 0; i < K; ++i) {
            const double x = K == 1 ? -6.0 : -6.0 + 12.0 * i / (K - 1);
            b[i] = kBetaStart + (kBetaEnd - kBetaStart) / (1.0 + std::exp(-x));
        }
        break;
    case ScheduleKind::cosine: {
        // Improved-DDPM construction with offset s = 0.008, betas clipped at 0.999.
        constexpr double s = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / K + s) / (1.0 + s) * std::numbers::pi / 2.0);
            return c * c;
        };
        const double f0 = f(0.0);
        for (int i = 0; i < K; ++i) {
            const double ab_prev = f(i) / f0, ab = f(i + 1) / f0;
            b[i] = std::clamp(1.0 - ab / ab_prev, 1e-12, 0.999);
        }
        break;
    }
    }
    return schedule_from_betas(std::move(b), kind);
}

} // namespace diffctl::diffusion

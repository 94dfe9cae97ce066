#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffctl/diffusion/schedule.hpp"
#include "diffctl/error.hpp"

namespace diffctl::sampler {

using diffusion::DiffusionSchedule;

enum class GuidanceMode { conditioning, explicit_guidance };
enum class LambdaSchedule { cosine_decreasing, beta_increasing, constant };
enum class GammaSchedule { constant, beta_reversed };
enum class Combine { combined_noise, two_step };

inline std::string to_string(GuidanceMode m) { return m == GuidanceMode::conditioning ? "conditioning" : "explicit"; }
inline std::string to_string(LambdaSchedule s) {
    switch (s) {
    case LambdaSchedule::cosine_decreasing: return "cosine-decreasing";
    case LambdaSchedule::beta_increasing: return "beta-increasing";
    case LambdaSchedule::constant: return "constant";
    }
    return "?";
}
inline std::string to_string(GammaSchedule s) { return s == GammaSchedule::constant ? "constant" : "beta-reversed"; }
inline std::string to_string(Combine c) { return c == Combine::combined_noise ? "combined-noise" : "two-step"; }

inline GuidanceMode parse_guidance_mode(const std::string& s) {
    if (s == "conditioning") return GuidanceMode::conditioning;
    if (s == "explicit") return GuidanceMode::explicit_guidance;
    throw ConfigError("unknown guidance mode '" + s + "'");
}
inline LambdaSchedule parse_lambda_schedule(const std::string& s) {
    if (s == "cosine-decreasing") return LambdaSchedule::cosine_decreasing;
    if (s == "beta-increasing") return LambdaSchedule::beta_increasing;
    if (s == "constant") return LambdaSchedule::constant;
    throw ConfigError("unknown lambda schedule '" + s + "'");
}
inline GammaSchedule parse_gamma_schedule(const std::string& s) {
    if (s == "constant") return GammaSchedule::constant;
    if (s == "beta-reversed") return GammaSchedule::beta_reversed;
    throw ConfigError("unknown gamma schedule '" + s + "'");
}
inline Combine parse_combine(const std::string& s) {
    if (s == "combined-noise") return Combine::combined_noise;
    if (s == "two-step") return Combine::two_step;
    throw ConfigError("unknown reweighting combine mode '" + s + "'");
}

/// Objective guidance. In conditioning mode the target state is pinned on the
/// canvas; in explicit mode it is generated and steered by the gradient.
struct GuidanceSpec {
    GuidanceMode mode = GuidanceMode::conditioning;
    double lambda0 = 0.0;
    LambdaSchedule schedule = LambdaSchedule::cosine_decreasing;
    bool energy = true;  ///< differentiate j_energy
    bool actual = false; ///< differentiate j_actual against the target state
    /// Largest root-mean-square move of the clean estimate (model units)
    /// that the guidance term may cause in one step; <= 0 disables the cap.
    double max_shift = 0.1;

    void validate() const {
        if (!(lambda0 >= 0.0)) throw ConfigError("GuidanceSpec: lambda0 must be >= 0");
        if (lambda0 > 0.0 && !energy && !actual) throw ConfigError("GuidanceSpec: lambda0 > 0 but no objective term selected");
    }

    nlohmann::json to_json() const {
        return {{"mode", to_string(mode)}, {"lambda0", lambda0}, {"schedule", to_string(schedule)},
                {"energy", energy},        {"actual", actual},   {"max_shift", max_shift}};
    }
};

struct ReweightSpec {
    double gamma = 1.0;
    GammaSchedule schedule = GammaSchedule::constant;
    Combine combine = Combine::combined_noise;

    bool active() const { return gamma != 1.0; }

    void validate() const {
        if (!std::isfinite(gamma)) throw ConfigError("ReweightSpec: gamma must be finite");
    }

    nlohmann::json to_json() const {
        return {{"gamma", gamma}, {"schedule", to_string(schedule)}, {"combine", to_string(combine)}};
    }
};

struct SamplerConfig {
    double eta_ddim = 0.0;
    int n_ddim_steps = 0; ///< 0 selects the full ancestral sampler
    std::uint64_t seed = 0;
    double clip_denoised = 2.0; ///< bound on |z_hat| in model units; 0 disables

    void validate(int K) const {
        if (!(clip_denoised >= 0.0)) throw ConfigError("SamplerConfig: clip_denoised must be >= 0");
        if (!(eta_ddim >= 0.0 && eta_ddim <= 1.0)) throw ConfigError("SamplerConfig: eta_ddim must lie in [0, 1]");
        if (n_ddim_steps < 0 || n_ddim_steps > K)
            throw ConfigError("SamplerConfig: n_ddim_steps must lie in [0, K = " + std::to_string(K) + "]");
    }

    nlohmann::json to_json() const { return {
            {"eta_ddim", eta_ddim}, {"n_ddim_steps", n_ddim_steps}, {"seed", seed}, {"clip_denoised", clip_denoised}}; }
};

/// gamma_k: constant, or 1 - (1 - gamma) * beta_{K-k+1} / beta_K.
inline double gamma_at(int k, const ReweightSpec& r, const DiffusionSchedule& sched) {
    if (r.schedule == GammaSchedule::constant || r.gamma == 1.0) {
        sched.beta_at(k);
        return r.gamma;
    }
    return 1.0 - (1.0 - r.gamma) * sched.beta_at(sched.K - k + 1) / sched.beta_at(sched.K);
}

/// Prior-noise scale of the combined-noise update at step k: beta_{K-k},
/// with beta indices counted from zero (beta_at(K - k + 1) in 1-based terms).
inline double prior_noise_scale(int k, const DiffusionSchedule& sched) { return sched.beta_at(sched.K - k + 1); }

/// lambda_k for k = 1..K, stored at index k - 1.
inline std::vector<double> lambda_table(const GuidanceSpec& g, const DiffusionSchedule& sched) {
    std::vector<double> out(sched.K, 0.0);
    if (g.lambda0 == 0.0) return out;
    const auto cos = diffusion::make_schedule(sched.K, diffusion::ScheduleKind::cosine);
    for (int k = 1; k <= sched.K; ++k) {
        double v = 1.0;
        if (g.schedule == LambdaSchedule::cosine_decreasing)
            v = cos.beta_at(k);
        else if (g.schedule == LambdaSchedule::beta_increasing)
            v = sched.beta_at(sched.K - k + 1);
        out[k - 1] = g.lambda0 * v;
    }
    return out;
}

/// Visited steps of the strided sampler, ascending: tau_i = ceil(i K / n).
inline std::vector<int> ddim_steps(int K, int n) {
    if (n < 1 || n > K) throw ConfigError("ddim: step count must lie in [1, K]");
    std::vector<int> tau(n);
    for (int i = 1; i <= n; ++i) tau[i - 1] = static_cast<int>((std::int64_t(i) * K + n - 1) / n);
    return tau;
}

} // namespace diffctl::sampler

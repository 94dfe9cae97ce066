#pragma once

// Reverse diffusion loops (ancestral and strided) over an abstract noise
// predictor, shared by the Burgers control sampler and the closed-form
// Gaussian checks.

#include <cmath>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "diffctl/diffusion/process.hpp"
#include "diffctl/error.hpp"
#include "diffctl/sampler/spec.hpp"

namespace diffctl::sampler {

using Eps = std::function<torch::Tensor(const torch::Tensor& z, int k)>;

/// Everything the reverse loop needs to know about the model and the task.
/// Only `eps` and `noise` are mandatory.
struct ReverseModel {
    Eps eps;                                                  ///< joint noise prediction
    Eps prior_eps;                                            ///< prior noise, zero outside `prior_mask`
    std::function<torch::Tensor(const torch::Tensor&)> impose; ///< re-pins conditioned entries
    /// Gradient of the objective at a clean estimate (zero on pinned entries).
    std::function<torch::Tensor(const torch::Tensor& z_hat)> objective_grad;
    std::function<torch::Tensor(const torch::Tensor& like)> noise; ///< standard normal draws shaped like the argument
    torch::Tensor free_mask;  ///< entries counted in the guidance RMS (undefined: all)
    torch::Tensor prior_mask; ///< entries moved by the two-step prior update
};

struct ReversePlan {
    GuidanceSpec guide;
    ReweightSpec reweight;
    SamplerConfig cfg;
};

namespace detail {

inline torch::Tensor apply_impose(const ReverseModel& m, const torch::Tensor& z) { return m.impose ? m.impose(z) : z; }

/// Per-sample root mean square over free entries.
inline torch::Tensor sample_rms(const torch::Tensor& x, const torch::Tensor& free_mask) {
    const auto B = x.size(0);
    if (!free_mask.defined()) return x.pow(2).reshape({B, -1}).mean(1).sqrt();
    auto m = free_mask.expand_as(x).to(x.dtype());
    auto n = m.reshape({B, -1}).sum(1).clamp_min(1.0);
    return (x.pow(2) * m).reshape({B, -1}).sum(1).div(n).sqrt();
}

inline torch::Tensor batch_view(const torch::Tensor& per_sample, const torch::Tensor& like) {
    std::vector<int64_t> shape(like.dim(), 1);
    shape[0] = like.size(0);
    return per_sample.view(shape);
}

/// Noise used for the mean update at step k: joint prediction, combined
/// prior term and capped guidance.
inline torch::Tensor guided_noise(const ReverseModel& m, const ReversePlan& p, const DiffusionSchedule& sched,
                                  const std::vector<double>& lambdas, const torch::Tensor& z, int k) {
    auto eps = m.eps(z, k);
    const double gk = gamma_at(k, p.reweight, sched);
    if (gk != 1.0 && p.reweight.combine == Combine::combined_noise) {
        if (!m.prior_eps) throw ConfigError("sampler: reweighting with gamma != 1 needs a prior model");
        eps = eps + (gk - 1.0) * prior_noise_scale(k, sched) * m.prior_eps(z, k);
    }
    const double lam = lambdas[k - 1];
    if (lam != 0.0) {
        if (!m.objective_grad) throw ConfigError("sampler: guidance requested but no objective gradient is available");
        auto z_hat = diffusion::estimate_clean(z, eps, k, sched);
        auto g = lam * m.objective_grad(z_hat);
        if (!torch::isfinite(g).all().item<bool>())
            throw NumericalError("sampler: guidance gradient is not finite at step " + std::to_string(k));
        if (p.guide.max_shift > 0.0) {
            const double ab = sched.alpha_bar_at(k);
            auto shift = sample_rms(g, m.free_mask) * std::sqrt((1.0 - ab) / ab);
            auto factor = (p.guide.max_shift / shift.clamp_min(1e-300)).clamp_max(1.0);
            g = g * batch_view(factor, g);
        }
        eps = eps + g;
    }
    return eps;
}

/// Eq. 13 style second update on the prior-controlled entries.
inline torch::Tensor two_step_update(const ReverseModel& m, const ReversePlan& p, const DiffusionSchedule& sched,
                                     const torch::Tensor& z_prev_step, torch::Tensor z_next, int k, double eps_coef,
                                     double sigma) {
    const double gk = gamma_at(k, p.reweight, sched);
    if (gk == 1.0 || p.reweight.combine != Combine::two_step) return z_next;
    if (!m.prior_eps) throw ConfigError("sampler: reweighting with gamma != 1 needs a prior model");
    auto upd = -eps_coef * (gk - 1.0) * m.prior_eps(z_prev_step, k);
    if (sigma > 0.0) {
        auto xi2 = m.noise(z_next) * sigma;
        upd = upd + (m.prior_mask.defined() ? xi2 * m.prior_mask.to(xi2.dtype()) : xi2);
    }
    return z_next + upd;
}

/// Clamps the clean estimate implied by `eps` and returns the noise
/// consistent with the clamped estimate.
inline torch::Tensor clip_noise(const torch::Tensor& z, const torch::Tensor& eps, int k,
                                const DiffusionSchedule& sched, double clip) {
    if (clip <= 0.0) return eps;
    const double ab = sched.alpha_bar_at(k);
    auto z_hat = diffusion::estimate_clean(z, eps, k, sched).clamp(-clip, clip);
    return (z - std::sqrt(ab) * z_hat) / std::sqrt(1.0 - ab);
}

} // namespace detail

/// DDPM ancestral sampling from z_K = `z_init` down to z_0.
inline torch::Tensor reverse_ancestral(const ReverseModel& m, const ReversePlan& p, const DiffusionSchedule& sched,
                                       torch::Tensor z) {
    p.guide.validate();
    p.reweight.validate();
    const auto lambdas = lambda_table(p.guide, sched);
    torch::NoGradGuard ng;
    for (int k = sched.K; k >= 1; --k) {
        z = detail::apply_impose(m, z);
        auto eps = detail::clip_noise(z, detail::guided_noise(m, p, sched, lambdas, z, k), k, sched,
                                      p.cfg.clip_denoised);
        const double b = sched.beta_at(k), a = sched.alpha_at(k), ab = sched.alpha_bar_at(k);
        const double eps_coef = b / std::sqrt(1.0 - ab) / std::sqrt(a);
        auto next = z / std::sqrt(a) - eps_coef * eps;
        const double sigma = k > 1 ? std::sqrt(sched.sigma2_at(k)) : 0.0;
        if (sigma > 0.0) next = next + sigma * m.noise(z);
        z = detail::two_step_update(m, p, sched, z, next, k, eps_coef, sigma);
    }
    return detail::apply_impose(m, z);
}

/// Strided (DDIM) sampling over `n_steps` visited steps with stochasticity eta.
inline torch::Tensor reverse_ddim(const ReverseModel& m, const ReversePlan& p, const DiffusionSchedule& sched,
                                  torch::Tensor z, int n_steps, double eta) {
    p.guide.validate();
    p.reweight.validate();
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("ddim: eta must lie in [0, 1]");
    const auto tau = ddim_steps(sched.K, n_steps);
    const auto lambdas = lambda_table(p.guide, sched);
    torch::NoGradGuard ng;
    for (int i = n_steps - 1; i >= 0; --i) {
        const int k = tau[i];
        const int kp = i > 0 ? tau[i - 1] : 0;
        z = detail::apply_impose(m, z);
        auto eps = detail::clip_noise(z, detail::guided_noise(m, p, sched, lambdas, z, k), k, sched,
                                      p.cfg.clip_denoised);
        const double ab = sched.alpha_bar_at(k);
        const double abp = kp > 0 ? sched.alpha_bar_at(kp) : 1.0;
        const double sigma = eta * std::sqrt((1.0 - abp) / (1.0 - ab)) * std::sqrt(1.0 - ab / abp);
        const double dir = std::sqrt(std::max(1.0 - abp - sigma * sigma, 0.0));
        auto z_hat = diffusion::estimate_clean(z, eps, k, sched);
        auto next = std::sqrt(abp) * z_hat + dir * eps;
        if (sigma > 0.0) next = next + sigma * m.noise(z);
        const double eps_coef = std::sqrt(abp) * std::sqrt(1.0 - ab) / std::sqrt(ab) - dir;
        z = detail::two_step_update(m, p, sched, z, next, k, eps_coef, sigma);
    }
    return detail::apply_impose(m, z);
}

inline torch::Tensor reverse(const ReverseModel& m, const ReversePlan& p, const DiffusionSchedule& sched,
                             torch::Tensor z) {
    p.cfg.validate(sched.K);
    if (p.cfg.n_ddim_steps == 0) return reverse_ancestral(m, p, sched, std::move(z));
    return reverse_ddim(m, p, sched, std::move(z), p.cfg.n_ddim_steps, p.cfg.eta_ddim);
}

} // namespace diffctl::sampler

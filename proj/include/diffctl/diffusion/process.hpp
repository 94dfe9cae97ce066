#pragma once

#include <cmath>
#include <vector>

#include <torch/torch.h>

#include "diffctl/diffusion/schedule.hpp"

namespace diffctl::diffusion {

/// sqrt(alpha_bar_k) z0 + sqrt(1 - alpha_bar_k) eps.
inline torch::Tensor forward_noise(const torch::Tensor& z0, int k, const torch::Tensor& eps,
                                   const DiffusionSchedule& sched) {
    const double ab = sched.alpha_bar_at(k);
    return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

/// Per-sample steps: `ks` is an int64 tensor [B] of 1-based steps, `z0`/`eps`
/// have batch as their leading dimension.
inline torch::Tensor forward_noise(const torch::Tensor& z0, const torch::Tensor& ks, const torch::Tensor& eps,
                                   const DiffusionSchedule& sched) {
    auto ab = torch::tensor(sched.alpha_bar, torch::kFloat64).index_select(0, ks - 1).to(z0.dtype());
    std::vector<int64_t> shape(z0.dim(), 1);
    shape[0] = z0.size(0);
    ab = ab.view(shape);
    return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps;
}

/// Clean-sample estimate (z_k - sqrt(1 - alpha_bar_k) eps) / sqrt(alpha_bar_k).
inline torch::Tensor estimate_clean(const torch::Tensor& z_k, const torch::Tensor& eps_pred, int k,
                                    const DiffusionSchedule& sched) {
    const double ab = sched.alpha_bar_at(k);
    return (z_k - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

} // namespace diffctl::diffusion

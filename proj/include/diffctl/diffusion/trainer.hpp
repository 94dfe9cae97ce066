#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "diffctl/datagen/dataset.hpp"
#include "diffctl/diffusion/canvas.hpp"
#include "diffctl/diffusion/model.hpp"
#include "diffctl/diffusion/process.hpp"

namespace diffctl::diffusion {

/// Masked epsilon-prediction loss.
///
/// `x0` [B, C, rows, n_x] clean data, `free_mask` bool (broadcastable to x0),
/// `pinned` values for pinned entries, `ks` [B] steps, `eps` noise like x0.
/// `predict(z, ks)` returns the noise estimate for the imposed noisy canvas.
/// The mean is over free entries only; pinned entries contribute exact zeros.
template <class Predict>
torch::Tensor masked_denoising_loss(Predict&& predict, const torch::Tensor& x0, const torch::Tensor& free_mask,
                                    const torch::Tensor& pinned, const torch::Tensor& ks, const torch::Tensor& eps,
                                    const DiffusionSchedule& sched) {
    auto z = impose(forward_noise(x0, ks, eps, sched), free_mask, pinned);
    auto pred = predict(z, ks);
    auto diff = torch::where(free_mask, pred - eps, torch::zeros_like(pred));
    auto count = free_mask.expand_as(x0).sum().to(pred.dtype());
    return diff.pow(2).sum() / count;
}

struct TrainOptions {
    std::int64_t steps = 30000;
    std::int64_t batch_size = 16;
    double lr = 1e-4;
    bool cosine_annealing = true;
    double cond_drop = 0.0; ///< probability of dropping the target row (joint) to learn initial-only conditioning
    std::uint64_t seed = 0;
    std::int64_t log_every = 100;
    std::int64_t checkpoint_every = 0; ///< 0 disables periodic checkpoints
    std::string checkpoint_path;
    std::string log_path; ///< line-delimited JSON records, appended
    bool ema = false;
    double ema_decay = 0.999;
    double grad_clip = 1.0;
};

struct LossRecord {
    std::int64_t step;
    double loss;
    double wall_seconds;
};

struct TrainResult {
    Denoiser model;
    TrainingState state;
    std::vector<LossRecord> log;
    std::optional<std::vector<torch::Tensor>> ema;
};

/// Dataset tensors prepared in model units.
struct TrainingData {
    CanvasLayout layout;
    TaskSetting setting;
    torch::Tensor u;  // [N, 11, n_x] (scaled)
    torch::Tensor w;  // [N, 10, n_x] (scaled)
    double u_scale = 1.0, w_scale = 1.0;
};

/// RMS of `values` over entries where `mask` is set, with a floor for empty data.
inline double masked_rms(const torch::Tensor& values, const torch::Tensor& mask) {
    auto m = mask.expand_as(values);
    const double n = m.sum().item<double>();
    if (n == 0) return 1.0;
    const double ss = torch::where(m, values.pow(2), torch::zeros_like(values)).sum().item<double>();
    return std::max(std::sqrt(ss / n), 1e-6);
}

inline TrainingData prepare_training_data(const datagen::Dataset& ds, CanvasLayout layout,
                                          std::optional<std::pair<double, double>> scales = std::nullopt) {
    if (ds.n_x() != layout.n_x || ds.n_windows() != layout.n_windows)
        throw MismatchError("dataset grid does not match model canvas");
    TrainingData td;
    td.layout = layout;
    td.setting = ds.task();
    auto u = from_float_array(ds.u);
    auto w = from_float_array(ds.w);
    if (scales) {
        td.u_scale = scales->first;
        td.w_scale = scales->second;
    } else {
        auto obs = torch::from_blob(td.setting.observation_mask.data(), {layout.n_x}, torch::kUInt8).to(torch::kBool);
        auto ctl = torch::from_blob(td.setting.control_mask.data(), {layout.n_x}, torch::kUInt8).to(torch::kBool);
        td.u_scale = masked_rms(u, obs.view({1, 1, -1}));
        td.w_scale = masked_rms(w, ctl.view({1, 1, -1}));
    }
    td.u = u / td.u_scale;
    td.w = w / td.w_scale;
    return td;
}

/// One training batch: clean canvas, free mask, pinned values and extras.
struct Batch {
    torch::Tensor x0, free_mask, pinned, extras;
};

inline Batch make_batch(const TrainingData& data, ModelKind kind, const torch::Tensor& idx,
                        const torch::Tensor& drop_target) {
    const auto& L = data.layout;
    auto u = data.u.index_select(0, idx);
    auto w = data.w.index_select(0, idx);
    auto u0 = u.select(1, 0);
    auto uT = u.select(1, L.target_row());
    Batch b;
    b.x0 = kind == ModelKind::joint ? L.pack_joint(u, w) : L.pack_prior(w);

    auto mask_full = L.free_mask(kind, data.setting, ConditionRows::initial_and_target).unsqueeze(0);
    auto mask_init = L.free_mask(kind, data.setting, ConditionRows::initial_only).unsqueeze(0);
    auto pin_full = L.pinned_values(kind, u0, uT, ConditionRows::initial_and_target);
    auto pin_init = L.pinned_values(kind, u0, uT, ConditionRows::initial_only);
    auto ext_full = L.extras(kind, u0, uT, ConditionRows::initial_and_target);
    auto ext_init = L.extras(kind, u0, uT, ConditionRows::initial_only);
    auto sel = drop_target.view({-1, 1, 1, 1});
    b.free_mask = torch::where(sel, mask_init, mask_full);
    b.pinned = torch::where(sel, pin_init, pin_full);
    b.extras = torch::where(sel, ext_init, ext_full);
    return b;
}

/// Trains `model` (already created with the right kind/layout) on `data`.
/// Deterministic for a fixed seed with single-threaded torch.
inline TrainResult train(Denoiser model, const TrainingData& data, const TrainOptions& opts,
                         const std::string& dataset_id = "",
                         const std::function<void(const LossRecord&)>& on_log = {}) {
    if (opts.steps < 0 || opts.batch_size < 1) throw ConfigError("train: bad steps / batch size");
    model.u_scale = data.u_scale;
    model.w_scale = data.w_scale;
    const auto sched = model.schedule();
    const auto N = data.u.size(0);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(opts.seed);

    model.net->train();
    torch::optim::Adam optim(model.net->parameters(), torch::optim::AdamOptions(opts.lr));
    std::optional<std::vector<torch::Tensor>> ema;
    if (opts.ema) {
        ema.emplace();
        for (const auto& p : model.net->parameters()) ema->push_back(p.detach().clone());
    }

    std::ofstream log_file;
    if (!opts.log_path.empty()) log_file.open(opts.log_path, std::ios::app);

    TrainResult result;
    TrainingState state;
    state.cond_drop = model.kind == ModelKind::joint ? opts.cond_drop : 0.0;
    state.dataset_id = dataset_id;
    const auto t0 = std::chrono::steady_clock::now();
    double running = 0.0;
    std::int64_t running_n = 0;

    for (std::int64_t step = 0; step < opts.steps; ++step) {
        if (opts.cosine_annealing && opts.steps > 0) {
            const double lr = 0.5 * opts.lr * (1.0 + std::cos(std::numbers::pi * double(step) / double(opts.steps)));
            for (auto& g : optim.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
        }
        auto idx = torch::randint(0, N, {opts.batch_size}, gen, torch::kLong);
        auto drop = torch::rand({opts.batch_size}, gen) < state.cond_drop;
        auto ks = torch::randint(1, sched.K + 1, {opts.batch_size}, gen, torch::kLong);
        auto batch = make_batch(data, model.kind, idx, drop);
        auto eps = torch::randn(batch.x0.sizes(), gen, torch::kFloat32);

        optim.zero_grad();
        auto loss = masked_denoising_loss(
            [&](const torch::Tensor& z, const torch::Tensor& k) { return model.predict(z, batch.extras, k); },
            batch.x0, batch.free_mask, batch.pinned, ks, eps, sched);
        const double lv = loss.item<double>();
        if (!std::isfinite(lv))
            throw NumericalError("training loss is not finite at step " + std::to_string(step) +
                                 " (lr " + std::to_string(opts.lr) + ", batch " + std::to_string(opts.batch_size) + ")");
        loss.backward();
        if (opts.grad_clip > 0) torch::nn::utils::clip_grad_norm_(model.net->parameters(), opts.grad_clip);
        optim.step();
        if (ema) {
            torch::NoGradGuard ng;
            auto params = model.net->parameters();
            for (std::size_t i = 0; i < params.size(); ++i)
                (*ema)[i].mul_(opts.ema_decay).add_(params[i].detach(), 1.0 - opts.ema_decay);
        }

        running += lv;
        ++running_n;
        state.step = step + 1;
        const bool last = step + 1 == opts.steps;
        if ((opts.log_every > 0 && (step + 1) % opts.log_every == 0) || step == 0 || last) {
            LossRecord rec{step + 1, running / running_n,
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
            result.log.push_back(rec);
            if (log_file) log_file << Json{{"step", rec.step}, {"loss", rec.loss}, {"wall_time", rec.wall_seconds}}.dump() << "\n" << std::flush;
            if (on_log) on_log(rec);
            running = 0.0;
            running_n = 0;
        }
        if (opts.checkpoint_every > 0 && !opts.checkpoint_path.empty() && (step + 1) % opts.checkpoint_every == 0 && !last) {
            state.rng_state = gen.get_state();
            save_checkpoint(opts.checkpoint_path, model, state, ema);
        }
    }
    model.net->eval();
    state.rng_state = gen.get_state();
    result.state = state;
    result.ema = ema;
    result.model = std::move(model);
    return result;
}

/// Evaluates the masked loss of `model` on `data` with a fixed-seed batch
/// (no gradient). Used for smoke checks and step-0 reference values.
inline double evaluate_loss(const Denoiser& model, const TrainingData& data, std::int64_t batch_size,
                            std::uint64_t seed) {
    torch::NoGradGuard ng;
    const auto sched = model.schedule();
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto idx = torch::randint(0, data.u.size(0), {batch_size}, gen, torch::kLong);
    auto drop = torch::zeros({batch_size}, torch::kBool);
    auto ks = torch::randint(1, sched.K + 1, {batch_size}, gen, torch::kLong);
    auto batch = make_batch(data, model.kind, idx, drop);
    auto eps = torch::randn(batch.x0.sizes(), gen, torch::kFloat32);
    return masked_denoising_loss(
               [&](const torch::Tensor& z, const torch::Tensor& k) { return model.predict(z, batch.extras, k); },
               batch.x0, batch.free_mask, batch.pinned, ks, eps, sched)
        .item<double>();
}

} // namespace diffctl::diffusion

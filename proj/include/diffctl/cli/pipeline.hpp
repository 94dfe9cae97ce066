#pragma once

// Stage functions shared by the command-line tool and the acceptance runner:
// training from a config, batched control generation over a test set and
// closed-loop evaluation of the generated controls.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "diffctl/cli/config.hpp"
#include "diffctl/datagen/dataset.hpp"
#include "diffctl/diffusion/trainer.hpp"
#include "diffctl/eval/harness.hpp"
#include "diffctl/eval/samples.hpp"
#include "diffctl/sampler/control.hpp"

namespace diffctl::cli {

using diffusion::Denoiser;
using diffusion::ModelKind;

inline diffusion::CanvasLayout layout_for(const datagen::SolverSetup& s) {
    diffusion::CanvasLayout L;
    L.n_x = s.grid.n_x;
    L.n_windows = s.time.n_windows;
    return L;
}

/// A model may only be used with data of its own setting and grid.
inline void check_compatible(const Denoiser& m, const datagen::Dataset& d) {
    if (m.setting != d.setting)
        throw MismatchError(to_string(m.kind) + " model was trained for setting " + to_string(m.setting) +
                            " but the dataset is " + to_string(d.setting));
    if (m.layout.n_x != d.n_x() || m.layout.n_windows != d.n_windows())
        throw MismatchError(to_string(m.kind) + " model canvas does not match the dataset grid");
}

inline diffusion::TrainOptions train_options(const ExperimentConfig& c) {
    diffusion::TrainOptions o;
    o.steps = c.train_steps;
    o.batch_size = c.batch_size;
    o.lr = c.lr;
    o.cond_drop = c.cond_drop;
    o.seed = c.seed;
    o.log_every = c.log_every;
    o.checkpoint_every = c.checkpoint_every;
    o.ema = c.ema;
    o.ema_decay = c.ema_decay;
    o.grad_clip = c.grad_clip;
    return o;
}

/// Trains a joint or prior model on `train` and writes the checkpoint.
inline diffusion::TrainResult train_model(const ExperimentConfig& c, ModelKind kind, const datagen::Dataset& train,
                                          const std::string& checkpoint_path, const std::string& log_path = "",
                                          const std::function<void(const diffusion::LossRecord&)>& on_log = {}) {
    const auto& spec = kind == ModelKind::joint ? c.joint_spec : c.prior_spec;
    auto model = Denoiser::create(kind, train.setting, layout_for(train.solver), spec, c.schedule, c.K, c.seed);
    auto data = diffusion::prepare_training_data(train, model.layout);
    auto opts = train_options(c);
    opts.checkpoint_path = checkpoint_path;
    opts.log_path = log_path;
    auto res = diffusion::train(std::move(model), data, opts, c.train_data, on_log);
    diffusion::save_checkpoint(checkpoint_path, res.model, res.state, res.ema);
    return res;
}

struct GenerationPlan {
    sampler::GuidanceSpec guide;
    sampler::ReweightSpec reweight;
    sampler::SamplerConfig cfg;
    std::int64_t batch = 50;
};

inline GenerationPlan generation_plan(const ExperimentConfig& c) { return {c.guide, c.reweight, c.sampler, c.sample_batch}; }

/// Generates controls for the first `count` test conditionings (u0, u_T).
/// Sample i always uses noise stream i, whatever the batch size.
inline sampler::ControlSample generate_controls(const Denoiser& joint, const Denoiser* prior,
                                                const datagen::Dataset& test, std::int64_t count,
                                                const GenerationPlan& plan) {
    check_compatible(joint, test);
    if (prior) check_compatible(*prior, test);
    if (count < 1 || count > test.size())
        throw ConfigError("requested " + std::to_string(count) + " samples but the test set holds " +
                          std::to_string(test.size()));
    const auto u = diffusion::from_float_array(test.u);
    std::vector<torch::Tensor> us, ws;
    for (std::int64_t b = 0; b < count; b += plan.batch) {
        const auto n = std::min(plan.batch, count - b);
        sampler::ControlRequest r;
        r.joint = &joint;
        r.prior = prior;
        r.solver = test.solver;
        r.guide = plan.guide;
        r.reweight = plan.reweight;
        r.cfg = plan.cfg;
        r.first_index = b;
        auto rows = u.narrow(0, b, n);
        auto s = sampler::sample_control(r, {rows.select(1, 0), rows.select(1, test.n_windows())});
        us.push_back(s.u);
        ws.push_back(s.w);
    }
    return {torch::cat(us), torch::cat(ws)};
}

inline std::vector<std::uint64_t> sample_seeds(std::uint64_t seed, std::int64_t count) {
    std::vector<std::uint64_t> s(count);
    for (std::int64_t i = 0; i < count; ++i) s[i] = sampler::sample_stream_seed(seed, i);
    return s;
}

/// Closed-loop evaluation of generated sample i against test sample i.
inline std::vector<eval::EvalRecord> evaluate_samples(const sampler::ControlSample& s, const datagen::Dataset& test,
                                                      std::uint64_t seed, int threads = 1) {
    const auto n = s.w.size(0);
    if (n > test.size()) throw ShapeError("more samples than test conditionings");
    std::vector<std::int64_t> idx(n);
    for (std::int64_t i = 0; i < n; ++i) idx[i] = i;
    return eval::evaluate_batch(eval::to_control_batch(s, idx, sample_seeds(seed, n)), test, threads);
}

} // namespace diffctl::cli

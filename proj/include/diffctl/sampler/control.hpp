#pragma once

// Control generation for the Burgers task: builds the canvas, conditioning,
// objective gradient and per-sample noise streams around the trained
// denoisers and runs the reverse process.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "diffctl/datagen/dataset.hpp"
#include "diffctl/diffusion/model.hpp"
#include "diffctl/rng.hpp"
#include "diffctl/sampler/reverse.hpp"

namespace diffctl::sampler {

using diffusion::ConditionRows;
using diffusion::Denoiser;
using diffusion::ModelKind;

/// Physical-unit conditioning for a batch: u0 and the target state, [B, n_x].
/// Entries outside the observed region are ignored (treated as zero).
struct Conditioning {
    torch::Tensor u0;
    torch::Tensor u_target;
};

/// Generated trajectories in physical units (float64): u [B, T+1, n_x], w [B, T, n_x].
struct ControlSample {
    torch::Tensor u;
    torch::Tensor w;
};

/// Generator seed for sample `index` of a run seeded with `seed`.
inline std::uint64_t sample_stream_seed(std::uint64_t seed, std::int64_t index) {
    return Rng::derive(seed, static_cast<std::uint64_t>(index)).next_u64();
}

/// Per-sample torch generators, so a sample's draws do not depend on which
/// other samples share its batch.
class SampleStreams {
public:
    SampleStreams(std::uint64_t seed, std::int64_t first_index, std::int64_t count) {
        for (std::int64_t i = 0; i < count; ++i)
            gens_.push_back(at::make_generator<at::CPUGeneratorImpl>(sample_stream_seed(seed, first_index + i)));
    }

    torch::Tensor randn_like(const torch::Tensor& like) {
        if (like.size(0) != static_cast<int64_t>(gens_.size())) throw ShapeError("SampleStreams: batch size mismatch");
        const auto per = like.sizes().slice(1).vec();
        std::vector<torch::Tensor> parts;
        parts.reserve(gens_.size());
        for (auto& g : gens_) parts.push_back(torch::randn(per, g, like.options()));
        return torch::stack(parts);
    }

private:
    std::vector<at::Generator> gens_;
};

inline torch::Tensor mask_tensor(const std::vector<std::uint8_t>& m) {
    return torch::tensor(std::vector<int64_t>(m.begin(), m.end()), torch::kLong).to(torch::kBool);
}

/// Gradient of the guidance objective with respect to the clean canvas estimate
/// (model units), for joint canvases [B, 2, rows, n_x].
///
/// j_energy = sum w^2 dx dt over control rows, j_actual = sum over observed x of
/// (u_T - u_target)^2 dx, both in physical units (w = z_w * w_scale, u = z_u * u_scale).
inline torch::Tensor objective_gradient(const torch::Tensor& z_hat, const GuidanceSpec& g, const Denoiser& joint,
                                        const torch::Tensor& u_target, const datagen::SolverSetup& solver) {
    const auto& L = joint.layout;
    const double dx = solver.grid.dx(), dt = solver.time.window_duration();
    auto grad = torch::zeros_like(z_hat);
    using torch::indexing::Slice;
    if (g.energy) {
        auto zw = z_hat.index({Slice(), 1, Slice(0, L.w_rows())});
        grad.index_put_({Slice(), 1, Slice(0, L.w_rows())}, 2.0 * joint.w_scale * joint.w_scale * dx * dt * zw);
    }
    if (g.actual) {
        const auto obs = mask_tensor(joint.task().observation_mask).to(z_hat.dtype());
        auto uT = z_hat.index({Slice(), 0, L.target_row()}) * joint.u_scale;
        grad.index_put_({Slice(), 0, L.target_row()},
                        2.0 * joint.u_scale * dx * (uT - u_target.to(z_hat.dtype())) * obs);
    }
    return grad;
}

struct ControlRequest {
    const Denoiser* joint = nullptr;
    const Denoiser* prior = nullptr; ///< required when reweighting is active
    datagen::SolverSetup solver;
    GuidanceSpec guide;
    ReweightSpec reweight;
    SamplerConfig cfg;
    std::int64_t first_index = 0; ///< global index of the first sample (noise stream selection)
};

inline ConditionRows condition_rows(const GuidanceSpec& g) {
    return g.mode == GuidanceMode::conditioning ? ConditionRows::initial_and_target : ConditionRows::initial_only;
}

inline void check_models(const ControlRequest& r) {
    if (!r.joint) throw ConfigError("sampler: a joint model is required");
    if (r.joint->kind != ModelKind::joint) throw MismatchError("sampler: first model must be a joint model");
    if (r.joint->layout.n_x != r.solver.grid.n_x || r.joint->layout.n_windows != r.solver.time.n_windows)
        throw MismatchError("sampler: joint model canvas does not match the solver grid");
    if (r.reweight.active() && !r.prior) throw ConfigError("sampler: gamma != 1 needs a prior model checkpoint");
    if (r.prior) {
        if (r.prior->kind != ModelKind::prior) throw MismatchError("sampler: second model must be a prior model");
        if (r.prior->setting != r.joint->setting)
            throw MismatchError("sampler: prior model setting " + to_string(r.prior->setting) +
                                " differs from joint model setting " + to_string(r.joint->setting));
        if (r.prior->layout.n_x != r.joint->layout.n_x || r.prior->layout.n_windows != r.joint->layout.n_windows ||
            r.prior->layout.rows != r.joint->layout.rows)
            throw MismatchError("sampler: prior and joint canvases differ");
        if (std::abs(r.prior->w_scale - r.joint->w_scale) > 1e-6 * r.joint->w_scale)
            throw MismatchError("sampler: prior and joint models were trained with different control scales");
    }
}

/// Runs the reverse process for a batch of conditionings.
inline ControlSample sample_control(const ControlRequest& r, const Conditioning& c) {
    check_models(r);
    r.guide.validate();
    r.reweight.validate();
    const Denoiser& joint = *r.joint;
    const auto& L = joint.layout;
    const auto sched = joint.schedule();
    r.cfg.validate(sched.K);
    if (c.u0.dim() != 2 || c.u0.size(1) != L.n_x || c.u_target.sizes() != c.u0.sizes())
        throw ShapeError("sampler: conditioning must be [B, n_x] for u0 and u_target");
    const auto B = c.u0.size(0);
    const auto task = joint.task();
    const auto obs = mask_tensor(task.observation_mask).to(torch::kFloat32);
    const auto ctl = mask_tensor(task.control_mask).to(torch::kFloat64);
    const auto cond = condition_rows(r.guide);

    auto u0_phys = c.u0.to(torch::kFloat64) * obs.to(torch::kFloat64);
    auto uT_phys = c.u_target.to(torch::kFloat64) * obs.to(torch::kFloat64);
    auto u0m = (u0_phys / joint.u_scale).to(torch::kFloat32);
    auto uTm = (uT_phys / joint.u_scale).to(torch::kFloat32);

    auto free = L.free_mask(ModelKind::joint, task, cond).unsqueeze(0);
    auto pinned = L.pinned_values(ModelKind::joint, u0m, uTm, cond);
    auto extras = L.extras(ModelKind::joint, u0m, uTm, cond);

    ReverseModel m;
    m.free_mask = free;
    m.impose = [&](const torch::Tensor& z) { return diffusion::impose(z, free, pinned); };
    m.eps = [&](const torch::Tensor& z, int k) {
        return joint.predict(z, extras, torch::full({B}, k, torch::kLong));
    };
    torch::Tensor prior_extras, prior_free;
    if (r.prior) {
        const auto& P = *r.prior;
        auto pu0 = (u0_phys / P.u_scale).to(torch::kFloat32);
        auto puT = (uT_phys / P.u_scale).to(torch::kFloat32);
        prior_extras = P.layout.extras(ModelKind::prior, pu0, puT, ConditionRows::initial_and_target);
        prior_free = P.layout.free_mask(ModelKind::prior, task, ConditionRows::initial_and_target).unsqueeze(0);
        m.prior_mask = torch::zeros_like(free);
        m.prior_mask.index_put_({torch::indexing::Slice(), 1}, free.select(1, 1));
        m.prior_eps = [&, B](const torch::Tensor& z, int k) {
            auto zw = torch::where(prior_free, z.narrow(1, 1, 1), torch::zeros_like(prior_free, z.options()));
            auto e = r.prior->predict(zw, prior_extras, torch::full({B}, k, torch::kLong));
            auto out = torch::zeros_like(z);
            out.narrow(1, 1, 1).copy_(torch::where(prior_free, e, torch::zeros_like(e)));
            return out;
        };
    }
    const bool guided = r.guide.lambda0 != 0.0;
    if (guided) {
        auto target = uT_phys.to(torch::kFloat32);
        m.objective_grad = [&, target](const torch::Tensor& z_hat) {
            auto g = objective_gradient(z_hat, r.guide, joint, target, r.solver);
            return torch::where(free, g, torch::zeros_like(g));
        };
    }
    SampleStreams streams(r.cfg.seed, r.first_index, B);
    m.noise = [&](const torch::Tensor& like) { return streams.randn_like(like); };

    auto zK = streams.randn_like(torch::zeros({B, 2, L.rows, L.n_x}, torch::kFloat32));
    ReversePlan plan{r.guide, r.reweight, r.cfg};
    auto z0 = reverse(m, plan, sched, zK);

    ControlSample out;
    out.u = L.unpack_u(z0).to(torch::kFloat64) * joint.u_scale;
    out.u = out.u * obs.to(torch::kFloat64);
    out.u.select(1, 0).copy_(u0_phys);
    if (cond == ConditionRows::initial_and_target) out.u.select(1, L.target_row()).copy_(uT_phys);
    out.w = L.unpack_w(z0, ModelKind::joint).to(torch::kFloat64) * joint.w_scale * ctl;
    if (!torch::isfinite(out.u).all().item<bool>() || !torch::isfinite(out.w).all().item<bool>())
        throw NumericalError("sampler: generated sample is not finite");
    return out;
}

/// Sample container: dataset-shaped u/w plus a provenance record.
inline TensorFile samples_file(const ControlSample& s, const ControlRequest& r, const Json& provenance) {
    TensorFile f;
    f.meta = {{"kind", "samples"},
              {"solver", r.solver.to_json()},
              {"setting", to_string(r.joint->setting)},
              {"count", s.u.size(0)},
              {"guidance", r.guide.to_json()},
              {"reweight", r.reweight.to_json()},
              {"sampler", r.cfg.to_json()},
              {"first_index", r.first_index},
              {"provenance", provenance}};
    f.put("u", diffusion::to_float_array(s.u));
    f.put("w", diffusion::to_float_array(s.w));
    return f;
}

inline ControlSample control_sample_from_file(const TensorFile& f) {
    if (f.meta.value("kind", "") != "samples") throw FormatError("tensor file does not hold generated samples");
    ControlSample s;
    s.u = diffusion::from_float_array(f.floats("u")).to(torch::kFloat64);
    s.w = diffusion::from_float_array(f.floats("w")).to(torch::kFloat64);
    if (s.u.dim() != 3 || s.w.dim() != 3 || s.u.size(0) != s.w.size(0) || s.u.size(1) != s.w.size(1) + 1)
        throw FormatError("sample file shapes are inconsistent");
    return s;
}

} // namespace diffctl::sampler

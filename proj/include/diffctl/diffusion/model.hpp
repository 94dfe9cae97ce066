#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "diffctl/datagen/setting.hpp"
#include "diffctl/diffusion/canvas.hpp"
#include "diffctl/diffusion/schedule.hpp"
#include "diffctl/diffusion/unet.hpp"
#include "diffctl/io/tensor_file.hpp"

namespace diffctl::diffusion {

/// A trained (or freshly initialised) noise predictor together with the
/// metadata needed to use it: canvas layout, task setting, schedule and the
/// per-channel data scales (model units = physical units / scale).
struct Denoiser {
    ModelKind kind = ModelKind::joint;
    SettingKind setting = SettingKind::FO_FC;
    CanvasLayout layout;
    DenoiserSpec spec;
    ScheduleKind schedule_kind = ScheduleKind::cosine;
    int schedule_K = 1000;
    double u_scale = 1.0;
    double w_scale = 1.0;
    UNet net{nullptr};

    static Denoiser create(ModelKind kind, SettingKind setting, CanvasLayout layout, DenoiserSpec spec,
                           ScheduleKind schedule_kind, int K, std::uint64_t init_seed) {
        layout.validate();
        spec.in_channels = CanvasLayout::input_channels(kind);
        spec.out_channels = CanvasLayout::data_channels(kind);
        spec.folded_rows = spec.one_d() ? layout.rows : 1;
        Denoiser d;
        d.kind = kind;
        d.setting = setting;
        d.layout = layout;
        d.spec = spec;
        d.schedule_kind = schedule_kind;
        d.schedule_K = K;
        if ((!spec.one_d() && layout.rows % spec.resolution_divisor() != 0) || layout.n_x % spec.resolution_divisor() != 0)
            throw ConfigError("canvas [" + std::to_string(layout.rows) + ", " + std::to_string(layout.n_x) +
                              "] is not divisible by 2^(levels-1) = " + std::to_string(spec.resolution_divisor()));
        torch::manual_seed(init_seed);
        d.net = UNet(spec);
        return d;
    }

    DiffusionSchedule schedule() const { return make_schedule(schedule_K, schedule_kind); }
    TaskSetting task() const { return TaskSetting::make(setting, layout.n_x); }

    /// Per-data-channel scale, shape [1, C, 1, 1].
    torch::Tensor channel_scale() const {
        if (kind == ModelKind::joint)
            return torch::tensor({u_scale, w_scale}, torch::kFloat32).view({1, 2, 1, 1});
        return torch::tensor({w_scale}, torch::kFloat32).view({1, 1, 1, 1});
    }

    /// Noise prediction for data canvas `z` [B, C, rows, n_x] (model units,
    /// pinned entries already imposed) with extra channels `extras`.
    torch::Tensor predict(const torch::Tensor& z, const torch::Tensor& extras, const torch::Tensor& ks) const {
        return net.ptr()->forward(torch::cat({z, extras}, 1), ks);
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& p : net->parameters()) n += p.numel();
        return n;
    }
};

/// Training metadata stored with a checkpoint.
struct TrainingState {
    std::int64_t step = 0;
    double cond_drop = 0.0;
    std::string dataset_id;
    std::optional<torch::Tensor> rng_state; // uint8 generator state
};

inline FloatArray to_float_array(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    std::vector<std::int64_t> shape(c.sizes().begin(), c.sizes().end());
    std::vector<float> data(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
    return FloatArray(std::move(shape), std::move(data));
}

inline torch::Tensor from_float_array(const FloatArray& a) {
    return torch::from_blob(const_cast<float*>(a.data.data()), a.shape, torch::kFloat32).clone();
}

inline TensorFile checkpoint_file(const Denoiser& d, const TrainingState& state,
                                  const std::optional<std::vector<torch::Tensor>>& ema = std::nullopt) {
    TensorFile f;
    f.meta = {{"kind", "checkpoint"},
              {"model_kind", to_string(d.kind)},
              {"setting", to_string(d.setting)},
              {"layout", {{"n_x", d.layout.n_x}, {"n_windows", d.layout.n_windows}, {"rows", d.layout.rows}}},
              {"spec", d.spec.to_json()},
              {"schedule", {{"kind", to_string(d.schedule_kind)}, {"K", d.schedule_K}}},
              {"scales", {{"u", d.u_scale}, {"w", d.w_scale}}},
              {"training", {{"step", state.step}, {"cond_drop", state.cond_drop}, {"dataset", state.dataset_id}}}};
    for (const auto& p : d.net->named_parameters()) f.put("param." + p.key(), to_float_array(p.value()));
    if (ema) {
        const auto params = d.net->named_parameters();
        if (ema->size() != params.size()) throw Error("EMA parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i)
            f.put("ema." + params[i].key(), to_float_array((*ema)[i]));
    }
    if (state.rng_state) {
        auto s = state.rng_state->contiguous();
        f.put("rng_state", ByteArray({s.numel()}, std::vector<std::uint8_t>(s.data_ptr<std::uint8_t>(),
                                                                              s.data_ptr<std::uint8_t>() + s.numel())));
    }
    return f;
}

struct LoadedCheckpoint {
    Denoiser model;
    TrainingState state;
    std::optional<std::vector<torch::Tensor>> ema;
};

/// Restores a checkpoint. With `use_ema` the EMA weights (when present) are
/// loaded into the network instead of the raw parameters.
inline LoadedCheckpoint load_checkpoint(const TensorFile& f, std::optional<ModelKind> expected = std::nullopt,
                                        bool use_ema = false) {
    if (f.meta.value("kind", "") != "checkpoint") throw FormatError("tensor file is not a checkpoint");
    const auto& m = f.meta;
    LoadedCheckpoint out;
    const auto kind = parse_model_kind(m.at("model_kind").get<std::string>());
    if (expected && *expected != kind)
        throw MismatchError("checkpoint holds a " + to_string(kind) + " model, expected " + to_string(*expected));
    CanvasLayout layout{m.at("layout").at("n_x"), m.at("layout").at("n_windows"), m.at("layout").at("rows")};
    auto d = Denoiser::create(kind, parse_setting_kind(m.at("setting").get<std::string>()), layout,
                              DenoiserSpec::from_json(m.at("spec")),
                              parse_schedule_kind(m.at("schedule").at("kind").get<std::string>()),
                              m.at("schedule").at("K").get<int>(), 0);
    d.u_scale = m.at("scales").at("u");
    d.w_scale = m.at("scales").at("w");
    const bool have_ema = f.has("ema." + d.net->named_parameters()[0].key());
    {
        torch::NoGradGuard ng;
        for (auto& p : d.net->named_parameters()) {
            const std::string src = (use_ema && have_ema ? "ema." : "param.") + p.key();
            auto t = from_float_array(f.floats(src));
            if (t.sizes() != p.value().sizes()) throw FormatError("checkpoint tensor '" + src + "' has wrong shape");
            p.value().copy_(t);
        }
    }
    if (have_ema) {
        std::vector<torch::Tensor> ema;
        for (auto& p : d.net->named_parameters()) ema.push_back(from_float_array(f.floats("ema." + p.key())));
        out.ema = std::move(ema);
    }
    out.state.step = m.at("training").at("step");
    out.state.cond_drop = m.at("training").value("cond_drop", 0.0);
    out.state.dataset_id = m.at("training").value("dataset", "");
    if (f.has("rng_state")) {
        const auto& b = f.bytes("rng_state");
        out.state.rng_state =
            torch::from_blob(const_cast<std::uint8_t*>(b.data.data()), {b.size()}, torch::kUInt8).clone();
    }
    out.model = std::move(d);
    return out;
}

inline void save_checkpoint(const std::string& path, const Denoiser& d, const TrainingState& state,
                            const std::optional<std::vector<torch::Tensor>>& ema = std::nullopt) {
    write_tensor_file(path, checkpoint_file(d, state, ema));
}

inline LoadedCheckpoint load_checkpoint(const std::string& path, std::optional<ModelKind> expected = std::nullopt,
                                        bool use_ema = false) {
    return load_checkpoint(read_tensor_file(path), expected, use_ema);
}

} // namespace diffctl::diffusion

#pragma once

// Canvas layout shared by training and sampling.
//
// Data channels live on a [rows = 16, n_x] canvas: the state u occupies rows
// 0..n_windows, the control w rows 0..n_windows-1, remaining rows are zero
// padding. The joint model's data is [u, w] (2 channels); the prior model's
// data is w alone (1 channel).
//
// Every canvas entry is either *free* (a diffusion variable: noised in
// training, counted in the loss, denoised in sampling) or *pinned* (held at a
// fixed value in the model input). Pinned entries are the conditioning rows
// u[0] and u[T] (clean values), padding rows, hidden state positions (PO) and
// uncontrollable control positions (PC), all of which are pinned to zero
// except the conditioning rows.

#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "diffctl/datagen/setting.hpp"
#include "diffctl/error.hpp"

namespace diffctl::diffusion {

enum class ModelKind { joint, prior };

inline std::string to_string(ModelKind k) { return k == ModelKind::joint ? "joint" : "prior"; }

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "joint") return ModelKind::joint;
    if (s == "prior") return ModelKind::prior;
    throw ConfigError("unknown model kind '" + s + "'");
}

/// Which state rows are supplied as clean conditioning.
enum class ConditionRows {
    initial_and_target, ///< u[0] and u[T] pinned (guidance conditioning)
    initial_only        ///< only u[0] pinned; u[T] is generated (explicit guidance)
};

struct CanvasLayout {
    int n_x = 128;
    int n_windows = 10;
    int rows = 16;

    int u_rows() const { return n_windows + 1; }
    int w_rows() const { return n_windows; }
    int target_row() const { return n_windows; }

    void validate() const {
        if (rows < n_windows + 1) throw ConfigError("canvas rows must cover n_windows + 1 states");
    }

    static int data_channels(ModelKind kind) { return kind == ModelKind::joint ? 2 : 1; }
    /// Extra input channels appended to the data: the prior sees the
    /// conditioning state canvas, both models see the conditioning-row indicator.
    static int extra_channels(ModelKind kind) { return kind == ModelKind::joint ? 1 : 2; }
    static int input_channels(ModelKind kind) { return data_channels(kind) + extra_channels(kind); }

    /// [B, 11, n_x] and [B, 10, n_x] -> [B, 2, rows, n_x]
    torch::Tensor pack_joint(const torch::Tensor& u, const torch::Tensor& w) const {
        const auto B = u.size(0);
        auto c = torch::zeros({B, 2, rows, n_x}, u.options());
        c.index_put_({torch::indexing::Slice(), 0, torch::indexing::Slice(0, u_rows())}, u);
        c.index_put_({torch::indexing::Slice(), 1, torch::indexing::Slice(0, w_rows())}, w);
        return c;
    }

    /// [B, 10, n_x] -> [B, 1, rows, n_x]
    torch::Tensor pack_prior(const torch::Tensor& w) const {
        auto c = torch::zeros({w.size(0), 1, rows, n_x}, w.options());
        c.index_put_({torch::indexing::Slice(), 0, torch::indexing::Slice(0, w_rows())}, w);
        return c;
    }

    torch::Tensor unpack_u(const torch::Tensor& joint) const {
        return joint.index({torch::indexing::Slice(), 0, torch::indexing::Slice(0, u_rows())});
    }
    torch::Tensor unpack_w(const torch::Tensor& canvas, ModelKind kind) const {
        const int ch = kind == ModelKind::joint ? 1 : 0;
        return canvas.index({torch::indexing::Slice(), ch, torch::indexing::Slice(0, w_rows())});
    }

    /// Boolean [C, rows, n_x] mask of free entries for one sample.
    torch::Tensor free_mask(ModelKind kind, const TaskSetting& setting, ConditionRows cond) const {
        if (setting.n_x() != n_x) throw ShapeError("free_mask: setting grid does not match canvas");
        auto obs = torch::from_blob(const_cast<std::uint8_t*>(setting.observation_mask.data()), {n_x}, torch::kUInt8)
                       .to(torch::kBool)
                       .clone();
        auto ctl = torch::from_blob(const_cast<std::uint8_t*>(setting.control_mask.data()), {n_x}, torch::kUInt8)
                       .to(torch::kBool)
                       .clone();
        using torch::indexing::Slice;
        const int C = data_channels(kind);
        auto m = torch::zeros({C, rows, n_x}, torch::kBool);
        if (kind == ModelKind::joint) {
            const int last = cond == ConditionRows::initial_and_target ? target_row() : target_row() + 1;
            m.index_put_({0, Slice(1, last)}, obs.unsqueeze(0).expand({last - 1, n_x}));
        }
        const int wc = kind == ModelKind::joint ? 1 : 0;
        m.index_put_({wc, Slice(0, w_rows())}, ctl.unsqueeze(0).expand({w_rows(), n_x}));
        return m;
    }

    /// Pinned values for the data channels: conditioning rows carry the clean
    /// u0 / u_target (already masked to the observed region), zero elsewhere.
    /// u0, u_target: [B, n_x]. Returns [B, C, rows, n_x].
    torch::Tensor pinned_values(ModelKind kind, const torch::Tensor& u0, const torch::Tensor& u_target,
                                ConditionRows cond) const {
        const auto B = u0.size(0);
        auto p = torch::zeros({B, data_channels(kind), rows, n_x}, u0.options());
        if (kind == ModelKind::joint) {
            p.index_put_({torch::indexing::Slice(), 0, 0}, u0);
            if (cond == ConditionRows::initial_and_target)
                p.index_put_({torch::indexing::Slice(), 0, target_row()}, u_target);
        }
        return p;
    }

    /// Conditioning-row indicator channel [B, 1, rows, n_x].
    torch::Tensor indicator(std::int64_t B, ConditionRows cond, const torch::TensorOptions& opts) const {
        auto ind = torch::zeros({B, 1, rows, n_x}, opts);
        ind.index_put_({torch::indexing::Slice(), 0, 0}, 1.0);
        if (cond == ConditionRows::initial_and_target) ind.index_put_({torch::indexing::Slice(), 0, target_row()}, 1.0);
        return ind;
    }

    /// Extra input channels for `kind` (see extra_channels).
    torch::Tensor extras(ModelKind kind, const torch::Tensor& u0, const torch::Tensor& u_target,
                         ConditionRows cond) const {
        auto ind = indicator(u0.size(0), cond, u0.options());
        if (kind == ModelKind::joint) return ind;
        auto state = torch::zeros({u0.size(0), 1, rows, n_x}, u0.options());
        state.index_put_({torch::indexing::Slice(), 0, 0}, u0);
        if (cond == ConditionRows::initial_and_target)
            state.index_put_({torch::indexing::Slice(), 0, target_row()}, u_target);
        return torch::cat({state, ind}, 1);
    }
};

/// Replaces pinned entries of `z` by `pinned`; free entries pass through.
inline torch::Tensor impose(const torch::Tensor& z, const torch::Tensor& free_mask, const torch::Tensor& pinned) {
    return torch::where(free_mask, z, pinned);
}

} // namespace diffctl::diffusion

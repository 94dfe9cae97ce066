#pragma once

// Encoder-decoder denoiser over a [C, H, W] canvas (H = padded time axis,
// W = space) with residual blocks, linear attention per level and full
// attention in the bottleneck. The diffusion step enters through a
// sinusoidal embedding that modulates every residual block (scale/shift).
//
// Family "unet2d" convolves over time and space. Family "unet1d" folds the
// time rows into channels and convolves over space only; the canvas contract
// is unchanged.

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "diffctl/error.hpp"

namespace diffctl::diffusion {

struct DenoiserSpec {
    int in_channels = 3;
    int out_channels = 2;
    int init_dim = 32;
    std::vector<int> dim_mults = {1, 2, 4, 8};
    int resnet_blocks = 2; // per encoder/decoder level
    int groups = 8;
    int attn_heads = 4;
    int attn_dim_head = 32;
    int kernel_size = 3;
    bool level_attention = true;
    std::string padding_mode = "zeros"; // zeros | replicate | circular
    std::string family = "unet2d";      // unet2d | unet1d
    int folded_rows = 1;                // canvas rows folded into channels (unet1d)

    void validate() const {
        if (in_channels < 1 || out_channels < 1) throw ConfigError("DenoiserSpec: channel counts must be positive");
        if (init_dim < 1 || dim_mults.empty()) throw ConfigError("DenoiserSpec: bad dimensions");
        if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("DenoiserSpec: kernel_size must be odd");
        if (resnet_blocks < 1) throw ConfigError("DenoiserSpec: resnet_blocks must be >= 1");
        for (int m : dim_mults)
            if (m < 1 || (init_dim * m) % groups != 0)
                throw ConfigError("DenoiserSpec: every level width must be divisible by groups");
        if (init_dim % groups != 0) throw ConfigError("DenoiserSpec: init_dim must be divisible by groups");
        if (padding_mode != "zeros" && padding_mode != "replicate" && padding_mode != "circular")
            throw ConfigError("DenoiserSpec: unknown padding mode '" + padding_mode + "'");
        if (family != "unet2d" && family != "unet1d") throw ConfigError("DenoiserSpec: unknown family '" + family + "'");
        if (folded_rows < 1) throw ConfigError("DenoiserSpec: folded_rows must be >= 1");
    }

    bool one_d() const { return family == "unet1d"; }

    /// Spatial extents must be divisible by this (time extent too for unet2d).
    int resolution_divisor() const { return 1 << (dim_mults.size() - 1); }

    nlohmann::json to_json() const {
        return {{"in_channels", in_channels},     {"out_channels", out_channels}, {"init_dim", init_dim},
                {"dim_mults", dim_mults},         {"resnet_blocks", resnet_blocks}, {"groups", groups},
                {"attn_heads", attn_heads},       {"attn_dim_head", attn_dim_head}, {"kernel_size", kernel_size},
                {"level_attention", level_attention}, {"padding_mode", padding_mode},
                {"family", family},               {"folded_rows", folded_rows}};
    }

    static DenoiserSpec from_json(const nlohmann::json& j) {
        DenoiserSpec s;
        s.in_channels = j.at("in_channels");
        s.out_channels = j.at("out_channels");
        s.init_dim = j.at("init_dim");
        s.dim_mults = j.at("dim_mults").get<std::vector<int>>();
        s.resnet_blocks = j.at("resnet_blocks");
        s.groups = j.at("groups");
        s.attn_heads = j.at("attn_heads");
        s.attn_dim_head = j.at("attn_dim_head");
        s.kernel_size = j.at("kernel_size");
        s.level_attention = j.at("level_attention");
        s.padding_mode = j.at("padding_mode");
        s.family = j.value("family", std::string("unet2d"));
        s.folded_rows = j.value("folded_rows", 1);
        s.validate();
        return s;
    }

    bool operator==(const DenoiserSpec&) const = default;
};

namespace nn_detail {

inline torch::nn::Conv2dOptions conv_opts(int in, int out, int k, const std::string& padding_mode, bool one_d) {
    const int kh = one_d ? 1 : k;
    auto o = torch::nn::Conv2dOptions(in, out, {kh, k}).padding({kh / 2, k / 2});
    if (padding_mode == "replicate")
        o.padding_mode(torch::kReplicate);
    else if (padding_mode == "circular")
        o.padding_mode(torch::kCircular);
    return o;
}

} // namespace nn_detail

struct SinusoidalEmbeddingImpl : torch::nn::Module {
    int64_t dim;
    explicit SinusoidalEmbeddingImpl(int64_t d) : dim(d) {}

    torch::Tensor forward(const torch::Tensor& k) {
        const int64_t half = dim / 2;
        auto freqs =
            torch::exp(torch::arange(half, torch::kFloat32) * (-std::log(10000.0) / double(std::max<int64_t>(half - 1, 1))));
        auto args = k.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
        return torch::cat({args.sin(), args.cos()}, 1);
    }
};
TORCH_MODULE(SinusoidalEmbedding);

/// conv -> group norm -> (scale, shift) -> SiLU
struct ConvNormActImpl : torch::nn::Module {
    torch::nn::Conv2d conv{nullptr};
    torch::nn::GroupNorm norm{nullptr};

    ConvNormActImpl(int in, int out, int groups, int k, const std::string& pad, bool one_d) {
        conv = register_module("conv", torch::nn::Conv2d(nn_detail::conv_opts(in, out, k, pad, one_d)));
        norm = register_module("norm", torch::nn::GroupNorm(groups, out));
    }

    torch::Tensor forward(torch::Tensor x, const torch::Tensor& scale, const torch::Tensor& shift) {
        x = norm(conv(x));
        if (scale.defined()) x = x * (scale + 1) + shift;
        return torch::silu(x);
    }
};
TORCH_MODULE(ConvNormAct);

struct ResnetBlockImpl : torch::nn::Module {
    torch::nn::Linear time_proj{nullptr};
    ConvNormAct block1{nullptr}, block2{nullptr};
    torch::nn::Conv2d skip{nullptr};
    int out_dim;

    ResnetBlockImpl(int in, int out, int time_dim, int groups, int k, const std::string& pad, bool one_d)
        : out_dim(out) {
        time_proj = register_module("time_proj", torch::nn::Linear(time_dim, 2 * out));
        block1 = register_module("block1", ConvNormAct(in, out, groups, k, pad, one_d));
        block2 = register_module("block2", ConvNormAct(out, out, groups, k, pad, one_d));
        if (in != out) skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t_emb) {
        auto ss = time_proj(torch::silu(t_emb)).unsqueeze(-1).unsqueeze(-1).chunk(2, 1);
        auto h = block1(x, ss[0], ss[1]);
        h = block2(h, torch::Tensor(), torch::Tensor());
        return h + (skip ? skip(x) : x);
    }
};
TORCH_MODULE(ResnetBlock);

/// Softmax-kernel linear attention over all H*W positions, with pre-norm and
/// residual connection.
struct LinearAttentionImpl : torch::nn::Module {
    int heads, dim_head;
    torch::nn::GroupNorm prenorm{nullptr};
    torch::nn::Conv2d to_qkv{nullptr}, to_out{nullptr};
    torch::nn::GroupNorm out_norm{nullptr};

    LinearAttentionImpl(int dim, int h, int dh) : heads(h), dim_head(dh) {
        prenorm = register_module("prenorm", torch::nn::GroupNorm(1, dim));
        to_qkv = register_module("to_qkv",
                                 torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, 3 * h * dh, 1).bias(false)));
        to_out = register_module("to_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(h * dh, dim, 1)));
        out_norm = register_module("out_norm", torch::nn::GroupNorm(1, dim));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        const auto B = x.size(0), H = x.size(2), W = x.size(3);
        auto qkv = to_qkv(prenorm(x)).chunk(3, 1);
        auto q = qkv[0].reshape({B, heads, dim_head, H * W}).softmax(-2) * std::pow(double(dim_head), -0.5);
        auto k = qkv[1].reshape({B, heads, dim_head, H * W}).softmax(-1);
        auto v = qkv[2].reshape({B, heads, dim_head, H * W});
        auto context = torch::matmul(k, v.transpose(-1, -2));       // [B, h, d, d]
        auto out = torch::matmul(context.transpose(-1, -2), q);     // [B, h, d, n]
        out = out.reshape({B, heads * dim_head, H, W});
        return x + out_norm(to_out(out));
    }
};
TORCH_MODULE(LinearAttention);

struct FullAttentionImpl : torch::nn::Module {
    int heads, dim_head;
    torch::nn::GroupNorm prenorm{nullptr};
    torch::nn::Conv2d to_qkv{nullptr}, to_out{nullptr};

    FullAttentionImpl(int dim, int h, int dh) : heads(h), dim_head(dh) {
        prenorm = register_module("prenorm", torch::nn::GroupNorm(1, dim));
        to_qkv = register_module("to_qkv",
                                 torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, 3 * h * dh, 1).bias(false)));
        to_out = register_module("to_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(h * dh, dim, 1)));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        const auto B = x.size(0), H = x.size(2), W = x.size(3);
        auto qkv = to_qkv(prenorm(x)).chunk(3, 1);
        auto q = qkv[0].reshape({B, heads, dim_head, H * W}).transpose(-1, -2);
        auto k = qkv[1].reshape({B, heads, dim_head, H * W}).transpose(-1, -2);
        auto v = qkv[2].reshape({B, heads, dim_head, H * W}).transpose(-1, -2);
        auto attn = torch::matmul(q, k.transpose(-1, -2)).mul(std::pow(double(dim_head), -0.5)).softmax(-1);
        auto out = torch::matmul(attn, v).transpose(-1, -2).reshape({B, heads * dim_head, H, W});
        return x + to_out(out);
    }
};
TORCH_MODULE(FullAttention);

/// 2x reduction (both axes, or space only for 1-D): pixel unshuffle followed by a 1x1 mix.
struct DownsampleImpl : torch::nn::Module {
    torch::nn::Conv2d proj{nullptr};
    bool one_d;
    DownsampleImpl(int in, int out, bool one_d_) : one_d(one_d_) {
        proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions((one_d ? 2 : 4) * in, out, 1)));
    }
    torch::Tensor forward(const torch::Tensor& x) {
        if (!one_d)
            return proj(torch::nn::functional::pixel_unshuffle(x, torch::nn::functional::PixelUnshuffleFuncOptions(2)));
        const auto B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
        return proj(x.reshape({B, C, H, W / 2, 2}).permute({0, 1, 4, 2, 3}).reshape({B, 2 * C, H, W / 2}));
    }
};
TORCH_MODULE(Downsample);

struct UpsampleImpl : torch::nn::Module {
    torch::nn::Conv2d conv{nullptr};
    double sh;
    UpsampleImpl(int in, int out, int k, const std::string& pad, bool one_d) : sh(one_d ? 1.0 : 2.0) {
        conv = register_module("conv", torch::nn::Conv2d(nn_detail::conv_opts(in, out, k, pad, one_d)));
    }
    torch::Tensor forward(const torch::Tensor& x) {
        namespace F = torch::nn::functional;
        return conv(F::interpolate(x, F::InterpolateFuncOptions()
                                          .scale_factor(std::vector<double>{sh, 2.0})
                                          .mode(torch::kNearest)));
    }
};
TORCH_MODULE(Upsample);

struct UNetImpl : torch::nn::Module {
    DenoiserSpec spec;
    torch::nn::Conv2d init_conv{nullptr};
    SinusoidalEmbedding time_embed{nullptr};
    torch::nn::Sequential time_mlp{nullptr};
    torch::nn::ModuleList down_blocks, down_attn, down_sample;
    torch::nn::ModuleList up_blocks, up_attn, up_sample;
    ResnetBlock mid1{nullptr}, mid2{nullptr};
    FullAttention mid_attn{nullptr};
    ResnetBlock final_block{nullptr};
    torch::nn::Conv2d final_conv{nullptr};

    explicit UNetImpl(DenoiserSpec s) : spec(std::move(s)) {
        spec.validate();
        const int d0 = spec.init_dim, td = 4 * d0, k = spec.kernel_size, g = spec.groups;
        const auto& pad = spec.padding_mode;
        const bool o = spec.one_d();
        const int fold = o ? spec.folded_rows : 1;
        init_conv = register_module(
            "init_conv", torch::nn::Conv2d(nn_detail::conv_opts(spec.in_channels * fold, d0, 7, pad, o)));
        time_embed = register_module("time_embed", SinusoidalEmbedding(d0));
        time_mlp = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(d0, td), torch::nn::GELU(),
                                                                      torch::nn::Linear(td, td)));

        std::vector<int> dims{d0};
        for (int m : spec.dim_mults) dims.push_back(d0 * m);
        const int L = static_cast<int>(spec.dim_mults.size());
        down_blocks = register_module("down_blocks", torch::nn::ModuleList());
        down_attn = register_module("down_attn", torch::nn::ModuleList());
        down_sample = register_module("down_sample", torch::nn::ModuleList());
        for (int i = 0; i < L; ++i) {
            const int din = dims[i], dout = dims[i + 1];
            for (int r = 0; r < spec.resnet_blocks; ++r) down_blocks->push_back(ResnetBlock(din, din, td, g, k, pad, o));
            if (spec.level_attention) down_attn->push_back(LinearAttention(din, spec.attn_heads, spec.attn_dim_head));
            if (i < L - 1)
                down_sample->push_back(Downsample(din, dout, o));
            else
                down_sample->push_back(torch::nn::Conv2d(nn_detail::conv_opts(din, dout, k, pad, o)));
        }
        const int mid = dims.back();
        mid1 = register_module("mid1", ResnetBlock(mid, mid, td, g, k, pad, o));
        mid_attn = register_module("mid_attn", FullAttention(mid, spec.attn_heads, spec.attn_dim_head));
        mid2 = register_module("mid2", ResnetBlock(mid, mid, td, g, k, pad, o));

        up_blocks = register_module("up_blocks", torch::nn::ModuleList());
        up_attn = register_module("up_attn", torch::nn::ModuleList());
        up_sample = register_module("up_sample", torch::nn::ModuleList());
        for (int i = L - 1; i >= 0; --i) {
            const int din = dims[i], dout = dims[i + 1];
            for (int r = 0; r < spec.resnet_blocks; ++r)
                up_blocks->push_back(ResnetBlock(dout + din, dout, td, g, k, pad, o));
            if (spec.level_attention) up_attn->push_back(LinearAttention(dout, spec.attn_heads, spec.attn_dim_head));
            if (i > 0)
                up_sample->push_back(Upsample(dout, din, k, pad, o));
            else
                up_sample->push_back(torch::nn::Conv2d(nn_detail::conv_opts(dout, din, k, pad, o)));
        }
        final_block = register_module("final_block", ResnetBlock(2 * d0, d0, td, g, k, pad, o));
        final_conv = register_module("final_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(d0, spec.out_channels * fold, 1)));
    }

    /// x: [B, in_channels, H, W]; k: [B] diffusion steps. Returns [B, out_channels, H, W].
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& k) {
        const int div = spec.resolution_divisor();
        const bool o = spec.one_d();
        if (x.dim() != 4 || x.size(1) != spec.in_channels || (!o && x.size(2) % div != 0) || x.size(3) % div != 0 ||
            (o && x.size(2) != spec.folded_rows))
            throw ShapeError("UNet: input must be [B, " + std::to_string(spec.in_channels) +
                             ", H, W] with W divisible by " + std::to_string(div) +
                             (o ? " and H = " + std::to_string(spec.folded_rows) : " and H divisible too"));
        const auto B = x.size(0), H = x.size(2), W = x.size(3);
        auto t = time_mlp->forward(time_embed(k));
        auto h = init_conv(o ? x.reshape({B, -1, 1, W}) : x);
        auto r = h.clone();
        std::vector<torch::Tensor> skips;
        const int L = static_cast<int>(spec.dim_mults.size());
        int b = 0;
        for (int i = 0; i < L; ++i) {
            for (int j = 0; j < spec.resnet_blocks; ++j) {
                h = down_blocks[b++]->as<ResnetBlock>()->forward(h, t);
                skips.push_back(h);
            }
            if (spec.level_attention) h = down_attn[i]->as<LinearAttention>()->forward(h);
            if (i < L - 1)
                h = down_sample[i]->as<Downsample>()->forward(h);
            else
                h = down_sample[i]->as<torch::nn::Conv2d>()->forward(h);
        }
        h = mid1(h, t);
        h = mid_attn(h);
        h = mid2(h, t);
        b = 0;
        for (int i = 0; i < L; ++i) {
            for (int j = 0; j < spec.resnet_blocks; ++j) {
                h = torch::cat({h, skips.back()}, 1);
                skips.pop_back();
                h = up_blocks[b++]->as<ResnetBlock>()->forward(h, t);
            }
            if (spec.level_attention) h = up_attn[i]->as<LinearAttention>()->forward(h);
            if (i < L - 1)
                h = up_sample[i]->as<Upsample>()->forward(h);
            else
                h = up_sample[i]->as<torch::nn::Conv2d>()->forward(h);
        }
        h = final_block(torch::cat({h, r}, 1), t);
        h = final_conv(h);
        return o ? h.reshape({B, spec.out_channels, H, W}) : h;
    }
};
TORCH_MODULE(UNet);

} // namespace diffctl::diffusion

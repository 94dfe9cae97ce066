#include <gtest/gtest.h>

#include <cmath>

#include "diffctl/sampler/control.hpp"

using namespace diffctl;
using namespace diffctl::sampler;
using diffusion::make_schedule;
using diffusion::ScheduleKind;

namespace {

constexpr double kMu = 0.7, kStd = 0.4;

/// Exact noise prediction for data distributed N(kMu, kStd^2) per coordinate.
Eps gaussian_eps(const DiffusionSchedule& s) {
    return [&s](const torch::Tensor& z, int k) {
        const double ab = s.alpha_bar_at(k);
        return std::sqrt(1.0 - ab) * (z - std::sqrt(ab) * kMu) / (ab * kStd * kStd + 1.0 - ab);
    };
}

ReverseModel gaussian_model(const DiffusionSchedule& s, std::uint64_t seed) {
    ReverseModel m;
    m.eps = gaussian_eps(s);
    auto gen = std::make_shared<at::Generator>(at::make_generator<at::CPUGeneratorImpl>(seed));
    m.noise = [gen](const torch::Tensor& like) { return torch::randn(like.sizes(), *gen, like.options()); };
    return m;
}

ReversePlan plain_plan(int ddim_steps = 0, double eta = 0.0) {
    ReversePlan p;
    p.cfg.clip_denoised = 0.0;
    p.cfg.n_ddim_steps = ddim_steps;
    p.cfg.eta_ddim = eta;
    return p;
}

torch::Tensor start_noise(std::int64_t n, std::uint64_t seed) {
    auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
    return torch::randn({n, 1}, g, torch::kFloat64);
}

diffusion::DenoiserSpec tiny_spec() {
    diffusion::DenoiserSpec s;
    s.init_dim = 8;
    s.dim_mults = {1, 2};
    s.resnet_blocks = 1;
    s.groups = 4;
    s.level_attention = false;
    s.family = "unet1d";
    return s;
}

Denoiser tiny(ModelKind kind, SettingKind setting, std::uint64_t seed) {
    auto d = Denoiser::create(kind, setting, diffusion::CanvasLayout{}, tiny_spec(), ScheduleKind::cosine, 20, seed);
    d.u_scale = 0.5;
    d.w_scale = 0.7;
    d.net->eval();
    return d;
}

Conditioning conditioning(std::int64_t B, std::uint64_t seed) {
    auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
    return {torch::randn({B, 128}, g, torch::kFloat64) * 0.3, torch::randn({B, 128}, g, torch::kFloat64) * 0.3};
}

} // namespace

TEST(ReverseGaussian, AncestralRecoversDataMoments) {
    auto s = make_schedule(200, ScheduleKind::linear);
    auto x = reverse(gaussian_model(s, 1), plain_plan(), s, start_noise(40000, 2));
    EXPECT_NEAR(x.mean().item<double>(), kMu, 0.02);
    EXPECT_NEAR(x.std().item<double>(), kStd, 0.02);
}

TEST(ReverseGaussian, StochasticStridedFullStepsRecoversDataMoments) {
    auto s = make_schedule(200, ScheduleKind::linear);
    auto x = reverse(gaussian_model(s, 3), plain_plan(200, 1.0), s, start_noise(40000, 4));
    EXPECT_NEAR(x.mean().item<double>(), kMu, 0.02);
    EXPECT_NEAR(x.std().item<double>(), kStd, 0.02);
}

TEST(ReverseGaussian, DeterministicStridedFewStepsRecoversDataMoments) {
    auto s = make_schedule(1000, ScheduleKind::cosine);
    auto x = reverse(gaussian_model(s, 5), plain_plan(50, 0.0), s, start_noise(40000, 6));
    EXPECT_NEAR(x.mean().item<double>(), kMu, 0.02);
    EXPECT_NEAR(x.std().item<double>(), kStd, 0.02);
}

TEST(ReverseGaussian, DeterministicStridedDrawsNoNoise) {
    auto s = make_schedule(100, ScheduleKind::cosine);
    ReverseModel m;
    m.eps = gaussian_eps(s);
    m.noise = [](const torch::Tensor&) -> torch::Tensor { throw std::logic_error("noise drawn"); };
    auto z = start_noise(16, 7);
    auto a = reverse(m, plain_plan(8, 0.0), s, z);
    auto b = reverse(m, plain_plan(8, 0.0), s, z);
    EXPECT_TRUE(torch::equal(a, b));
}

TEST(ReverseGaussian, EnergyGuidanceShrinksSquaredNorm) {
    auto s = make_schedule(200, ScheduleKind::linear);
    auto z = start_noise(20000, 8);
    auto plain = reverse(gaussian_model(s, 9), plain_plan(), s, z);
    auto m = gaussian_model(s, 9);
    m.objective_grad = [](const torch::Tensor& zh) { return 2.0 * zh; };
    auto p = plain_plan();
    p.guide.lambda0 = 5.0;
    p.guide.schedule = LambdaSchedule::constant;
    p.guide.max_shift = 0.0;
    auto guided = reverse(m, p, s, z);
    EXPECT_LT(guided.pow(2).mean().item<double>(), 0.9 * plain.pow(2).mean().item<double>());
}

TEST(ReverseGaussian, ZeroLambdaNeverEvaluatesGradient) {
    auto s = make_schedule(50, ScheduleKind::cosine);
    auto m = gaussian_model(s, 1);
    m.objective_grad = [](const torch::Tensor&) -> torch::Tensor { throw std::logic_error("gradient evaluated"); };
    EXPECT_NO_THROW(reverse(m, plain_plan(), s, start_noise(4, 1)));
    GuidanceSpec g;
    for (double v : lambda_table(g, s)) EXPECT_EQ(v, 0.0);
}

TEST(ReverseGaussian, UnitGammaIgnoresPrior) {
    auto s = make_schedule(50, ScheduleKind::cosine);
    auto z = start_noise(32, 11);
    auto a = reverse(gaussian_model(s, 12), plain_plan(), s, z);
    for (auto combine : {Combine::combined_noise, Combine::two_step}) {
        auto m = gaussian_model(s, 12);
        m.prior_eps = [](const torch::Tensor&, int) -> torch::Tensor { throw std::logic_error("prior evaluated"); };
        auto p = plain_plan();
        p.reweight.gamma = 1.0;
        p.reweight.combine = combine;
        EXPECT_TRUE(torch::equal(reverse(m, p, s, z), a));
    }
}

TEST(ReverseGaussian, ClipBoundsCleanEstimate) {
    auto s = make_schedule(100, ScheduleKind::cosine);
    auto z = torch::full({3}, 5.0, torch::kFloat64);
    auto eps = torch::full({3}, -50.0, torch::kFloat64);
    auto clipped = sampler::detail::clip_noise(z, eps, 100, s, 2.0);
    auto zh = diffusion::estimate_clean(z, clipped, 100, s);
    EXPECT_NEAR(zh.abs().max().item<double>(), 2.0, 1e-9);
    EXPECT_TRUE(torch::equal(sampler::detail::clip_noise(z, eps, 100, s, 0.0), eps));
}

TEST(Schedules, GammaExamples) {
    auto s = make_schedule(100, ScheduleKind::linear);
    ReweightSpec r;
    r.gamma = 0.4;
    EXPECT_EQ(gamma_at(37, r, s), 0.4);
    r.schedule = GammaSchedule::beta_reversed;
    EXPECT_NEAR(gamma_at(1, r, s), 0.4, 1e-15);
    EXPECT_NEAR(gamma_at(100, r, s), 1.0 - 0.6 * 1e-4 / 0.02, 1e-15);
    EXPECT_EQ(prior_noise_scale(1, s), s.beta_at(100));
    EXPECT_EQ(prior_noise_scale(100, s), s.beta_at(1));
}

TEST(Schedules, LambdaTables) {
    auto s = make_schedule(100, ScheduleKind::linear);
    auto cos = make_schedule(100, ScheduleKind::cosine);
    GuidanceSpec g;
    g.lambda0 = 3.0;
    auto t = lambda_table(g, s);
    EXPECT_DOUBLE_EQ(t[0], 3.0 * cos.beta_at(1));
    EXPECT_DOUBLE_EQ(t[99], 3.0 * cos.beta_at(100));
    g.schedule = LambdaSchedule::beta_increasing;
    EXPECT_DOUBLE_EQ(lambda_table(g, s)[0], 3.0 * 0.02);
    g.schedule = LambdaSchedule::constant;
    EXPECT_DOUBLE_EQ(lambda_table(g, s)[42], 3.0);
}

TEST(Schedules, StridedSteps) {
    EXPECT_EQ(ddim_steps(1000, 8), (std::vector<int>{125, 250, 375, 500, 625, 750, 875, 1000}));
    EXPECT_EQ(ddim_steps(10, 3), (std::vector<int>{4, 7, 10}));
    EXPECT_EQ(ddim_steps(5, 5), (std::vector<int>{1, 2, 3, 4, 5}));
    EXPECT_THROW(ddim_steps(10, 11), ConfigError);
}

TEST(ObjectiveGradient, MatchesFiniteDifferences) {
    auto joint = tiny(ModelKind::joint, SettingKind::PO_PC, 1);
    datagen::SolverSetup solver;
    GuidanceSpec g;
    g.energy = g.actual = true;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
    auto zh = torch::randn({1, 2, 16, 128}, gen, torch::kFloat64);
    auto target = torch::randn({1, 128}, gen, torch::kFloat64);
    const double dx = solver.grid.dx(), dt = solver.time.window_duration();
    const auto obs = mask_tensor(joint.task().observation_mask).to(torch::kFloat64);
    auto J = [&](const torch::Tensor& z) {
        using torch::indexing::Slice;
        auto w = z.index({0, 1, Slice(0, 10)}) * joint.w_scale;
        auto uT = z.index({0, 0, 10}) * joint.u_scale;
        return (w.pow(2).sum() * dx * dt + ((uT - target[0]).pow(2) * obs).sum() * dx).item<double>();
    };
    auto grad = objective_gradient(zh, g, joint, target, solver);
    const double h = 1e-5;
    for (auto idx : {std::array<long, 3>{1, 3, 10}, {1, 9, 127}, {0, 10, 5}, {0, 10, 50}, {0, 4, 7}}) {
        auto zp = zh.clone(), zm = zh.clone();
        zp.index_put_({0, idx[0], idx[1], idx[2]}, zh.index({0, idx[0], idx[1], idx[2]}) + h);
        zm.index_put_({0, idx[0], idx[1], idx[2]}, zh.index({0, idx[0], idx[1], idx[2]}) - h);
        const double fd = (J(zp) - J(zm)) / (2 * h);
        const double an = grad.index({0, idx[0], idx[1], idx[2]}).item<double>();
        EXPECT_NEAR(an, fd, 1e-4 * std::max(std::abs(fd), 1e-3)) << idx[0] << "," << idx[1] << "," << idx[2];
    }
}

TEST(SampleControl, PartialControlAndConditioningRowsAreExact) {
    auto joint = tiny(ModelKind::joint, SettingKind::PO_PC, 2);
    ControlRequest r;
    r.joint = &joint;
    r.cfg.seed = 4;
    auto c = conditioning(3, 1);
    auto out = sample_control(r, c);
    const auto obs = mask_tensor(joint.task().observation_mask).to(torch::kFloat64);
    for (int i = 32; i < 96; ++i) EXPECT_EQ(out.w.index({torch::indexing::Slice(), torch::indexing::Slice(), i}).abs().sum().item<double>(), 0.0);
    EXPECT_TRUE(torch::equal(out.u.select(1, 0), c.u0 * obs));
    EXPECT_TRUE(torch::equal(out.u.select(1, 10), c.u_target * obs));
    EXPECT_GT(out.w.abs().sum().item<double>(), 0.0);
}

TEST(SampleControl, SampleDrawsDoNotDependOnBatchComposition) {
    auto joint = tiny(ModelKind::joint, SettingKind::FO_FC, 3);
    ControlRequest r;
    r.joint = &joint;
    r.cfg.seed = 8;
    r.cfg.n_ddim_steps = 5;
    r.cfg.eta_ddim = 1.0;
    auto c = conditioning(3, 2);
    auto all = sample_control(r, c);
    r.first_index = 2;
    auto last = sample_control(r, {c.u0.narrow(0, 2, 1), c.u_target.narrow(0, 2, 1)});
    // Batched float32 convolutions round differently, so equality is only approximate.
    EXPECT_LT((all.w[2] - last.w[0]).abs().max().item<double>(), 1e-3);
    EXPECT_GT((all.w[1] - last.w[0]).abs().max().item<double>(), 1e-2);
}

TEST(SampleControl, UnitGammaWithPriorIsBitIdentical) {
    auto joint = tiny(ModelKind::joint, SettingKind::FO_PC, 4);
    auto prior = tiny(ModelKind::prior, SettingKind::FO_PC, 5);
    ControlRequest r;
    r.joint = &joint;
    r.cfg.seed = 1;
    auto c = conditioning(2, 3);
    auto a = sample_control(r, c);
    r.prior = &prior;
    auto b = sample_control(r, c);
    EXPECT_TRUE(torch::equal(a.w, b.w));
    EXPECT_TRUE(torch::equal(a.u, b.u));
}

TEST(SampleControl, ModelChecks) {
    auto joint = tiny(ModelKind::joint, SettingKind::FO_PC, 4);
    auto other = tiny(ModelKind::prior, SettingKind::PO_FC, 5);
    ControlRequest r;
    r.joint = &joint;
    r.reweight.gamma = 0.5;
    EXPECT_THROW(sample_control(r, conditioning(1, 0)), ConfigError);
    r.prior = &other;
    EXPECT_THROW(sample_control(r, conditioning(1, 0)), MismatchError);
    r.prior = nullptr;
    r.joint = &other;
    EXPECT_THROW(sample_control(r, conditioning(1, 0)), MismatchError);
}

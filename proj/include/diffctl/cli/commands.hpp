#pragma once

// The diffctl command-line tool. Every subcommand loads the config file (if
// any), applies environment overrides, then `--set key=value` pairs, then its
// own flags, validates, and writes the effective config next to its outputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "diffctl/cli/config.hpp"
#include "diffctl/cli/pipeline.hpp"
#include "diffctl/cli/plot.hpp"
#include "diffctl/theory/toy_world.hpp"

namespace diffctl::cli {

namespace fs = std::filesystem;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
};

/// Flag values are kept as strings and routed through the config registry,
/// so the snapshot always records what was actually used.
struct FlagOverrides {
    std::vector<std::pair<std::string, std::string>> values;
    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto& slot = values.emplace_back(key, "");
        (void)slot;
        const auto i = values.size() - 1;
        app->add_option_function<std::string>(flag, [this, i](const std::string& v) { values[i].second = v; }, help);
    }
    void apply(ExperimentConfig& c) const {
        for (const auto& [k, v] : values)
            if (!v.empty()) set_value(c, k, v);
    }
};

inline void add_common(CLI::App* app, CommonArgs& a) {
    app->add_option("-c,--config", a.config_path, "config file (key = value lines)");
    app->add_option("--set", a.sets, "override a config key: --set key=value (repeatable)");
    app->add_option("-o,--out", a.out, "output directory (config key output_dir)");
}

inline ExperimentConfig build_config(const CommonArgs& a, const FlagOverrides& flags) {
    ExperimentConfig c = a.config_path.empty() ? ExperimentConfig{} : load_config_file(a.config_path);
    apply_environment(c);
    for (const auto& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_value(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    if (!a.out.empty()) set_value(c, "output_dir", a.out);
    flags.apply(c);
    c.validate();
    return c;
}

/// Creates the output directory and writes config.txt and provenance.json.
inline fs::path prepare_output(const ExperimentConfig& c, const std::string& command, const Json& inputs) {
    fs::path dir(c.output_dir);
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "config.txt");
        if (!f) throw Error("cannot write " + (dir / "config.txt").string());
        f << serialize(c);
    }
    std::ofstream p(dir / "provenance.json");
    p << Json{{"command", command}, {"inputs", inputs}}.dump(2) << "\n";
    return dir;
}

inline std::string resolve(const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; }

inline diffusion::LoadedCheckpoint load_model(const std::string& path, ModelKind kind, bool use_ema) {
    if (path.empty()) throw ConfigError("a " + to_string(kind) + " checkpoint path is required (--" + to_string(kind) + ")");
    if (!fs::exists(path)) throw ConfigError("missing checkpoint '" + path + "'");
    return diffusion::load_checkpoint(path, kind, use_ema);
}

inline datagen::Dataset load_dataset(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("missing dataset '" + path + "'");
    return datagen::read_dataset(path);
}

inline Json summary_json(const eval::Summary& s) {
    Json j{{"mean_j_actual", s.mean_j_actual},
           {"mean_j_energy", s.mean_j_energy},
           {"n_ok", s.n_ok},
           {"n_failed", s.n_failed},
           {"mask_violations", s.mask_violations}};
    if (s.mean_state_mse) j["mean_state_mse"] = *s.mean_state_mse;
    return j;
}

struct SampleArgs {
    std::string joint, prior, data;
    std::int64_t n = 0;
};

inline void add_sample_flags(CLI::App* app, SampleArgs& s, FlagOverrides& f) {
    app->add_option("--joint", s.joint, "joint model checkpoint");
    app->add_option("--prior", s.prior, "prior model checkpoint (needed when gamma != 1)");
    app->add_option("--data", s.data, "test dataset (default: config data.test)");
    app->add_option("--n", s.n, "number of test conditionings (default: whole test set)");
    f.add(app, "--mode", "guide.mode", "conditioning | explicit");
    f.add(app, "--lambda", "guide.lambda0", "guidance intensity lambda0");
    f.add(app, "--gamma", "reweight.gamma", "prior reweighting gamma");
    f.add(app, "--ddim-steps", "sampler.n_ddim_steps", "DDIM steps (0: full ancestral sampler)");
    f.add(app, "--seed", "sampler.seed", "sampling seed");
    f.add(app, "--threads", "threads", "worker threads");
}

struct Generated {
    sampler::ControlSample sample;
    datagen::Dataset test;
    Json inputs;
};

inline Generated generate_from_args(const ExperimentConfig& c, const SampleArgs& s) {
    Generated g;
    const auto data_path = resolve(s.data, c.test_data);
    g.test = load_dataset(data_path);
    auto joint = load_model(s.joint, ModelKind::joint, c.use_ema);
    std::optional<diffusion::LoadedCheckpoint> prior;
    if (!s.prior.empty()) prior = load_model(s.prior, ModelKind::prior, c.use_ema);
    const auto n = s.n > 0 ? s.n : g.test.size();
    g.sample = generate_controls(joint.model, prior ? &prior->model : nullptr, g.test, n, generation_plan(c));
    g.inputs = {{"joint", s.joint}, {"prior", s.prior}, {"data", data_path}, {"count", n},
                {"joint_step", joint.state.step}};
    return g;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout) {
    CLI::App app{"diffctl: diffusion-based control of the 1-D Burgers equation"};
    app.require_subcommand(1);

    CommonArgs common;
    FlagOverrides flags;

    auto* gen = app.add_subcommand("gen-data", "generate a training or test dataset");
    std::string split = "train", gen_output;
    add_common(gen, common);
    gen->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));
    gen->add_option("--output", gen_output, "dataset file (default: <out>/<split>.dctf)");
    FlagOverrides gen_flags;
    gen_flags.add(gen, "--setting", "setting", "FO-PC | PO-FC | PO-PC | FO-FC");
    std::string gen_n, gen_seed;
    gen->add_option("--n", gen_n, "number of trajectories");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen_flags.add(gen, "--threads", "threads", "worker threads");

    std::string train_data;
    FlagOverrides train_flags;
    auto add_train = [&](const std::string& name, const std::string& help) {
        auto* sc = app.add_subcommand(name, help);
        add_common(sc, common);
        sc->add_option("--data", train_data, "training dataset (default: config data.train)");
        train_flags.add(sc, "--steps", "train.steps", "training steps");
        train_flags.add(sc, "--seed", "seed", "training seed");
        train_flags.add(sc, "--threads", "threads", "worker threads");
        return sc;
    };
    auto* train_joint = add_train("train-joint", "train the joint (u, w) denoiser");
    auto* train_prior = add_train("train-prior", "train the control prior denoiser");

    SampleArgs sargs;
    FlagOverrides sample_flags;
    auto* sample = app.add_subcommand("sample", "generate controls for test conditionings");
    add_common(sample, common);
    add_sample_flags(sample, sargs, sample_flags);

    auto* evaluate = app.add_subcommand("evaluate", "simulate generated controls and score them");
    add_common(evaluate, common);
    std::string samples_path;
    evaluate->add_option("--samples", samples_path, "sample file from `sample` (otherwise sample from --joint)");
    add_sample_flags(evaluate, sargs, sample_flags);

    auto* pareto = app.add_subcommand("pareto", "sweep the guidance intensity lambda");
    add_common(pareto, common);
    add_sample_flags(pareto, sargs, sample_flags);
    sample_flags.add(pareto, "--lambdas", "pareto.lambdas", "comma-separated ascending lambda values");

    auto* theory = app.add_subcommand("theory-check", "check the prior-reweighting theorem on toy worlds");
    add_common(theory, common);
    FlagOverrides theory_flags;
    theory_flags.add(theory, "--worlds", "theory.worlds", "number of worlds");
    theory_flags.add(theory, "--seed", "seed", "first world seed");
    theory->add_flag_function(
        "--negative-only", [&](std::int64_t) { theory_flags.values.emplace_back("theory.negative_only", "true"); },
        "keep only worlds with F(1) < 0");

    auto* plot = app.add_subcommand("plot", "draw the Pareto frontier and the state MSE scatter as SVG");
    add_common(plot, common);
    std::vector<std::string> pareto_inputs;
    std::string scatter_input;
    plot->add_option("--pareto", pareto_inputs, "label=pareto.csv (repeatable, one curve each)");
    plot->add_option("--scatter", scatter_input, "scatter.csv from evaluate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            auto c = build_config(common, gen_flags);
            const bool test = split == "test";
            if (!gen_n.empty()) set_value(c, test ? "data.n_test" : "data.n_train", gen_n);
            if (!gen_seed.empty()) set_value(c, test ? "data.test_seed" : "data.seed", gen_seed);
            c.validate();
            const auto dir = fs::path(c.output_dir);
            const auto path = gen_output.empty() ? (dir / (split + ".dctf")).string() : gen_output;
            prepare_output(c, "gen-data", {{"split", split}, {"output", path}});
            auto d = datagen::build_dataset(test ? c.n_test : c.n_train, c.setting, test ? c.test_seed : c.data_seed,
                                            c.solver, c.threads);
            datagen::write_dataset(path, d);
            out << "wrote " << path << " (" << d.size() << " trajectories, " << d.rejected << " rejected draws)\n";
            return 0;
        }
        if (train_joint->parsed() || train_prior->parsed()) {
            const auto kind = train_joint->parsed() ? ModelKind::joint : ModelKind::prior;
            auto c = build_config(common, train_flags);
            if (!train_data.empty()) set_value(c, "data.train", train_data);
            torch::set_num_threads(c.threads);
            auto data = load_dataset(c.train_data);
            set_value(c, "setting", to_string(data.setting));
            const auto dir = prepare_output(c, "train-" + to_string(kind), {{"data", c.train_data}});
            const auto ckpt = (dir / (to_string(kind) + ".ckpt")).string();
            const auto log = (dir / (to_string(kind) + "_log.jsonl")).string();
            fs::remove(log);
            train_model(c, kind, data, ckpt, log, [&](const diffusion::LossRecord& r) {
                out << "step " << r.step << " loss " << r.loss << " (" << r.wall_seconds << " s)\n" << std::flush;
            });
            out << "wrote " << ckpt << "\n";
            return 0;
        }
        if (sample->parsed()) {
            auto c = build_config(common, sample_flags);
            torch::set_num_threads(c.threads);
            auto g = generate_from_args(c, sargs);
            const auto dir = prepare_output(c, "sample", g.inputs);
            sampler::ControlRequest meta;
            auto joint = load_model(sargs.joint, ModelKind::joint, c.use_ema);
            meta.joint = &joint.model;
            meta.solver = g.test.solver;
            meta.guide = c.guide;
            meta.reweight = c.reweight;
            meta.cfg = c.sampler;
            write_tensor_file((dir / "samples.dctf").string(), sampler::samples_file(g.sample, meta, g.inputs));
            out << "wrote " << (dir / "samples.dctf").string() << " (" << g.sample.w.size(0) << " samples)\n";
            return 0;
        }
        if (evaluate->parsed()) {
            auto c = build_config(common, sample_flags);
            torch::set_num_threads(c.threads);
            sampler::ControlSample s;
            datagen::Dataset test;
            Json inputs;
            if (!samples_path.empty()) {
                const auto data_path = resolve(sargs.data, c.test_data);
                test = load_dataset(data_path);
                auto f = read_tensor_file(samples_path);
                s = sampler::control_sample_from_file(f);
                const auto setting = f.meta.value("setting", "");
                if (setting != to_string(test.setting))
                    throw MismatchError("samples were generated for setting " + setting + " but the dataset is " +
                                        to_string(test.setting));
                if (datagen::SolverSetup::from_json(f.meta.at("solver")) != test.solver)
                    throw MismatchError("samples were generated with a different solver configuration");
                inputs = {{"samples", samples_path}, {"data", data_path}};
            } else {
                auto g = generate_from_args(c, sargs);
                s = std::move(g.sample);
                test = std::move(g.test);
                inputs = std::move(g.inputs);
            }
            const auto dir = prepare_output(c, "evaluate", inputs);
            auto recs = evaluate_samples(s, test, c.sampler.seed, c.threads);
            eval::write_records_csv((dir / "records.csv").string(), recs);
            auto base = eval::zero_control_baseline(test, s.w.size(0));
            auto sums = eval::summarize({recs, base});
            Json summary{{"generated", summary_json(sums[0])}, {"zero_control", summary_json(sums[1])}};
            try {
                auto rep = eval::correlation_report(recs);
                eval::write_scatter_csv((dir / "scatter.csv").string(), rep);
                summary["pearson_r"] = rep.r;
            } catch (const Error& e) {
                summary["pearson_r_error"] = e.what();
            }
            std::ofstream((dir / "summary.json")) << summary.dump(2) << "\n";
            out << "mean j_actual " << sums[0].mean_j_actual << " (zero control " << sums[1].mean_j_actual
                << "), mean j_energy " << sums[0].mean_j_energy << ", failed " << sums[0].n_failed << "\n";
            return 0;
        }
        if (pareto->parsed()) {
            auto c = build_config(common, sample_flags);
            torch::set_num_threads(c.threads);
            const auto data_path = resolve(sargs.data, c.test_data);
            auto test = load_dataset(data_path);
            auto joint = load_model(sargs.joint, ModelKind::joint, c.use_ema);
            std::optional<diffusion::LoadedCheckpoint> prior;
            if (!sargs.prior.empty()) prior = load_model(sargs.prior, ModelKind::prior, c.use_ema);
            const auto n = sargs.n > 0 ? sargs.n : test.size();
            const auto dir = prepare_output(c, "pareto", {{"joint", sargs.joint}, {"data", data_path}, {"count", n}});
            auto rows = eval::pareto_sweep(c.pareto_lambdas, [&](double lambda) {
                auto plan = generation_plan(c);
                plan.guide.lambda0 = lambda;
                auto s = generate_controls(joint.model, prior ? &prior->model : nullptr, test, n, plan);
                return evaluate_samples(s, test, c.sampler.seed, c.threads);
            });
            eval::write_pareto_csv((dir / "pareto.csv").string(), rows);
            for (const auto& r : rows)
                out << "lambda " << r.lambda << ": j_actual " << r.summary.mean_j_actual << ", j_energy "
                    << r.summary.mean_j_energy << "\n";
            return 0;
        }
        if (theory->parsed()) {
            auto c = build_config(common, theory_flags);
            const auto dir = prepare_output(c, "theory-check", Json::object());
            std::vector<theory::VerdictRow> rows;
            if (c.theory_negative_only) {
                int i = 0;
                for (auto& [seed, w] : theory::worlds_with_negative_f(c.seed, c.theory_worlds))
                    rows.push_back({i++, seed, theory::check_theorem(w, theory::default_gamma_grid())});
            } else {
                for (int i = 0; i < c.theory_worlds; ++i) {
                    const auto seed = c.seed + std::uint64_t(i);
                    rows.push_back({i, seed, theory::check_theorem(theory::random_world(seed), theory::default_gamma_grid())});
                }
            }
            theory::write_verdict_csv((dir / "verdicts.csv").string(), rows);
            int failed = 0;
            for (const auto& r : rows) failed += r.verdict.status == theory::VerdictStatus::fail;
            out << "wrote " << (dir / "verdicts.csv").string() << " (" << rows.size() << " worlds, " << failed
                << " failed)\n";
            return 0;
        }
        if (plot->parsed()) {
            auto c = build_config(common, FlagOverrides{});
            if (pareto_inputs.empty() && scatter_input.empty()) throw ConfigError("plot: empty method list");
            std::vector<std::pair<std::string, std::string>> methods;
            for (const auto& p : pareto_inputs) {
                const auto eq = p.find('=');
                if (eq == std::string::npos) methods.emplace_back(fs::path(p).stem().string(), p);
                else methods.emplace_back(p.substr(0, eq), p.substr(eq + 1));
            }
            const auto dir = prepare_output(c, "plot", {{"pareto", pareto_inputs}, {"scatter", scatter_input}});
            if (!methods.empty()) plot_pareto(methods, (dir / "pareto.svg").string());
            if (!scatter_input.empty()) plot_scatter(scatter_input, (dir / "scatter.svg").string());
            out << "wrote plots to " << dir.string() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace diffctl::cli

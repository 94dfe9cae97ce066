#pragma once

// Experiment configuration: a flat `key = value` text file. Unknown keys are
// rejected. Only the seed and the output directory may come from the
// environment (DIFFCTL_SEED, DIFFCTL_OUTPUT_DIR).

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diffctl/datagen/dataset.hpp"
#include "diffctl/diffusion/schedule.hpp"
#include "diffctl/diffusion/unet.hpp"
#include "diffctl/sampler/spec.hpp"

namespace diffctl::cli {

struct ExperimentConfig {
    SettingKind setting = SettingKind::FO_PC;
    datagen::SolverSetup solver;

    std::string train_data = "train.dctf";
    std::string test_data = "test.dctf";
    std::int64_t n_train = 8000;
    std::int64_t n_test = 50;
    std::uint64_t data_seed = 1;
    std::uint64_t test_seed = 2;

    diffusion::DenoiserSpec joint_spec = desk_spec();
    diffusion::DenoiserSpec prior_spec = desk_spec();
    diffusion::ScheduleKind schedule = diffusion::ScheduleKind::cosine;
    int K = 1000;

    std::int64_t train_steps = 30000;
    std::int64_t batch_size = 16;
    double lr = 2e-4;
    double cond_drop = 0.1;
    bool ema = true;
    double ema_decay = 0.999;
    double grad_clip = 1.0;
    std::int64_t log_every = 100;
    std::int64_t checkpoint_every = 1000;
    int threads = 1;

    sampler::GuidanceSpec guide;
    sampler::ReweightSpec reweight;
    sampler::SamplerConfig sampler;
    std::int64_t sample_batch = 50;
    bool use_ema = true;

    std::vector<double> pareto_lambdas = {0.0, 100.0, 1e4, 1e6};
    int theory_worlds = 20;
    bool theory_negative_only = false; ///< keep only worlds with F(1) < 0

    std::uint64_t seed = 0;
    std::string output_dir = "out";

    /// Desk-scale denoiser: space-only convolutions with time folded into channels.
    static diffusion::DenoiserSpec desk_spec() {
        diffusion::DenoiserSpec s;
        s.family = "unet1d";
        s.init_dim = 32;
        s.dim_mults = {1, 2, 4, 4};
        s.resnet_blocks = 1;
        s.level_attention = false;
        return s;
    }

    void validate() const {
        solver.validate();
        if (n_train < 1 || n_test < 1) throw ConfigError("config: dataset sizes must be >= 1");
        joint_spec.validate();
        prior_spec.validate();
        if (K < 1) throw ConfigError("config: schedule.K must be >= 1");
        if (train_steps < 0 || batch_size < 1 || !(lr > 0)) throw ConfigError("config: bad training options");
        if (!(cond_drop >= 0 && cond_drop <= 1)) throw ConfigError("config: train.cond_drop must lie in [0, 1]");
        if (threads < 1) throw ConfigError("config: threads must be >= 1");
        if (sample_batch < 1) throw ConfigError("config: sampler.batch must be >= 1");
        guide.validate();
        reweight.validate();
        sampler.validate(K);
        if (theory_worlds < 1) throw ConfigError("config: theory.worlds must be >= 1");
        if (output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    T out{};
    is >> out;
    if (is.fail() || !is.eof()) throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
    if (out.empty()) throw ConfigError("config: key '" + key + "' expects a comma-separated list");
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

inline void add_spec_fields(std::map<std::string, Field>& f, const std::string& prefix,
                            diffusion::DenoiserSpec ExperimentConfig::*member) {
    auto spec_field = [&](const std::string& name, auto setter, auto getter) {
        f[prefix + "." + name] = {[member, setter](ExperimentConfig& c, const std::string& v) { setter(c.*member, v); },
                                  [member, getter](const ExperimentConfig& c) { return getter(c.*member); }};
    };
    using S = diffusion::DenoiserSpec;
    spec_field("family", [](S& s, const std::string& v) { s.family = v; }, [](const S& s) { return s.family; });
    spec_field("init_dim", [](S& s, const std::string& v) { s.init_dim = parse_number<int>("init_dim", v); },
               [](const S& s) { return std::to_string(s.init_dim); });
    spec_field("dim_mults", [](S& s, const std::string& v) { s.dim_mults = parse_list<int>("dim_mults", v); },
               [](const S& s) { return join(s.dim_mults); });
    spec_field("resnet_blocks",
               [](S& s, const std::string& v) { s.resnet_blocks = parse_number<int>("resnet_blocks", v); },
               [](const S& s) { return std::to_string(s.resnet_blocks); });
    spec_field("groups", [](S& s, const std::string& v) { s.groups = parse_number<int>("groups", v); },
               [](const S& s) { return std::to_string(s.groups); });
    spec_field("attn_heads", [](S& s, const std::string& v) { s.attn_heads = parse_number<int>("attn_heads", v); },
               [](const S& s) { return std::to_string(s.attn_heads); });
    spec_field("attn_dim_head",
               [](S& s, const std::string& v) { s.attn_dim_head = parse_number<int>("attn_dim_head", v); },
               [](const S& s) { return std::to_string(s.attn_dim_head); });
    spec_field("kernel_size", [](S& s, const std::string& v) { s.kernel_size = parse_number<int>("kernel_size", v); },
               [](const S& s) { return std::to_string(s.kernel_size); });
    spec_field("level_attention",
               [](S& s, const std::string& v) { s.level_attention = parse_bool("level_attention", v); },
               [](const S& s) { return std::string(s.level_attention ? "true" : "false"); });
    spec_field("padding_mode", [](S& s, const std::string& v) { s.padding_mode = v; },
               [](const S& s) { return s.padding_mode; });
}

inline const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        using C = ExperimentConfig;
        auto str = [&](const std::string& k, std::string C::*m) {
            f[k] = {[m](C& c, const std::string& v) { c.*m = v; }, [m](const C& c) { return c.*m; }};
        };
        auto i64 = [&](const std::string& k, std::int64_t C::*m) {
            f[k] = {[m, k](C& c, const std::string& v) { c.*m = parse_number<std::int64_t>(k, v); },
                    [m](const C& c) { return std::to_string(c.*m); }};
        };
        auto u64 = [&](const std::string& k, std::uint64_t C::*m) {
            f[k] = {[m, k](C& c, const std::string& v) { c.*m = parse_number<std::uint64_t>(k, v); },
                    [m](const C& c) { return std::to_string(c.*m); }};
        };
        auto i32 = [&](const std::string& k, int C::*m) {
            f[k] = {[m, k](C& c, const std::string& v) { c.*m = parse_number<int>(k, v); },
                    [m](const C& c) { return std::to_string(c.*m); }};
        };
        auto dbl = [&](const std::string& k, double C::*m) {
            f[k] = {[m, k](C& c, const std::string& v) { c.*m = parse_number<double>(k, v); },
                    [m](const C& c) { return num(c.*m); }};
        };
        auto boolean = [&](const std::string& k, bool C::*m) {
            f[k] = {[m, k](C& c, const std::string& v) { c.*m = parse_bool(k, v); },
                    [m](const C& c) { return std::string(c.*m ? "true" : "false"); }};
        };
        auto custom = [&](const std::string& k, std::function<void(C&, const std::string&)> s,
                          std::function<std::string(const C&)> g) { f[k] = {std::move(s), std::move(g)}; };

        custom("setting", [](C& c, const std::string& v) { c.setting = parse_setting_kind(v); },
               [](const C& c) { return to_string(c.setting); });
        custom("solver.n_x", [](C& c, const std::string& v) { c.solver.grid.n_x = parse_number<int>("solver.n_x", v); },
               [](const C& c) { return std::to_string(c.solver.grid.n_x); });
        custom("solver.horizon",
               [](C& c, const std::string& v) { c.solver.time.horizon = parse_number<double>("solver.horizon", v); },
               [](const C& c) { return num(c.solver.time.horizon); });
        custom("solver.n_substeps",
               [](C& c, const std::string& v) { c.solver.time.n_substeps = parse_number<int>("solver.n_substeps", v); },
               [](const C& c) { return std::to_string(c.solver.time.n_substeps); });
        custom("solver.n_windows",
               [](C& c, const std::string& v) { c.solver.time.n_windows = parse_number<int>("solver.n_windows", v); },
               [](const C& c) { return std::to_string(c.solver.time.n_windows); });
        custom("solver.nu", [](C& c, const std::string& v) { c.solver.physics.nu = parse_number<double>("solver.nu", v); },
               [](const C& c) { return num(c.solver.physics.nu); });
        custom("solver.scheme", [](C& c, const std::string& v) { c.solver.physics.scheme = burgers::parse_scheme(v); },
               [](const C& c) { return burgers::scheme_id(c.solver.physics.scheme); });

        str("data.train", &C::train_data);
        str("data.test", &C::test_data);
        i64("data.n_train", &C::n_train);
        i64("data.n_test", &C::n_test);
        u64("data.seed", &C::data_seed);
        u64("data.test_seed", &C::test_seed);

        add_spec_fields(f, "joint", &C::joint_spec);
        add_spec_fields(f, "prior", &C::prior_spec);
        custom("schedule.kind", [](C& c, const std::string& v) { c.schedule = diffusion::parse_schedule_kind(v); },
               [](const C& c) { return diffusion::to_string(c.schedule); });
        i32("schedule.K", &C::K);

        i64("train.steps", &C::train_steps);
        i64("train.batch", &C::batch_size);
        dbl("train.lr", &C::lr);
        dbl("train.cond_drop", &C::cond_drop);
        boolean("train.ema", &C::ema);
        dbl("train.ema_decay", &C::ema_decay);
        dbl("train.grad_clip", &C::grad_clip);
        i64("train.log_every", &C::log_every);
        i64("train.checkpoint_every", &C::checkpoint_every);
        i32("threads", &C::threads);

        custom("guide.mode", [](C& c, const std::string& v) { c.guide.mode = sampler::parse_guidance_mode(v); },
               [](const C& c) { return sampler::to_string(c.guide.mode); });
        custom("guide.lambda0", [](C& c, const std::string& v) { c.guide.lambda0 = parse_number<double>("guide.lambda0", v); },
               [](const C& c) { return num(c.guide.lambda0); });
        custom("guide.schedule", [](C& c, const std::string& v) { c.guide.schedule = sampler::parse_lambda_schedule(v); },
               [](const C& c) { return sampler::to_string(c.guide.schedule); });
        custom("guide.energy", [](C& c, const std::string& v) { c.guide.energy = parse_bool("guide.energy", v); },
               [](const C& c) { return std::string(c.guide.energy ? "true" : "false"); });
        custom("guide.actual", [](C& c, const std::string& v) { c.guide.actual = parse_bool("guide.actual", v); },
               [](const C& c) { return std::string(c.guide.actual ? "true" : "false"); });
        custom("guide.max_shift",
               [](C& c, const std::string& v) { c.guide.max_shift = parse_number<double>("guide.max_shift", v); },
               [](const C& c) { return num(c.guide.max_shift); });
        custom("reweight.gamma",
               [](C& c, const std::string& v) { c.reweight.gamma = parse_number<double>("reweight.gamma", v); },
               [](const C& c) { return num(c.reweight.gamma); });
        custom("reweight.schedule",
               [](C& c, const std::string& v) { c.reweight.schedule = sampler::parse_gamma_schedule(v); },
               [](const C& c) { return sampler::to_string(c.reweight.schedule); });
        custom("reweight.combine", [](C& c, const std::string& v) { c.reweight.combine = sampler::parse_combine(v); },
               [](const C& c) { return sampler::to_string(c.reweight.combine); });
        custom("sampler.eta_ddim",
               [](C& c, const std::string& v) { c.sampler.eta_ddim = parse_number<double>("sampler.eta_ddim", v); },
               [](const C& c) { return num(c.sampler.eta_ddim); });
        custom("sampler.n_ddim_steps",
               [](C& c, const std::string& v) { c.sampler.n_ddim_steps = parse_number<int>("sampler.n_ddim_steps", v); },
               [](const C& c) { return std::to_string(c.sampler.n_ddim_steps); });
        custom("sampler.seed",
               [](C& c, const std::string& v) { c.sampler.seed = parse_number<std::uint64_t>("sampler.seed", v); },
               [](const C& c) { return std::to_string(c.sampler.seed); });
        custom("sampler.clip_denoised",
               [](C& c, const std::string& v) { c.sampler.clip_denoised = parse_number<double>("sampler.clip_denoised", v); },
               [](const C& c) { return num(c.sampler.clip_denoised); });
        i64("sampler.batch", &C::sample_batch);
        boolean("sampler.use_ema", &C::use_ema);

        custom("pareto.lambdas", [](C& c, const std::string& v) { c.pareto_lambdas = parse_list<double>("pareto.lambdas", v); },
               [](const C& c) { return join(c.pareto_lambdas); });
        i32("theory.worlds", &C::theory_worlds);
        boolean("theory.negative_only", &C::theory_negative_only);
        u64("seed", &C::seed);
        str("output_dir", &C::output_dir);
        return f;
    }();
    return table;
}

} // namespace detail

inline std::vector<std::string> config_keys() {
    std::vector<std::string> k;
    for (const auto& [name, _] : detail::fields()) k.push_back(name);
    return k;
}

/// Sets one key; unknown keys are an error.
inline void set_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
    const auto& f = detail::fields();
    auto it = f.find(key);
    if (it == f.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(c, value);
}

inline std::string get_value(const ExperimentConfig& c, const std::string& key) {
    const auto& f = detail::fields();
    auto it = f.find(key);
    if (it == f.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second.get(c);
}

/// Parses `key = value` lines; '#' starts a comment.
inline void apply_text(ExperimentConfig& c, const std::string& text, const std::string& origin = "config") {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        try {
            set_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    ExperimentConfig c;
    apply_text(c, ss.str(), path);
    return c;
}

/// DIFFCTL_SEED and DIFFCTL_OUTPUT_DIR.
inline void apply_environment(ExperimentConfig& c) {
    if (const char* s = std::getenv("DIFFCTL_SEED"); s && *s) set_value(c, "seed", s);
    if (const char* s = std::getenv("DIFFCTL_OUTPUT_DIR"); s && *s) set_value(c, "output_dir", s);
}

/// Every key, sorted, one per line; parses back to an identical config.
inline std::string serialize(const ExperimentConfig& c) {
    std::string out;
    for (const auto& [name, field] : detail::fields()) out += name + " = " + field.get(c) + "\n";
    return out;
}

} // namespace diffctl::cli

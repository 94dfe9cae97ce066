#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "diffctl/cli/commands.hpp"

using namespace diffctl;
using namespace diffctl::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("diffctl_cli_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string str(const std::string& leaf = "") const { return leaf.empty() ? path_.string() : (path_ / leaf).string(); }

private:
    fs::path path_;
};

int invoke(std::vector<std::string> args, std::string* output = nullptr) {
    args.insert(args.begin(), "diffctl");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream os;
    const int rc = run(int(argv.size()), argv.data(), os);
    if (output) *output = os.str();
    return rc;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

} // namespace

TEST(Config, SerializedConfigParsesBackIdentically) {
    ExperimentConfig c;
    set_value(c, "setting", "PO-FC");
    set_value(c, "guide.lambda0", "250");
    set_value(c, "pareto.lambdas", "0,1,10");
    set_value(c, "sampler.clip_denoised", "4");
    const auto text = serialize(c);
    ExperimentConfig back;
    apply_text(back, text);
    EXPECT_EQ(serialize(back), text);
    EXPECT_EQ(get_value(back, "setting"), "PO-FC");
    EXPECT_EQ(back.pareto_lambdas, (std::vector<double>{0, 1, 10}));
}

TEST(Config, UnknownKeysAndBadLinesAreRejected) {
    ExperimentConfig c;
    EXPECT_THROW(set_value(c, "guide.lamda0", "1"), ConfigError);
    EXPECT_THROW(apply_text(c, "train.steps = 10\nno equals sign here\n"), ConfigError);
    try {
        apply_text(c, "# comment\n\ntrain.stepz = 3\n", "exp.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("exp.cfg:3"), std::string::npos);
    }
}

TEST(Config, EnvironmentOverridesSeedAndOutputOnly) {
    ::setenv("DIFFCTL_SEED", "42", 1);
    ::setenv("DIFFCTL_OUTPUT_DIR", "/tmp/somewhere", 1);
    ExperimentConfig c;
    apply_environment(c);
    ::unsetenv("DIFFCTL_SEED");
    ::unsetenv("DIFFCTL_OUTPUT_DIR");
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.output_dir, "/tmp/somewhere");
}

TEST(Commands, GenDataIsDeterministicAndRecordsConfig) {
    TempDir a("gen_a"), b("gen_b");
    const std::vector<std::string> tail{"--split", "test", "--setting", "PO-PC", "--n", "3", "--seed", "9"};
    auto args_a = tail, args_b = tail;
    args_a.insert(args_a.begin(), {"gen-data", "-o", a.str()});
    args_b.insert(args_b.begin(), {"gen-data", "-o", b.str(), "--threads", "2"});
    ASSERT_EQ(invoke(args_a), 0);
    ASSERT_EQ(invoke(args_b), 0);
    EXPECT_EQ(slurp(a.str("test.dctf")), slurp(b.str("test.dctf")));
    auto d = datagen::read_dataset(a.str("test.dctf"));
    EXPECT_EQ(d.size(), 3);
    EXPECT_EQ(d.setting, SettingKind::PO_PC);
    auto cfg = load_config_file(a.str("config.txt"));
    EXPECT_EQ(cfg.test_seed, 9u);
    EXPECT_TRUE(fs::exists(a.str("provenance.json")));
}

TEST(Commands, ConfigFileAndSetOverridesApplyInOrder) {
    TempDir t("cfg");
    write(t.str("exp.cfg"), "setting = FO-FC\ndata.n_test = 5\n");
    ASSERT_EQ(invoke({"gen-data", "-c", t.str("exp.cfg"), "--set", "data.n_test=2", "--split", "test", "-o", t.str()}), 0);
    auto d = datagen::read_dataset(t.str("test.dctf"));
    EXPECT_EQ(d.size(), 2);
    EXPECT_EQ(d.setting, SettingKind::FO_FC);
    EXPECT_EQ(invoke({"gen-data", "--set", "data.bogus=1", "-o", t.str()}), 1);
}

TEST(Commands, TheoryCheckWritesOneRowPerWorld) {
    TempDir t("theory");
    std::string out;
    ASSERT_EQ(invoke({"theory-check", "--worlds", "20", "--negative-only", "-o", t.str()}, &out), 0);
    std::ifstream f(t.str("verdicts.csv"));
    std::string line;
    int rows = -1, passes = 0;
    while (std::getline(f, line)) {
        ++rows;
        passes += line.find(",pass,") != std::string::npos;
    }
    EXPECT_EQ(rows, 20);
    EXPECT_GE(passes, 19);
    EXPECT_NE(out.find("20 worlds"), std::string::npos);
}

TEST(Commands, TheoryCheckOverRandomWorldsExitsCleanly) {
    TempDir t("theory_any");
    ASSERT_EQ(invoke({"theory-check", "--worlds", "20", "--seed", "7", "-o", t.str()}), 0);
    std::ifstream f(t.str("verdicts.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(f, line)) ++rows;
    EXPECT_EQ(rows, 20);
}

TEST(Commands, EvaluateRejectsModelFromAnotherSetting) {
    TempDir t("mismatch");
    ASSERT_EQ(invoke({"gen-data", "--split", "test", "--setting", "FO-PC", "--n", "2", "-o", t.str()}), 0);
    diffusion::DenoiserSpec spec;
    spec.init_dim = 8;
    spec.dim_mults = {1, 2};
    spec.resnet_blocks = 1;
    spec.groups = 4;
    spec.level_attention = false;
    spec.family = "unet1d";
    auto m = diffusion::Denoiser::create(diffusion::ModelKind::joint, SettingKind::PO_FC, diffusion::CanvasLayout{},
                                         spec, diffusion::ScheduleKind::cosine, 10, 0);
    diffusion::save_checkpoint(t.str("pofc.ckpt"), m, diffusion::TrainingState{});
    testing::internal::CaptureStderr();
    const int rc = invoke({"evaluate", "--joint", t.str("pofc.ckpt"), "--data", t.str("test.dctf"), "-o",
                           t.str("eval")});
    const auto err = testing::internal::GetCapturedStderr();
    EXPECT_EQ(rc, 1);
    EXPECT_NE(err.find("trained for setting PO-FC but the dataset is FO-PC"), std::string::npos) << err;
    EXPECT_FALSE(fs::exists(t.str("eval/records.csv")));
}

TEST(Commands, PlotWithoutInputsFailsWithoutWritingFiles) {
    TempDir t("plot_empty");
    testing::internal::CaptureStderr();
    EXPECT_EQ(invoke({"plot", "-o", t.str("out")}), 1);
    EXPECT_NE(testing::internal::GetCapturedStderr().find("plot: empty method list"), std::string::npos);
    EXPECT_FALSE(fs::exists(t.str("out")));
}

TEST(Plot, SinglePointRendersOneMarker) {
    TempDir t("plot_one");
    write(t.str("p.csv"), std::string(eval::kParetoCsvHeader) + "\n0,0.5,2,4,0\n");
    ASSERT_EQ(invoke({"plot", "--pareto", "only=" + t.str("p.csv"), "-o", t.str()}), 0);
    const auto svg = slurp(t.str("pareto.svg"));
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::ptrdiff_t circles = 0;
    for (std::size_t p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
    EXPECT_EQ(circles, 1);
    EXPECT_EQ(svg.find("<polyline"), std::string::npos);
    EXPECT_NE(svg.find(">only<"), std::string::npos);
}

TEST(Plot, EnergySweepDrawsDecreasingFrontier) {
    TempDir t("plot_sweep");
    // lambda, mean_j_actual, mean_j_energy, n_ok, n_failed
    write(t.str("sweep.csv"), std::string(eval::kParetoCsvHeader) +
                                  "\n0,0.00037,1320.98,50,0\n100,0.00147,1237.07,50,0\n"
                                  "10000,0.02202,584.32,50,0\n1000000,0.06444,38.25,50,0\n");
    plot_pareto({{"sweep", t.str("sweep.csv")}}, t.str("f.svg"));
    const auto svg = slurp(t.str("f.svg"));
    std::regex circle(R"re(<circle cx="([0-9.e+-]+)" cy="([0-9.e+-]+)")re");
    std::vector<std::pair<double, double>> pts;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), circle); it != std::sregex_iterator(); ++it)
        pts.emplace_back(std::stod((*it)[1]), std::stod((*it)[2]));
    ASSERT_EQ(pts.size(), 4u);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        EXPECT_GT(pts[i].first, pts[i - 1].first);
        // SVG y grows downwards, so a falling j_actual means a growing cy.
        EXPECT_GT(pts[i].second, pts[i - 1].second);
    }
}

TEST(Plot, CsvReaderSkipsCommentsAndRejectsRaggedRows) {
    TempDir t("csv");
    write(t.str("ok.csv"), "# pearson_r=0.9\na,b\n1,2\n3,4\n");
    auto tab = read_csv(t.str("ok.csv"));
    EXPECT_EQ(tab.numbers("b"), (std::vector<double>{2, 4}));
    write(t.str("bad.csv"), "a,b\n1\n");
    EXPECT_THROW(read_csv(t.str("bad.csv")), FormatError);
}

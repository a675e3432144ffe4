#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mqb/harness.hpp"

using namespace mqb;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(
[env]
d = 3
horizon = 20
instances = 40
num_actions = 6
action_radius = 0.5
noise_sigma = 1.0
prior_mean = 1.0, 0.5, -0.5
prior_cov_diag = 1.0
prior_cov_offdiag = 0.3

[algorithms.KTS]
type = KTS

[algorithms.UKTS]
type = UKTS

[algorithms.Th]
type = th_mts_tau
c_w = 10

[algorithms.All]
type = all_mts

[run]
runs = 2
master_seed = 11
normalization = by_kts
)";

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_experiment_config(in);
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mqb_test_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig single_arm() {
    ExperimentConfig cfg;
    cfg.env.d = 2;
    cfg.env.horizon = 1;
    cfg.env.instances = 1;
    cfg.env.num_actions = 1;
    cfg.env.action_radius = 1.0;
    cfg.env.noise_sigma = 1.0;
    cfg.env.prior_mean = Vector::Ones(2);
    cfg.env.prior_cov = PsdMatrix::identity(2);
    fill_tight_bounds(cfg.env);
    cfg.algorithms = {{"KTS", BaselineKind::KTS}};
    return cfg;
}

}  // namespace

TEST(Config, ParsesAllSections) {
    const auto cfg = parse(kConfig);
    EXPECT_EQ(cfg.env.d, 3);
    EXPECT_EQ(cfg.env.num_actions, std::optional<int>(6));
    EXPECT_DOUBLE_EQ(cfg.env.prior_mean(2), -0.5);
    EXPECT_DOUBLE_EQ(cfg.env.prior_cov(0, 1), 0.3);
    ASSERT_EQ(cfg.algorithms.size(), 4u);
    EXPECT_EQ(cfg.algorithms[2].name, "Th");
    EXPECT_EQ(std::get<MetaConfig>(cfg.algorithms[3].spec).c_w, 1.0);
    EXPECT_EQ(cfg.runs, 2);
    EXPECT_EQ(cfg.master_seed, 11u);
}

TEST(Config, ReferenceFileLoads) {
    const auto cfg = load_experiment_config(fs::path(MQB_SOURCE_DIR) / "configs" / "reference.ini");
    EXPECT_EQ(cfg.env.instances, 2000);
    EXPECT_EQ(cfg.algorithms.size(), 6u);
    EXPECT_NEAR(cfg.env.lambda_max_prior, 4.2, 1e-12);
}

TEST(Config, ErrorsCarryKeyPath) {
    std::string bad = kConfig;
    EXPECT_EQ(error_of(bad + "\n[algorithms.X]\ntype = th_mts_tau\nc_ww = 1\n"), "algorithms.X.c_ww: unknown key");
    EXPECT_EQ(error_of(bad + "\n[algorithms.Y]\ntype = magic\n").rfind("algorithms.Y.type", 0), 0u);
    EXPECT_EQ(error_of(bad + "\n[algorithms.Z]\nc_w = 1\n"), "algorithms.Z.type: missing");
    EXPECT_EQ(error_of(bad + "\n[extra]\nx = 1\n"), "extra: unknown section");

    std::string s = kConfig;
    s.replace(s.find("horizon = 20"), 12, "horizon = 2x");
    EXPECT_EQ(error_of(s).rfind("env.horizon", 0), 0u);
    s = kConfig;
    s.replace(s.find("runs = 2"), 8, "runs = 0");
    EXPECT_EQ(error_of(s).rfind("run.runs", 0), 0u);
    s = kConfig;
    s.replace(s.find("[env]"), 5, "[env]\nshape = round");
    EXPECT_EQ(error_of(s), "env.shape: unknown key");
    s = kConfig;
    s.replace(s.find("[algorithms.KTS]\ntype = KTS"), 27, "");
    EXPECT_EQ(error_of(s).rfind("run.normalization", 0), 0u);
    EXPECT_FALSE(error_of(bad + "\n[algorithms.KTS]\ntype = KTS\n").empty());
}

TEST(Config, MissingFileIsIoError) {
    EXPECT_THROW(load_experiment_config("/nonexistent/x.ini"), IoError);
}

TEST(Simulate, SingleArmHasZeroRegret) {
    const auto tr = simulate(single_arm(), 1);
    EXPECT_EQ(tr.instant[0], 0.0);
}

TEST(Simulate, DuplicatedEntriesProduceIdenticalTraces) {
    auto cfg = parse(kConfig);
    cfg.algorithms.push_back({"KTS-copy", BaselineKind::KTS});
    cfg.algorithms.push_back({"Th-copy", std::get<MetaConfig>(cfg.algorithms[2].spec)});
    const auto tr = simulate(cfg, 1);
    for (int r = 0; r < tr.runs; ++r) {
        EXPECT_EQ(tr.cumulative(r, 0), tr.cumulative(r, 4));
        EXPECT_EQ(tr.cumulative(r, 2), tr.cumulative(r, 5));
    }
    EXPECT_NE(tr.cumulative(0, 0), tr.cumulative(0, 1));
}

TEST(Simulate, ReplacingOneAlgorithmLeavesOthersUnchanged) {
    auto cfg = parse(kConfig);
    const auto a = simulate(cfg, 1);
    cfg.algorithms[1] = {"KMTS", BaselineKind::KMTS};
    const auto b = simulate(cfg, 1);
    for (int r = 0; r < a.runs; ++r)
        for (int alg : {0, 2, 3}) EXPECT_EQ(a.cumulative(r, alg), b.cumulative(r, alg));
}

TEST(Simulate, MatchesStandaloneMetaRun) {
    const auto cfg = parse(kConfig);
    const auto tr = simulate(cfg, 1);
    const auto& th = cfg.algorithms[2];
    const auto solo = mqb_run(cfg.env, std::get<MetaConfig>(th.spec), cfg.master_seed, 1, th.salt());
    for (int n = 0; n < cfg.env.instances; ++n) {
        EXPECT_EQ(tr.instant[tr.at(1, 2, n)], solo.instant_regret[static_cast<std::size_t>(n)]);
        EXPECT_EQ(tr.diagnostics[tr.at(1, 2, n)].tau_used, solo.diagnostics[static_cast<std::size_t>(n)].tau_used);
    }
}

TEST(Simulate, ThreadCountDoesNotChangeResults) {
    auto cfg = parse(kConfig);
    cfg.runs = 3;
    const auto a = simulate(cfg, 1);
    const auto b = simulate(cfg, 3);
    EXPECT_EQ(a.instant, b.instant);
}

TEST(Simulate, CumulativeSeriesAreNonDecreasing) {
    const auto tr = simulate(parse(kConfig), 1);
    for (int r = 0; r < tr.runs; ++r)
        for (int a = 0; a < 4; ++a) {
            const auto c = tr.cumulative(r, a);
            for (std::size_t i = 1; i < c.size(); ++i) EXPECT_GE(c[i], c[i - 1]);
        }
}

TEST(RelativeRegret, BasicProperties) {
    const std::vector<std::vector<double>> kts{{1, 3, 6}, {2, 2, 4}};
    const auto zero = relative_regret(kts, kts);
    for (double v : zero) EXPECT_EQ(v, 0.0);
    const std::vector<std::vector<double>> oracle{{0, 0, 0}, {0, 0, 0}};
    const auto neg = relative_regret(oracle, kts);
    EXPECT_EQ(neg, (std::vector<double>{-1.5, -2.5, -5.0}));
    EXPECT_THROW(relative_regret({{1, 2}}, kts), InvalidInput);
    EXPECT_THROW(relative_regret({{1, 2}, {1, 2}}, kts), InvalidInput);
}

TEST(NormalizeByKts, PeakIsOneAndScaleInvariant) {
    std::vector<RegretSummary> s{{"KTS", {1, 4, 2}, {0, 1, 0}}, {"UKTS", {2, 8, 16}, {1, 1, 1}}};
    const auto n = normalize_by_kts(s);
    EXPECT_EQ(*std::max_element(n[0].mean.begin(), n[0].mean.end()), 1.0);
    EXPECT_EQ(n[1].mean, (std::vector<double>{0.5, 2, 4}));
    auto scaled = s;
    for (auto& x : scaled)
        for (auto& v : x.mean) v *= 7;
    const auto n7 = normalize_by_kts(scaled);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(n7[1].mean[i], n[1].mean[i]);
    std::vector<RegretSummary> zeros{{"KTS", {0, 0}, {0, 0}}};
    EXPECT_EQ(normalize_by_kts(zeros)[0].mean, (std::vector<double>{0, 0}));
    EXPECT_THROW(normalize_by_kts({{"UKTS", {1}, {0}}}), ConfigError);
}

TEST(RunExperiment, WritesSchemasAndIsByteDeterministic) {
    auto cfg = parse(kConfig);
    const fs::path first = scratch("a");
    cfg.output_dir = first;
    run_experiment(cfg, 1);
    cfg.output_dir = scratch("b");
    run_experiment(cfg, 2);
    for (const char* f : {"regret.csv", "meta.csv", "normalized.csv"})
        EXPECT_EQ(slurp(first / f), slurp(cfg.output_dir / f)) << f;

    std::istringstream regret(slurp(cfg.output_dir / "regret.csv"));
    std::string line;
    std::getline(regret, line);
    EXPECT_EQ(line, "run,algorithm,instance,instant_regret,cum_regret");
    std::getline(regret, line);
    EXPECT_EQ(line.rfind("0,KTS,1,", 0), 0u);
    std::istringstream meta(slurp(cfg.output_dir / "meta.csv"));
    std::getline(meta, line);
    EXPECT_EQ(line, "run,algorithm,instance,mean_err_l2,cov_err_op,tau_used,never_identified");
    std::getline(meta, line);
    EXPECT_EQ(line.rfind("0,Th,1,nan,nan,", 0), 0u);
    std::istringstream norm(slurp(cfg.output_dir / "normalized.csv"));
    std::getline(norm, line);
    EXPECT_EQ(line, "algorithm,instance,mean_norm_cum_regret,std_over_runs");

    double peak = 0.0;
    while (std::getline(norm, line)) {
        if (line.rfind("KTS,", 0) != 0) continue;
        std::istringstream row(line);
        std::string name, instance, value;
        std::getline(row, name, ',');
        std::getline(row, instance, ',');
        std::getline(row, value, ',');
        peak = std::max(peak, std::stod(value));
    }
    EXPECT_EQ(peak, 1.0);
}

TEST(RunExperiment, UnwritableDirectoryIsIoError) {
    auto cfg = single_arm();
    const fs::path blocker = scratch("blocker");
    std::ofstream(blocker) << "x";
    cfg.output_dir = blocker / "sub";
    EXPECT_THROW(run_experiment(cfg, 1), IoError);
}

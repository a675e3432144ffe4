// Command-line entry point: simulate, verify, constants, export-golden.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mqb/harness.hpp"
#include "mqb/verification.hpp"

namespace {

int cmd_simulate(const std::string& config, const std::string& out, std::optional<int> runs,
                 std::optional<std::uint64_t> seed, unsigned threads) {
    mqb::ExperimentConfig cfg = mqb::load_experiment_config(config);
    if (!out.empty()) cfg.output_dir = out;
    if (runs) cfg.runs = *runs;
    if (seed) cfg.master_seed = *seed;
    const auto tr = mqb::run_experiment(cfg, threads);
    std::printf("wrote %d run(s) x %zu algorithm(s) x %d instance(s) to %s\n", tr.runs, tr.algorithms.size(),
                tr.instances, cfg.output_dir.string().c_str());
    for (const auto& s : mqb::summarize(tr))
        std::printf("  %-16s final mean cumulative regret %.6g\n", s.algorithm.c_str(), s.mean.back());
    return 0;
}

int cmd_verify(const std::string& suite, const std::string& csv, bool quick, std::uint64_t seed) {
    const auto sizes = quick ? mqb::SuiteSizes::quick() : mqb::SuiteSizes{};
    const auto rows = mqb::run_suite(suite, sizes, seed);
    mqb::print_checks(rows, std::cout);
    if (!csv.empty()) mqb::write_checks_csv(rows, csv);
    for (const auto& r : rows)
        if (!r.pass) return 1;
    return 0;
}

int cmd_constants(const std::string& config) {
    const mqb::ExperimentConfig cfg = mqb::load_experiment_config(config);
    const auto& env = cfg.env;
    const mqb::BoundParams p = mqb::bound_constants(mqb::bound_params_for(env));
    const double tau_raw = mqb::tau_theory_raw(env.d, env.action_radius, env.lambda_bar_action, env.instances,
                                               env.horizon);
    std::printf("d=%d T=%d N=%d a=%g sigma=%g\n", env.d, env.horizon, env.instances, env.action_radius,
                env.noise_sigma);
    std::printf("lambda_bar_action=%.12g lambda_min_prior=%.12g lambda_max_prior=%.12g m_bound=%.12g\n",
                env.lambda_bar_action, env.lambda_min_prior, env.lambda_max_prior, env.m_bound);
    std::printf("tau_theory_raw=%.12g tau_theory=%.0f delta=%.12g\n", tau_raw, p.tau, p.delta);
    std::printf("f_m=%.12g f_s=%.12g\n", p.f_m, p.f_s);
    std::printf("c_s=%.12g c_xi=%.12g c_1=%.12g c_bad=%.12g\n", p.c_s, p.c_xi, p.c_1, p.c_bad);
    std::printf("M=%.12g k1=%.12g k2=%.12g N0=%.12g c_w=%.12g\n", p.M, p.k1, p.k2, p.N0, p.c_w);
    return 0;
}

/// Small deterministic experiment in the reference geometry, for plot fixtures.
int cmd_export_golden(const std::string& out) {
    mqb::ExperimentConfig cfg;
    cfg.env = mqb::reference_experiment(200);
    cfg.runs = 2;
    cfg.master_seed = 20240611;
    cfg.output_dir = out;
    cfg.algorithms = {{"KTS", mqb::BaselineKind::KTS},
                      {"KMTS", mqb::BaselineKind::KMTS},
                      {"UKTS", mqb::BaselineKind::UKTS},
                      {"Th-MTS_tau", mqb::MetaConfig::defaults(mqb::MetaVariant::th_mts_tau)},
                      {"All-MTS_tau", mqb::MetaConfig::defaults(mqb::MetaVariant::all_mts_tau)},
                      {"All-MTS", mqb::MetaConfig::defaults(mqb::MetaVariant::all_mts)}};
    mqb::run_experiment(cfg, 1);
    std::printf("wrote golden CSVs to %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-learned Gaussian priors for linear Thompson Sampling"};
    app.require_subcommand(1);

    std::string config, out, suite = "all", csv;
    std::optional<int> runs;
    std::optional<std::uint64_t> seed;
    std::uint64_t verify_seed = 1;
    unsigned threads = 0;
    bool quick = false;

    auto* sim = app.add_subcommand("simulate", "run an experiment and write regret.csv, meta.csv, normalized.csv");
    sim->add_option("--config", config, "experiment config (INI)")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", out, "output directory (overrides run.output_dir)");
    sim->add_option("--runs", runs, "number of runs (overrides run.runs)")->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed, "master seed (overrides run.master_seed)");
    sim->add_option("--threads", threads, "worker threads, 0 = hardware concurrency");

    auto* ver = app.add_subcommand("verify", "run numerical property suites");
    ver->add_option("--suite", suite, "suite name")
        ->check(CLI::IsMember({"posterior", "alignment", "jacobian", "estimators", "events", "constants", "all"}));
    ver->add_option("--csv", csv, "also write check_name,statistic,threshold,pass to this file");
    ver->add_flag("--quick", quick, "smaller case counts");
    ver->add_option("--seed", verify_seed, "seed of the random cases");

    auto* con = app.add_subcommand("constants", "print bound constants for a config's environment");
    con->add_option("--config", config, "experiment config (INI)")->required()->check(CLI::ExistingFile);

    auto* gold = app.add_subcommand("export-golden", "write a small deterministic CSV set");
    gold->add_option("--out", out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return cmd_simulate(config, out, runs, seed, threads);
        if (*ver) return cmd_verify(suite, csv, quick, verify_seed);
        if (*con) return cmd_constants(config);
        if (*gold) return cmd_export_golden(out);
    } catch (const mqb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const mqb::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

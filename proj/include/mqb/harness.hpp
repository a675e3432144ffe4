#pragma once

// Experiment orchestration: config parsing, paired runs of all algorithms, regret
// aggregation, KTS normalization and CSV output.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "bandit_env.hpp"
#include "errors.hpp"
#include "meta_prior.hpp"
#include "policies.hpp"
#include "rng.hpp"

namespace mqb {

enum class Normalization { none, by_kts };

struct AlgorithmEntry {
    std::string name;
    std::variant<BaselineKind, MetaConfig> spec;

    bool is_meta() const { return std::holds_alternative<MetaConfig>(spec); }

    /// Canonical description of the configuration (the name is not part of it).
    std::string canonical() const {
        if (!is_meta()) return to_string(std::get<BaselineKind>(spec));
        const auto& m = std::get<MetaConfig>(spec);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s|c_w=%.17g|tau=%s|n0=%s|threshold=%.17g", to_string(m.variant).c_str(),
                      m.c_w, m.tau_mode == TauMode::theory ? "theory" : "empirical",
                      m.n0_mode == N0Mode::theory ? "theory" : "d_cubed", m.threshold);
        return buf;
    }

    /// Salt of the algorithm's own random substreams. Entries with equal configuration
    /// share it, so duplicated entries produce identical traces.
    std::uint64_t salt() const { return label_key(canonical()); }
};

struct ExperimentConfig {
    EnvConfig env;
    std::vector<AlgorithmEntry> algorithms;
    int runs = 1;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir = "out";
    Normalization normalization = Normalization::by_kts;

    void validate() const {
        env.validate();
        if (runs < 1) throw ConfigError("run.runs: must be at least 1");
        if (algorithms.empty()) throw ConfigError("algorithms: at least one [algorithms.<name>] section is required");
        std::set<std::string> seen;
        for (const auto& a : algorithms) {
            if (a.name.empty()) throw ConfigError("algorithms: empty algorithm name");
            if (a.name.find_first_of(",\"\n") != std::string::npos)
                throw ConfigError("algorithms." + a.name + ": name must not contain commas, quotes or newlines");
            if (!seen.insert(a.name).second) throw ConfigError("algorithms." + a.name + ": duplicate name");
        }
        if (normalization == Normalization::by_kts && kts_index() < 0)
            throw ConfigError("run.normalization: by_kts needs a KTS algorithm");
    }

    /// Index of the first KTS entry, or -1.
    int kts_index() const {
        for (std::size_t i = 0; i < algorithms.size(); ++i)
            if (!algorithms[i].is_meta() && std::get<BaselineKind>(algorithms[i].spec) == BaselineKind::KTS)
                return static_cast<int>(i);
        return -1;
    }
};

namespace detail {

inline double parse_real(const std::string& key, const std::string& text) {
    std::string s = text;
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty())
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    return v;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
    const double v = parse_real(key, text);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigError(key + ": expected an integer, got '" + text + "'");
    return static_cast<long long>(v);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    std::string s = text;
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty())
        throw ConfigError(key + ": expected an unsigned 64-bit integer, got '" + text + "'");
    return v;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

inline std::string trimmed(std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    return s;
}

inline void reject_unknown(const boost::property_tree::ptree& section, const std::string& prefix,
                           const std::set<std::string>& known) {
    for (const auto& [k, v] : section)
        if (!known.count(k)) throw ConfigError(prefix + "." + k + ": unknown key");
}

inline AlgorithmEntry parse_algorithm(const std::string& name, const boost::property_tree::ptree& sec) {
    const std::string prefix = "algorithms." + name;
    const auto type = sec.get_optional<std::string>("type");
    if (!type) throw ConfigError(prefix + ".type: missing");
    const std::string t = trimmed(*type);
    AlgorithmEntry e;
    e.name = name;
    if (t == "KTS" || t == "KMTS" || t == "UKTS") {
        reject_unknown(sec, prefix, {"type"});
        e.spec = t == "KTS" ? BaselineKind::KTS : t == "KMTS" ? BaselineKind::KMTS : BaselineKind::UKTS;
        return e;
    }
    MetaVariant v;
    if (t == "th_mts_tau") v = MetaVariant::th_mts_tau;
    else if (t == "all_mts_tau") v = MetaVariant::all_mts_tau;
    else if (t == "all_mts") v = MetaVariant::all_mts;
    else throw ConfigError(prefix + ".type: unknown algorithm '" + t + "'");
    reject_unknown(sec, prefix, {"type", "c_w", "tau_mode", "n0", "threshold"});
    MetaConfig m = MetaConfig::defaults(v);
    if (auto s = sec.get_optional<std::string>("c_w")) m.c_w = parse_real(prefix + ".c_w", *s);
    if (auto s = sec.get_optional<std::string>("threshold")) m.threshold = parse_real(prefix + ".threshold", *s);
    if (auto s = sec.get_optional<std::string>("tau_mode")) {
        const std::string x = trimmed(*s);
        if (x == "theory") m.tau_mode = TauMode::theory;
        else if (x == "empirical") m.tau_mode = TauMode::empirical;
        else throw ConfigError(prefix + ".tau_mode: expected theory or empirical");
    }
    if (auto s = sec.get_optional<std::string>("n0")) {
        const std::string x = trimmed(*s);
        if (x == "theory") m.n0_mode = N0Mode::theory;
        else if (x == "d_cubed") m.n0_mode = N0Mode::d_cubed;
        else throw ConfigError(prefix + ".n0: expected theory or d_cubed");
    }
    e.spec = m;
    return e;
}

inline EnvConfig parse_env(const boost::property_tree::ptree& sec) {
    reject_unknown(sec, "env",
                   {"d", "horizon", "instances", "num_actions", "action_radius", "noise_sigma", "prior_mean",
                    "prior_cov", "prior_cov_diag", "prior_cov_offdiag", "m_bound", "lambda_bar_action",
                    "lambda_min_prior", "lambda_max_prior"});
    auto required = [&](const std::string& key) {
        auto v = sec.get_optional<std::string>(key);
        if (!v) throw ConfigError("env." + key + ": missing");
        return *v;
    };
    EnvConfig cfg;
    cfg.d = static_cast<int>(parse_integer("env.d", required("d")));
    if (cfg.d <= 0) throw ConfigError("env.d: must be positive");
    cfg.horizon = static_cast<int>(parse_integer("env.horizon", required("horizon")));
    cfg.instances = static_cast<int>(parse_integer("env.instances", required("instances")));
    const std::string k = trimmed(sec.get<std::string>("num_actions", "ball"));
    if (k != "ball") cfg.num_actions = static_cast<int>(parse_integer("env.num_actions", k));
    cfg.action_radius = parse_real("env.action_radius", required("action_radius"));
    cfg.noise_sigma = parse_real("env.noise_sigma", required("noise_sigma"));

    const auto mean = parse_list("env.prior_mean", required("prior_mean"));
    if (mean.size() == 1) cfg.prior_mean = Vector::Constant(cfg.d, mean[0]);
    else if (static_cast<int>(mean.size()) == cfg.d) cfg.prior_mean = Eigen::Map<const Vector>(mean.data(), cfg.d);
    else throw ConfigError("env.prior_mean: expected 1 or d values");

    const auto full = sec.get_optional<std::string>("prior_cov");
    const auto diag = sec.get_optional<std::string>("prior_cov_diag");
    const auto off = sec.get_optional<std::string>("prior_cov_offdiag");
    if (full && (diag || off)) throw ConfigError("env.prior_cov: give either prior_cov or prior_cov_diag/offdiag");
    try {
        if (full) {
            const auto v = parse_list("env.prior_cov", *full);
            if (static_cast<int>(v.size()) != cfg.d * cfg.d) throw ConfigError("env.prior_cov: expected d*d values");
            const Matrix m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                v.data(), cfg.d, cfg.d);
            if (!m.isApprox(m.transpose(), 1e-12)) throw ConfigError("env.prior_cov: matrix is not symmetric");
            cfg.prior_cov = PsdMatrix(m);
        } else if (diag) {
            const double dv = parse_real("env.prior_cov_diag", *diag);
            const double ov = off ? parse_real("env.prior_cov_offdiag", *off) : 0.0;
            cfg.prior_cov = equicorrelated(cfg.d, dv, ov);
        } else {
            throw ConfigError("env.prior_cov: missing (prior_cov or prior_cov_diag)");
        }
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("env.prior_cov: ") + e.what());
    }
    fill_tight_bounds(cfg);
    if (auto s = sec.get_optional<std::string>("m_bound")) cfg.m_bound = parse_real("env.m_bound", *s);
    if (auto s = sec.get_optional<std::string>("lambda_bar_action"))
        cfg.lambda_bar_action = parse_real("env.lambda_bar_action", *s);
    if (auto s = sec.get_optional<std::string>("lambda_min_prior"))
        cfg.lambda_min_prior = parse_real("env.lambda_min_prior", *s);
    if (auto s = sec.get_optional<std::string>("lambda_max_prior"))
        cfg.lambda_max_prior = parse_real("env.lambda_max_prior", *s);
    return cfg;
}

}  // namespace detail

/// Parses an INI document with sections [env], [algorithms.<name>] and [run].
/// Algorithms keep their file order. Errors name the offending key path.
inline ExperimentConfig parse_experiment_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
    }
    ExperimentConfig cfg;
    bool have_env = false;
    for (const auto& [section, body] : tree) {
        if (section == "env") {
            cfg.env = detail::parse_env(body);
            have_env = true;
        } else if (section == "run") {
            detail::reject_unknown(body, "run", {"runs", "master_seed", "normalization", "output_dir"});
            if (auto s = body.get_optional<std::string>("runs"))
                cfg.runs = static_cast<int>(detail::parse_integer("run.runs", *s));
            if (auto s = body.get_optional<std::string>("master_seed"))
                cfg.master_seed = detail::parse_u64("run.master_seed", *s);
            if (auto s = body.get_optional<std::string>("output_dir")) cfg.output_dir = detail::trimmed(*s);
            if (auto s = body.get_optional<std::string>("normalization")) {
                const std::string x = detail::trimmed(*s);
                if (x == "none") cfg.normalization = Normalization::none;
                else if (x == "by_kts") cfg.normalization = Normalization::by_kts;
                else throw ConfigError("run.normalization: expected none or by_kts");
            }
        } else if (section.rfind("algorithms.", 0) == 0) {
            cfg.algorithms.push_back(detail::parse_algorithm(section.substr(11), body));
        } else {
            throw ConfigError(section + ": unknown section");
        }
    }
    if (!have_env) throw ConfigError("env: missing section");
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    return parse_experiment_config(in);
}

/// Per (run, algorithm, instance) pseudo-regret, plus meta diagnostics for meta entries.
struct RegretTrace {
    std::vector<std::string> algorithms;
    std::vector<bool> is_meta;
    int runs = 0;
    int instances = 0;
    std::vector<double> instant;  // [run][alg][n], flattened
    std::vector<MetaDiagnostics> diagnostics;  // same layout; default for baselines

    std::size_t at(int run, int alg, int n) const {
        return (static_cast<std::size_t>(run) * algorithms.size() + static_cast<std::size_t>(alg)) *
                   static_cast<std::size_t>(instances) +
               static_cast<std::size_t>(n);
    }

    /// Cumulative regret of one (run, algorithm) over instances.
    std::vector<double> cumulative(int run, int alg) const {
        std::vector<double> out(static_cast<std::size_t>(instances));
        double acc = 0.0;
        for (int n = 0; n < instances; ++n) out[static_cast<std::size_t>(n)] = acc += instant[at(run, alg, n)];
        return out;
    }
};

namespace detail {

/// One run: all algorithms play every instance against the same environment draws.
inline void run_one(const ExperimentConfig& cfg, int run, RegretTrace& out) {
    const auto& env_cfg = cfg.env;
    const auto nalg = static_cast<int>(cfg.algorithms.size());
    std::vector<std::optional<MetaLearner>> learners(static_cast<std::size_t>(nalg));
    std::vector<GaussianBelief> priors(static_cast<std::size_t>(nalg));
    for (int a = 0; a < nalg; ++a) {
        const auto& e = cfg.algorithms[static_cast<std::size_t>(a)];
        if (e.is_meta()) learners[static_cast<std::size_t>(a)].emplace(env_cfg, std::get<MetaConfig>(e.spec));
        else priors[static_cast<std::size_t>(a)] = make_baseline_prior(std::get<BaselineKind>(e.spec), env_cfg);
    }
    const auto r = static_cast<std::uint64_t>(run);
    for (int n = 1; n <= env_cfg.instances; ++n) {
        const InstanceEnvironment env = make_instance_environment(env_cfg, cfg.master_seed, r, n);
        for (int a = 0; a < nalg; ++a) {
            const auto& e = cfg.algorithms[static_cast<std::size_t>(a)];
            auto streams = AlgorithmStreams::keyed(cfg.master_seed, r, n, e.salt());
            const std::size_t slot = out.at(run, a, n - 1);
            if (auto& learner = learners[static_cast<std::size_t>(a)]) {
                MetaDiagnostics diag = learner->diagnose(n);
                const InstanceTrace tr =
                    run_instance(learner->policy(), learner->prior_for(n), env, env_cfg.noise_sigma, streams);
                diag.tau_used = tr.explored_steps;
                diag.never_identified = !learner->observe(tr);
                out.instant[slot] = tr.total_regret();
                out.diagnostics[slot] = diag;
            } else {
                const auto kind = std::get<BaselineKind>(e.spec);
                const InstanceTrace tr = run_instance(baseline_policy(kind), priors[static_cast<std::size_t>(a)], env,
                                                      env_cfg.noise_sigma, streams);
                out.instant[slot] = tr.total_regret();
                out.diagnostics[slot].instance = n;
            }
        }
    }
}

}  // namespace detail

/// Runs every algorithm for every run. Runs execute on worker threads and write to
/// disjoint slots, so the result does not depend on scheduling.
inline RegretTrace simulate(const ExperimentConfig& cfg, unsigned threads = 0) {
    cfg.validate();
    RegretTrace out;
    for (const auto& a : cfg.algorithms) {
        out.algorithms.push_back(a.name);
        out.is_meta.push_back(a.is_meta());
    }
    out.runs = cfg.runs;
    out.instances = cfg.env.instances;
    const std::size_t total = static_cast<std::size_t>(cfg.runs) * cfg.algorithms.size() *
                              static_cast<std::size_t>(cfg.env.instances);
    out.instant.assign(total, 0.0);
    out.diagnostics.assign(total, MetaDiagnostics{});

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.runs));
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.runs));
    auto worker = [&] {
        for (int r = next++; r < cfg.runs; r = next++) {
            try {
                detail::run_one(cfg, r, out);
            } catch (...) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

/// Mean over runs of (cumulative regret of alg - cumulative regret of KTS), per instance.
/// Inputs are [run][instance] cumulative series.
inline std::vector<double> relative_regret(const std::vector<std::vector<double>>& alg,
                                           const std::vector<std::vector<double>>& kts) {
    if (alg.size() != kts.size() || alg.empty()) throw InvalidInput("relative_regret: run counts differ or are zero");
    const std::size_t n = alg.front().size();
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < alg.size(); ++r) {
        if (alg[r].size() != n || kts[r].size() != n) throw InvalidInput("relative_regret: instance counts differ");
        for (std::size_t i = 0; i < n; ++i) out[i] += alg[r][i] - kts[r][i];
    }
    for (auto& v : out) v /= static_cast<double>(alg.size());
    return out;
}

/// Mean and standard deviation over runs of one algorithm's cumulative regret.
struct RegretSummary {
    std::string algorithm;
    std::vector<double> mean;
    std::vector<double> std_over_runs;  // sample std (n-1); zero for a single run
};

inline std::vector<RegretSummary> summarize(const RegretTrace& tr) {
    std::vector<RegretSummary> out;
    const auto n = static_cast<std::size_t>(tr.instances);
    for (int a = 0; a < static_cast<int>(tr.algorithms.size()); ++a) {
        RegretSummary s{tr.algorithms[static_cast<std::size_t>(a)], std::vector<double>(n, 0.0),
                        std::vector<double>(n, 0.0)};
        std::vector<std::vector<double>> cum;
        for (int r = 0; r < tr.runs; ++r) cum.push_back(tr.cumulative(r, a));
        for (std::size_t i = 0; i < n; ++i) {
            double m = 0.0;
            for (const auto& c : cum) m += c[i];
            m /= tr.runs;
            double ss = 0.0;
            for (const auto& c : cum) ss += (c[i] - m) * (c[i] - m);
            s.mean[i] = m;
            s.std_over_runs[i] = tr.runs > 1 ? std::sqrt(ss / (tr.runs - 1)) : 0.0;
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Divides every series by the maximum of the KTS mean series, so KTS peaks at exactly 1.
/// An all-zero KTS series leaves the input unchanged.
inline std::vector<RegretSummary> normalize_by_kts(std::vector<RegretSummary> series, const std::string& kts_name = "KTS") {
    const auto it = std::find_if(series.begin(), series.end(), [&](const auto& s) { return s.algorithm == kts_name; });
    if (it == series.end()) throw ConfigError("normalization: no algorithm named " + kts_name);
    double peak = 0.0;
    for (double v : it->mean) peak = std::max(peak, v);
    if (!(peak > 0.0)) return series;
    for (auto& s : series) {
        for (auto& v : s.mean) v /= peak;
        for (auto& v : s.std_over_runs) v /= peak;
    }
    return series;
}

namespace detail {

inline std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    return f;
}

inline void close_csv(std::ofstream& f, const std::filesystem::path& path) {
    f.flush();
    if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace detail

inline void write_regret_csv(const RegretTrace& tr, const std::filesystem::path& path) {
    auto f = detail::open_csv(path);
    f << "run,algorithm,instance,instant_regret,cum_regret\n";
    for (int r = 0; r < tr.runs; ++r)
        for (int a = 0; a < static_cast<int>(tr.algorithms.size()); ++a) {
            double acc = 0.0;
            for (int n = 0; n < tr.instances; ++n) {
                const double x = tr.instant[tr.at(r, a, n)];
                acc += x;
                f << r << ',' << tr.algorithms[static_cast<std::size_t>(a)] << ',' << n + 1 << ','
                  << detail::fmt12(x) << ',' << detail::fmt12(acc) << '\n';
            }
        }
    detail::close_csv(f, path);
}

/// Meta algorithms only. Estimates that do not exist yet are written as nan.
inline void write_meta_csv(const RegretTrace& tr, const std::filesystem::path& path) {
    auto f = detail::open_csv(path);
    f << "run,algorithm,instance,mean_err_l2,cov_err_op,tau_used,never_identified\n";
    for (int r = 0; r < tr.runs; ++r)
        for (int a = 0; a < static_cast<int>(tr.algorithms.size()); ++a) {
            if (!tr.is_meta[static_cast<std::size_t>(a)]) continue;
            for (int n = 0; n < tr.instances; ++n) {
                const auto& d = tr.diagnostics[tr.at(r, a, n)];
                f << r << ',' << tr.algorithms[static_cast<std::size_t>(a)] << ',' << n + 1 << ','
                  << detail::fmt12(d.mean_err_l2) << ',' << detail::fmt12(d.cov_err_op) << ',' << d.tau_used << ','
                  << (d.never_identified ? 1 : 0) << '\n';
            }
        }
    detail::close_csv(f, path);
}

inline void write_normalized_csv(const std::vector<RegretSummary>& series, const std::filesystem::path& path) {
    auto f = detail::open_csv(path);
    f << "algorithm,instance,mean_norm_cum_regret,std_over_runs\n";
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.mean.size(); ++i)
            f << s.algorithm << ',' << i + 1 << ',' << detail::fmt12(s.mean[i]) << ','
              << detail::fmt12(s.std_over_runs[i]) << '\n';
    detail::close_csv(f, path);
}

/// Simulates and writes regret.csv, meta.csv and normalized.csv into cfg.output_dir.
/// With normalization = none the normalized file holds the unscaled mean series.
inline RegretTrace run_experiment(const ExperimentConfig& cfg, unsigned threads = 0) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec || !std::filesystem::is_directory(cfg.output_dir))
        throw IoError("cannot create output directory " + cfg.output_dir.string());
    RegretTrace tr = simulate(cfg, threads);
    write_regret_csv(tr, cfg.output_dir / "regret.csv");
    write_meta_csv(tr, cfg.output_dir / "meta.csv");
    auto series = summarize(tr);
    if (cfg.normalization == Normalization::by_kts)
        series = normalize_by_kts(std::move(series), tr.algorithms[static_cast<std::size_t>(cfg.kts_index())]);
    write_normalized_csv(series, cfg.output_dir / "normalized.csv");
    return tr;
}

}  // namespace mqb

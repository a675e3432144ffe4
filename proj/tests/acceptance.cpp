// Acceptance run: one PASS/FAIL line per criterion 1-8.
//
// usage: acceptance <path-to-mqb-cli> <configs-dir> [work-dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mqb/harness.hpp"
#include "mqb/verification.hpp"

namespace fs = std::filesystem;
using namespace mqb;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

/// Folds suite rows into one outcome; the detail lists every statistic.
Outcome from_rows(const std::vector<CheckRow>& rows) {
    Outcome o{true, ""};
    for (const auto& r : rows) {
        o.pass = o.pass && r.pass;
        if (!o.detail.empty()) o.detail += "; ";
        o.detail += r.name + fmt("=%.4g (<= %.4g)", r.statistic, r.threshold);
    }
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

Outcome desk_scale(const fs::path& configs, const fs::path& work) {
    ExperimentConfig cfg = load_experiment_config(configs / "reference.ini");
    cfg.output_dir = work / "desk";
    const RegretTrace tr = run_experiment(cfg, 0);
    const auto summary = summarize(tr);
    auto final_of = [&](const std::string& name) {
        for (const auto& s : summary)
            if (s.algorithm == name) return s.mean.back();
        throw ConfigError("acceptance: algorithm " + name + " missing from reference.ini");
    };
    const double kts = final_of("KTS"), kmts = final_of("KMTS"), ukts = final_of("UKTS"), all = final_of("All-MTS");
    const bool ordering = kts < kmts && kmts < ukts;
    const bool all_ok = all <= 0.9 * ukts;

    // Run-averaged ||mu_hat_n - mu*|| of Th-MTS_tau, log-log least squares over n in [200, 2000].
    int th = -1;
    for (std::size_t a = 0; a < tr.algorithms.size(); ++a)
        if (tr.algorithms[a] == "Th-MTS_tau") th = static_cast<int>(a);
    if (th < 0) throw ConfigError("acceptance: Th-MTS_tau missing from reference.ini");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (int n = 200; n <= std::min(2000, tr.instances); ++n) {
        double e = 0.0;
        for (int r = 0; r < tr.runs; ++r) e += tr.diagnostics[tr.at(r, th, n - 1)].mean_err_l2 / tr.runs;
        const double x = std::log(n), y = std::log(e);
        sx += x, sy += y, sxx += x * x, sxy += x * y;
        ++m;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const bool slope_ok = slope >= -0.65 && slope <= -0.35;

    double kts_peak = 0.0;
    for (const auto& s : normalize_by_kts(summary, "KTS"))
        if (s.algorithm == "KTS")
            for (double v : s.mean) kts_peak = std::max(kts_peak, v);
    const bool peak_ok = kts_peak == 1.0;

    Outcome o;
    o.pass = ordering && all_ok && slope_ok && peak_ok;
    o.detail = fmt("(i) KTS=%.6g KMTS=%.6g UKTS=%.6g", kts, kmts, ukts) + (ordering ? " ok" : " FAILED") +
               fmt("; (ii) All-MTS/UKTS=%.4f (<= 0.9)", all / ukts) + (all_ok ? " ok" : " FAILED") +
               fmt("; (iii) Th-MTS_tau mean-error slope=%.4f in [-0.65,-0.35]", slope) +
               (slope_ok ? " ok" : " FAILED") + fmt("; (iv) normalized KTS max=%.17g", kts_peak) +
               (peak_ok ? " ok" : " FAILED");
    return o;
}

Outcome determinism(const std::string& cli, const fs::path& configs, const fs::path& work) {
    const fs::path a = work / "det_a", b = work / "det_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const std::string base = "\"" + cli + "\" simulate --config \"" + (configs / "smoke.ini").string() + "\" --out ";
    const int ra = std::system((base + "\"" + a.string() + "\" > /dev/null").c_str());
    const int rb = std::system((base + "\"" + b.string() + "\" > /dev/null").c_str());
    if (ra != 0 || rb != 0) return {false, fmt("simulate exited with %g and %g", ra, rb)};
    bool same = true;
    std::string detail;
    for (const char* f : {"regret.csv", "meta.csv", "normalized.csv"}) {
        const std::string x = slurp(a / f), y = slurp(b / f);
        const bool eq = !x.empty() && x == y;
        same = same && eq;
        detail += std::string(detail.empty() ? "" : "; ") + f + fmt(" %.0f bytes ", static_cast<double>(x.size())) +
                  (eq ? "identical" : "DIFFER");
    }
    return {same, detail};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: %s <mqb-cli> <configs-dir> [work-dir]\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path configs = argv[2];
    const fs::path work = argc > 3 ? fs::path(argv[3]) : fs::temp_directory_path() / "mqb_acceptance";
    fs::create_directories(work);

    const SuiteSizes sz;
    const std::uint64_t seed = 2024;
    struct Criterion {
        int id;
        const char* title;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "posterior oracle equivalence", 10, [&] { return from_rows(posterior_suite(sz, seed)); }},
        {2, "covariance alignment", 10, [&] { return from_rows(alignment_suite(sz, seed)); }},
        {3, "Jacobian determinant bound", 60, [&] { return from_rows(jacobian_suite(sz, seed)); }},
        {4, "estimator unbiasedness", 120, [&] { return from_rows(estimators_suite(sz, seed)); }},
        {5, "good-event coverage", 120, [&] { return from_rows(events_suite(sz, seed)); }},
        {6, "desk-scale reproduction", 900, [&] { return desk_scale(configs, work); }},
        {7, "bound constants", 1, [&] { return from_rows(constants_suite(sz, seed)); }},
        {8, "determinism of simulate", 300, [&] { return determinism(cli, configs, work); }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failures += pass ? 0 : 1;
        std::printf("criterion %d %s: %s [%.2f s of %.0f s%s] %s\n", c.id, c.title, pass ? "PASS" : "FAIL", secs,
                    c.budget_s, in_time ? "" : ", over budget", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}

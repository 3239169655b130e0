#include "mvmr/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "mvmr/errors.hpp"
#include "mvmr/report.hpp"
#include "mvmr/simulation.hpp"

namespace mvmr {

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) {
        const auto b = tok.find_first_not_of(" \t");
        const auto e = tok.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
    }
    return out;
}

std::vector<double> parse_list(const std::string& s, const char* flag) {
    std::vector<double> out;
    for (const auto& tok : split(s, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) throw InputError(std::string("bad number '") + tok + "' in " + flag);
        out.push_back(v);
    }
    if (out.empty()) throw InputError(std::string(flag) + " needs at least one value");
    return out;
}

unsigned resolve_threads(int flag) {
    if (flag > 0) return static_cast<unsigned>(flag);
    if (const char* env = std::getenv("MVMR_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open output file " + path);
    f << text;
    if (!f) throw InputError("failed writing " + path);
}

struct AnalyzeArgs {
    std::string exposures, outcome, ld, exposure_cor;
    double n_x = 0.0, n_y = 0.0;
    double alpha = 0.05;
    double gamma_min = 0.05;
    std::string grid;
    std::string methods = "wald,ar,kleibergen,lc,koh";
    std::uint64_t seed = 20240101;
    std::size_t draws = kDefaultDraws;
    std::string out, sets_out;
    int threads = 0;
    bool allow_ambiguous = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
    const GwasPaths paths{a.exposures, a.outcome, a.ld, a.exposure_cor};
    const auto raw = load_gwas_tables(paths, a.n_x, a.n_y);
    const auto tables = harmonize_variants(raw, HarmonizeOptions{a.allow_ambiguous});
    const auto summary = build_multivariable_summary(tables);

    AnalysisOptions o;
    o.alpha = a.alpha;
    o.gamma_min = a.gamma_min;
    if (!a.grid.empty()) o.grid = parse_grid_spec(a.grid);
    o.methods.clear();
    for (const auto& tag : split(a.methods, ',')) o.methods.push_back(parse_method(tag));
    o.seed = a.seed;
    o.draws = a.draws;
    o.threads = resolve_threads(a.threads);

    auto result = run_analysis(summary, o);
    for (const auto& w : tables.warnings) {
        if (std::find(result.warnings.begin(), result.warnings.end(), w) == result.warnings.end()) {
            result.warnings.insert(result.warnings.begin(), w);
        }
    }
    const auto report = report_json(result, o, InputDigest{paths, tables.exposure_names});
    write_text(a.out, dump_report(report));
    if (!a.sets_out.empty()) {
        std::ostringstream csv;
        write_sets_csv(csv, result.grid, result.sets);
        write_text(a.sets_out, csv.str());
    }
    return 0;
}

struct SimulateArgs {
    std::string design = "baseline";
    std::string mu, xi, tau;
    int reps = 100;
    std::uint64_t seed = 1;
    std::string out, per_replicate;
    int threads = 0;
    double n_x = 5000, n_y = 5000;
    std::size_t draws = kDefaultDraws;
    bool no_grid = false;
    double threshold = 10.0;
    double target_f = 6.0;
    double kappa2 = 0.0;
    int extra_blocks = 0;
    std::string methods;
};

int cmd_simulate(const SimulateArgs& a) {
    if (a.design != "baseline" && a.design != "screening" && a.design != "selection") {
        throw InputError("unknown design '" + a.design + "' (expected baseline, screening or selection)");
    }
    if (a.reps < 1) throw InputError("--reps must be positive");
    SimulationConfig c;
    c.n_x = a.n_x;
    c.n_y = a.n_y;
    c.replicates = a.reps;
    c.master_seed = a.seed;
    c.threads = resolve_threads(a.threads);
    c.calibration_draws = a.draws;
    c.evaluate_grid = !a.no_grid;
    c.overdispersion_kappa2 = a.kappa2;
    c.extra_blocks = a.extra_blocks;
    c.gamma_min = 0.01;

    std::ostringstream metrics;
    std::ostringstream per_rep;
    if (a.design == "baseline") {
        const auto mu = parse_list(a.mu.empty() ? "10" : a.mu, "--mu");
        const auto xi = parse_list(a.xi.empty() ? "1" : a.xi, "--xi");
        if (!a.tau.empty()) c.tau = parse_list(a.tau, "--tau").front();
        std::vector<Method> methods = default_study_methods();
        if (!a.methods.empty()) {
            methods.clear();
            for (const auto& t : split(a.methods, ',')) methods.push_back(parse_method(t));
        }
        validate_config(c);
        const auto study = run_study(c, mu, xi, methods, !a.per_replicate.empty());
        write_study_csv(metrics, study.rows);
        std::vector<std::string> tags;
        for (Method m : methods) tags.push_back(to_string(m));
        tags.emplace_back("ivw_ci");
        tags.emplace_back("gmm_ci");
        write_replicates_csv(per_rep, study.replicates, tags);
    } else if (a.design == "screening") {
        const auto xi = parse_list(a.xi.empty() ? "0.5" : a.xi, "--xi");
        std::vector<ScreeningRow> rows;
        std::vector<ReplicateOutcome> reps;
        for (double x : xi) {
            SimulationConfig cell = c;
            cell.xi = x;
            validate_config(cell);
            std::vector<double> mus;
            if (a.mu.empty()) {
                mus.push_back(tune_mu_for_mean_min_f(cell, a.target_f));
            } else {
                mus = parse_list(a.mu, "--mu");
            }
            for (double m : mus) {
                cell.mu = m;
                auto res = screening_experiment(cell, a.threshold, !a.per_replicate.empty());
                for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
                rows.insert(rows.end(), res.rows.begin(), res.rows.end());
                for (auto& r : res.replicates) reps.push_back(std::move(r));
            }
        }
        write_screening_csv(metrics, rows);
        write_replicates_csv(per_rep, reps,
                             {"wald", "andrews_wald", "ar", "kleibergen", "lc_robust", "ivw_ci", "gmm_ci"});
    } else {
        const auto mu = parse_list(a.mu.empty() ? "5" : a.mu, "--mu");
        const auto tau = parse_list(a.tau.empty() ? "0,0.5,1,2" : a.tau, "--tau");
        if (!a.xi.empty()) c.xi = parse_list(a.xi, "--xi").front();
        const auto study = selection_experiment(c, tau, mu);
        write_selection_csv(metrics, study.rows);
        write_selection_replicates_csv(per_rep, study.replicates);
    }
    write_text(a.out, metrics.str());
    if (!a.per_replicate.empty()) write_text(a.per_replicate, per_rep.str());
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Weak-instrument-robust multivariable Mendelian randomization from summary data", "mvmr"};
    app.require_subcommand(1);

    AnalyzeArgs aa;
    auto* analyze = app.add_subcommand("analyze", "Estimates, conditional F and confidence sets for summary data");
    analyze->add_option("--exposures", aa.exposures, "Exposure association TSV")->required();
    analyze->add_option("--outcome", aa.outcome, "Outcome association TSV")->required();
    analyze->add_option("--ld", aa.ld, "Variant correlation (LD) TSV")->required();
    analyze->add_option("--exposure-cor", aa.exposure_cor, "Exposure correlation TSV")->required();
    analyze->add_option("--nx", aa.n_x, "Exposure sample size")->required();
    analyze->add_option("--ny", aa.n_y, "Outcome sample size")->required();
    analyze->add_option("--alpha", aa.alpha, "Significance level")->capture_default_str();
    analyze->add_option("--gamma-min", aa.gamma_min, "Minimum coverage distortion")->capture_default_str();
    analyze->add_option("--grid", aa.grid, "lo:hi:step[,lo:hi:step...] (default: GMM +/- 10 SE, 101 points)")
        ->allow_extra_args(false);
    analyze->add_option("--methods", aa.methods, "Comma list of wald,aw,ar,kleibergen,lc,cs_p,koh")
        ->capture_default_str();
    analyze->add_option("--seed", aa.seed, "Seed for critical-value draws")->capture_default_str();
    analyze->add_option("--draws", aa.draws, "Number of critical-value draws")->capture_default_str();
    analyze->add_option("--out", aa.out, "Report JSON path (default stdout)");
    analyze->add_option("--sets-out", aa.sets_out, "Confidence-set membership CSV path");
    analyze->add_option("--threads", aa.threads, "Worker threads (fallback: MVMR_THREADS)");
    analyze->add_flag("--allow-ambiguous", aa.allow_ambiguous, "Keep strand-ambiguous (A/T, C/G) variants");

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of coverage, power and area");
    simulate->add_option("--design", sa.design, "baseline | screening | selection")->capture_default_str();
    simulate->add_option("--mu", sa.mu, "Comma list of instrument strengths");
    simulate->add_option("--xi", sa.xi, "Comma list of conditional strengths");
    simulate->add_option("--tau", sa.tau, "Comma list of extra-instrument multipliers");
    simulate->add_option("--reps", sa.reps, "Replicates per cell")->capture_default_str();
    simulate->add_option("--seed", sa.seed, "Master seed")->capture_default_str();
    simulate->add_option("--out", sa.out, "Metrics CSV path (default stdout)");
    simulate->add_option("--per-replicate", sa.per_replicate, "Per-replicate CSV path");
    simulate->add_option("--threads", sa.threads, "Worker threads (fallback: MVMR_THREADS)");
    simulate->add_option("--nx", sa.n_x, "Exposure sample size")->capture_default_str();
    simulate->add_option("--ny", sa.n_y, "Outcome sample size")->capture_default_str();
    simulate->add_option("--draws", sa.draws, "Critical-value draws")->capture_default_str();
    simulate->add_flag("--no-grid", sa.no_grid, "Skip grid inversion (coverage/power only)");
    simulate->add_option("--threshold", sa.threshold, "Screening threshold on min conditional F")
        ->capture_default_str();
    simulate->add_option("--target-f", sa.target_f, "Screening: tune mu to this mean min F when --mu is absent")
        ->capture_default_str();
    simulate->add_option("--kappa2", sa.kappa2, "Overdispersion variance kappa^2")->capture_default_str();
    simulate->add_option("--extra-blocks", sa.extra_blocks, "Extra blocks of four instruments")
        ->capture_default_str();
    simulate->add_option("--methods", sa.methods, "Baseline: comma list of set methods");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(aa);
        return cmd_simulate(sa);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace mvmr

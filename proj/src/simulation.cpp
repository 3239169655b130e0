#include "mvmr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "mvmr/errors.hpp"
#include "mvmr/parallel.hpp"
#include "mvmr/robust_stats.hpp"
#include "mvmr/selection.hpp"

namespace mvmr {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

// Running sums for univariable regressions and correlations within one sample.
struct SampleSums {
    explicit SampleSums(Index J, Index P)
        : n(0), z(VectorXd::Zero(J)), zz(MatrixXd::Zero(J, J)), y(VectorXd::Zero(P)), yy(MatrixXd::Zero(P, P)),
          zy(MatrixXd::Zero(J, P)) {}

    void add(const VectorXd& zi, const VectorXd& yi) {
        ++n;
        z += zi;
        zz.noalias() += zi * zi.transpose();
        y += yi;
        yy.noalias() += yi * yi.transpose();
        zy.noalias() += zi * yi.transpose();
    }

    double n;
    VectorXd z;
    MatrixXd zz;
    VectorXd y;
    MatrixXd yy;
    MatrixXd zy;

    [[nodiscard]] MatrixXd centered_zz() const { return zz - z * z.transpose() / n; }
    [[nodiscard]] MatrixXd centered_yy() const { return yy - y * y.transpose() / n; }
    [[nodiscard]] MatrixXd centered_zy() const { return zy - z * y.transpose() / n; }

    // Per-variant simple regressions of each response on each instrument.
    void regress(MatrixXd& beta, MatrixXd& se) const {
        const MatrixXd Szz = centered_zz();
        const MatrixXd Syy = centered_yy();
        const MatrixXd Szy = centered_zy();
        beta.resize(Szy.rows(), Szy.cols());
        se.resize(Szy.rows(), Szy.cols());
        for (Index j = 0; j < Szy.rows(); ++j) {
            for (Index p = 0; p < Szy.cols(); ++p) {
                const double b = Szy(j, p) / Szz(j, j);
                const double resid = (Syy(p, p) - b * Szy(j, p)) / (n - 2.0);
                beta(j, p) = b;
                se(j, p) = std::sqrt(resid / Szz(j, j));
            }
        }
    }
};

MatrixXd correlation(const MatrixXd& cov) {
    const VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
    MatrixXd r = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    r.diagonal().setOnes();
    return 0.5 * (r + r.transpose());
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return kNaN;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string num(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string method_list_tag(Method m) { return to_string(m); }

const std::vector<std::string>& interval_tags() {
    static const std::vector<std::string> tags{"ivw_ci", "gmm_ci"};
    return tags;
}

std::vector<std::string> outcome_tags(const std::vector<Method>& methods) {
    std::vector<std::string> tags;
    for (Method m : methods) tags.push_back(method_list_tag(m));
    for (const auto& t : interval_tags()) tags.push_back(t);
    return tags;
}

}  // namespace

void validate_config(const SimulationConfig& c) {
    if (!(c.n_x >= 10.0) || !(c.n_y >= 10.0)) throw InputError("simulation sample sizes must be at least 10");
    if (c.theta0.size() != 2) throw InputError("the simulation design has K = 2 exposures");
    if (!(c.mu > 0.0)) throw InputError("mu must be positive");
    if (!(c.xi >= 0.0 && c.xi <= 1.0)) throw InputError("xi must lie in [0, 1]");
    if (c.extra_blocks < 0) throw InputError("extra_blocks must be nonnegative");
    if (!(c.overdispersion_kappa2 >= 0.0)) throw InputError("overdispersion kappa2 must be nonnegative");
    if (c.replicates < 1) throw InputError("replicates must be positive");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if ((c.error_cov - c.error_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw InputError("error covariance must be symmetric");
    }
    if (!(c.error_cov.diagonal().minCoeff() > 0.0)) throw InputError("error variances must be positive");
    if (c.grid.size() != 2) throw InputError("simulation grid needs two axes");
}

Eigen::Matrix3d sampling_error_cov(const Eigen::Matrix3d& error_cov) {
    Eigen::LLT<Eigen::Matrix3d> llt(error_cov);
    if (llt.info() == Eigen::Success) return error_cov;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(error_cov);
    const Eigen::Vector3d lambda = eig.eigenvalues().cwiseMax(1e-3);
    Eigen::Matrix3d m = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
    const Eigen::Vector3d sd = error_cov.diagonal().cwiseSqrt();
    const Eigen::Vector3d inv = m.diagonal().cwiseSqrt().cwiseInverse();
    m = sd.asDiagonal() * (inv.asDiagonal() * m * inv.asDiagonal()) * sd.asDiagonal();
    return 0.5 * (m + m.transpose());
}

std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t replicate) {
    // splitmix64 finalizer applied to a key mixing seed and index.
    std::uint64_t x = master_seed + 0x9E3779B97F4A7C15ULL * (replicate + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

SimulatedData simulate_dataset(const SimulationConfig& config, std::uint64_t replicate) {
    validate_config(config);
    SimulatedData data;
    data.seed = replicate_seed(config.master_seed, replicate);
    data.truth = config.theta0;
    std::mt19937_64 rng(data.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, std::sqrt(0.4));

    const Index J = config.num_instruments();
    VectorXd a(J);
    for (Index j = 0; j < J; ++j) a(j) = unif(rng);
    MatrixXd R = a * a.transpose();
    R.diagonal().setOnes();
    const MatrixXd LZ = Eigen::LLT<MatrixXd>(R).matrixL();
    const Eigen::Matrix3d LE = Eigen::LLT<Eigen::Matrix3d>(sampling_error_cov(config.error_cov)).matrixL();

    const double scale = config.mu / std::sqrt(config.n_x);
    const double xi = config.xi;
    MatrixXd gamma(J, 2);
    const Eigen::Vector4d core1(1 + xi, 1 + xi, 1 - xi, 1 - xi);
    const Eigen::Vector4d core2(1 - xi, 1 - xi, 1 + xi, 1 + xi);
    for (int b = 0; b <= config.extra_blocks; ++b) {
        const double mult = b == 0 ? 1.0 : config.tau;
        gamma.block(4 * b, 0, 4, 1) = core1 * 0.2 * scale * mult;
        gamma.block(4 * b, 1, 4, 1) = core2 * scale * mult;
    }
    data.true_gamma = gamma;

    VectorXd nu = VectorXd::Zero(J);
    if (config.overdispersion_kappa2 > 0.0) {
        const double sd = std::sqrt(config.overdispersion_kappa2 / config.n_y);
        for (Index j = 0; j < J; ++j) nu(j) = sd * normal(rng);
    }

    VectorXd e(J);
    Eigen::Vector3d eps;
    VectorXd zi(J);
    VectorXd xi_row(2);
    VectorXd yi(1);
    const auto draw_row = [&](Eigen::Vector3d& errs) {
        for (Index j = 0; j < J; ++j) e(j) = normal(rng);
        zi.noalias() = LZ * e;
        for (int k = 0; k < 3; ++k) eps(k) = normal(rng);
        errs = LE * eps;
        xi_row.noalias() = gamma.transpose() * zi;
        xi_row(0) += errs(1);
        xi_row(1) += errs(2);
    };

    SampleSums exposure(J, 2);
    const auto n_x = static_cast<long>(config.n_x);
    for (long i = 0; i < n_x; ++i) {
        Eigen::Vector3d errs;
        draw_row(errs);
        exposure.add(zi, xi_row);
    }
    SampleSums outcome(J, 1);
    const auto n_y = static_cast<long>(config.n_y);
    for (long i = 0; i < n_y; ++i) {
        Eigen::Vector3d errs;
        draw_row(errs);
        yi(0) = config.theta0.dot(xi_row) + nu.dot(zi) + errs(0);
        outcome.add(zi, yi);
    }

    UnivariableGwasTables& t = data.tables;
    t.n_x = config.n_x;
    t.n_y = config.n_y;
    t.exposure_names = {"exposure_1", "exposure_2"};
    for (Index j = 0; j < J; ++j) {
        t.variants.push_back("v" + std::to_string(j + 1));
        t.effect_allele.emplace_back("A");
        t.other_allele.emplace_back("G");
        t.outcome_effect_allele.emplace_back("A");
        t.outcome_other_allele.emplace_back("G");
    }
    exposure.regress(t.exposure_beta, t.exposure_se);
    MatrixXd ob, os;
    outcome.regress(ob, os);
    t.outcome_beta = ob.col(0);
    t.outcome_se = os.col(0);
    t.ld = correlation(exposure.centered_zz());
    t.exposure_cor = correlation(exposure.centered_yy());

    data.summary = build_multivariable_summary(t);
    return data;
}

StudyCalibration::StudyCalibration(const SimulationConfig& config, const std::vector<int>& instrument_counts,
                                   bool full_ladder) {
    for (int J : instrument_counts) {
        if (ladders_.count(J)) continue;
        const CalibrationDraws draws(J, 2, config.calibration_draws, config.calibration_seed);
        const double cap = full_ladder ? 1.0 - config.alpha : config.gamma_min;
        ladders_.emplace(J, build_distortion_ladder(draws, config.alpha, config.gamma_min, 0.01, cap));
    }
}

const DistortionLadder& StudyCalibration::ladder(int J) const {
    const auto it = ladders_.find(J);
    if (it == ladders_.end()) throw InputError("no calibration for J=" + std::to_string(J));
    return it->second;
}

std::vector<Method> default_study_methods() {
    return {Method::wald, Method::andrews_wald, Method::ar, Method::kleibergen, Method::lc_robust};
}

ReplicateOutcome analyze_replicate(const SimulationConfig& config, const SimulatedData& data,
                                   const std::vector<Method>& methods, const DistortionLadder& ladder) {
    ReplicateOutcome out;
    out.seed = data.seed;
    out.summary = data.summary;
    out.truth = data.truth;
    const auto& s = data.summary;
    const double alpha = config.alpha;
    const LcCalibration& cal = ladder.levels.front();

    try {
        out.cond_f = conditional_f_report(s);
    } catch (const Error& e) {
        out.errors.push_back(std::string("conditional F: ") + e.what());
        out.cond_f.min_f = kNaN;
    }
    try {
        out.ivw = ivw_estimate(s);
    } catch (const Error& e) {
        out.errors.push_back(std::string("ivw: ") + e.what());
    }
    try {
        out.gmm = gmm_estimate(s);
    } catch (const Error& e) {
        out.errors.push_back(std::string("gmm: ") + e.what());
    }

    const double z = normal_quantile(1.0 - alpha / 2.0);
    const auto interval = [&](const std::optional<Estimate>& est) {
        MethodOutcome m;
        if (!est) return m;
        m.evaluated = true;
        m.covered = std::abs(est->theta(0) - data.truth(0)) <= z * est->se(0);
        m.rejects_null = std::abs(est->theta(0)) > z * est->se(0);
        return m;
    };
    out.methods["ivw_ci"] = interval(out.ivw);
    out.methods["gmm_ci"] = interval(out.gmm);

    const bool want_koh = std::find(methods.begin(), methods.end(), Method::kleibergen_oh) != methods.end();
    const StatSelection which{true, true, true, want_koh};
    const VectorXd zero = VectorXd::Zero(s.K());
    const auto at_truth = evaluate_point(data.truth, s, which);
    const auto at_zero = evaluate_point(zero, s, which);

    const double chi_k = chi2_quantile(1.0 - alpha, static_cast<int>(s.K()));
    const double chi_j = chi2_quantile(1.0 - alpha, static_cast<int>(s.J()));
    const auto pick = [&](Method m, const PointStatistics& p, const VectorXd& theta) -> std::pair<double, double> {
        switch (m) {
            case Method::wald:
                if (!out.gmm) return {kNaN, chi_k};
                return {wald_stat(theta, *out.gmm, s.n_x), chi_k};
            case Method::andrews_wald: return {p.andrews_wald, chi_k};
            case Method::ar: return {p.ar, chi_j};
            case Method::kleibergen: return {p.kstar, chi_k};
            case Method::kleibergen_oh: return {p.kleibergen_oh, chi_k};
            case Method::lc_robust: return {p.kstar + cal.a * p.ar, cal.quantile};
            case Method::cs_p: return {p.kstar + cal.a * p.ar, chi_k};
        }
        return {kNaN, 0.0};
    };
    for (Method m : methods) {
        MethodOutcome mo;
        try {
            const auto [v0, c0] = pick(m, at_truth, data.truth);
            const auto [vz, cz] = pick(m, at_zero, zero);
            if (!std::isnan(v0) && !std::isnan(vz)) {
                mo.evaluated = true;
                mo.covered = v0 <= c0;
                mo.rejects_null = vz > cz;
            }
        } catch (const Error& e) {
            out.errors.push_back(to_string(m) + ": " + e.what());
        }
        out.methods[to_string(m)] = mo;
    }

    if (config.evaluate_grid) {
        const auto grid = ThetaGrid::from_ranges(config.grid);
        GridRequest req;
        req.kstar = true;
        req.andrews_wald = true;
        req.kleibergen_oh = want_koh;
        req.wald_estimate = out.gmm ? &*out.gmm : nullptr;
        try {
            const auto stats = evaluate_grid(grid, s, req, 1);
            for (Method m : methods) {
                if (m == Method::wald && !out.gmm) continue;
                const auto set = set_from_statistics(m, grid, stats, s, alpha, &cal);
                auto& mo = out.methods[to_string(m)];
                mo.area = static_cast<double>(set.area);
                mo.empty = set.empty;
            }
            const auto cut = distortion_cutoff(grid, stats, s, ladder);
            out.gamma_hat = cut.gamma_hat;
            out.gamma_determined = cut.determined;
        } catch (const Error& e) {
            out.errors.push_back(std::string("grid: ") + e.what());
        }
    }
    return out;
}

std::vector<ReplicateOutcome> run_replicates(const SimulationConfig& config, const std::vector<Method>& methods) {
    validate_config(config);
    const StudyCalibration calibration(config, {config.num_instruments()}, config.evaluate_grid);
    const auto& ladder = calibration.ladder(config.num_instruments());
    std::vector<ReplicateOutcome> reps(static_cast<std::size_t>(config.replicates));
    parallel_for(reps.size(), config.threads, [&](std::size_t i) {
        try {
            const auto data = simulate_dataset(config, i);
            reps[i] = analyze_replicate(config, data, methods, ladder);
        } catch (const std::exception& e) {
            reps[i].seed = replicate_seed(config.master_seed, i);
            reps[i].cond_f.min_f = kNaN;
            reps[i].errors.push_back(std::string("replicate failed: ") + e.what());
        }
        reps[i].index = i;
    });
    return reps;
}

StudyResult run_study(const SimulationConfig& config, const std::vector<double>& mu_list,
                      const std::vector<double>& xi_list, const std::vector<Method>& methods, bool keep_replicates) {
    StudyResult result;
    for (double mu : mu_list) {
        for (double xi : xi_list) {
            SimulationConfig cell = config;
            cell.mu = mu;
            cell.xi = xi;
            auto reps = run_replicates(cell, methods);

            std::vector<double> min_f, gamma_hat;
            for (const auto& r : reps) {
                if (!std::isnan(r.cond_f.min_f)) min_f.push_back(r.cond_f.min_f);
                if (!std::isnan(r.gamma_hat)) gamma_hat.push_back(r.gamma_hat);
            }
            for (const auto& tag : outcome_tags(methods)) {
                StudyRow row;
                row.mu = mu;
                row.xi = xi;
                row.method = tag;
                row.replicates = static_cast<int>(reps.size());
                std::vector<double> covered, power, area, b1, b2;
                for (const auto& r : reps) {
                    const auto it = r.methods.find(tag);
                    if (it == r.methods.end() || !it->second.evaluated) continue;
                    covered.push_back(it->second.covered ? 1.0 : 0.0);
                    power.push_back(it->second.rejects_null ? 1.0 : 0.0);
                    if (!std::isnan(it->second.area)) area.push_back(it->second.area);
                    const auto& est = tag == "ivw_ci" ? r.ivw : (tag == "gmm_ci" ? r.gmm : std::optional<Estimate>{});
                    if (est) {
                        b1.push_back(est->theta(0) - r.truth(0));
                        b2.push_back(est->theta(1) - r.truth(1));
                    }
                }
                row.evaluated = static_cast<int>(covered.size());
                row.coverage = mean_of(covered);
                row.coverage_se = std::sqrt(row.coverage * (1.0 - row.coverage) / std::max<double>(1.0, covered.size()));
                row.power = mean_of(power);
                row.mean_area = mean_of(area);
                row.mean_bias_1 = mean_of(b1);
                row.mean_bias_2 = mean_of(b2);
                row.mean_min_f = mean_of(min_f);
                row.mean_gamma_hat = mean_of(gamma_hat);
                row.median_gamma_hat = median_of(gamma_hat);
                result.rows.push_back(row);
            }
            if (keep_replicates) {
                for (auto& r : reps) result.replicates.push_back(std::move(r));
            }
        }
    }
    return result;
}

ScreeningResult screening_experiment(const SimulationConfig& config, double threshold, bool keep_replicates) {
    const std::vector<Method> methods{Method::wald, Method::andrews_wald, Method::ar, Method::kleibergen,
                                      Method::lc_robust};
    // Coverage only needs the statistics at theta0; areas are not reported here.
    SimulationConfig grid_free = config;
    grid_free.evaluate_grid = false;
    auto reps = run_replicates(grid_free, methods);
    ScreeningResult result;

    std::vector<double> min_f;
    for (const auto& r : reps) {
        if (!std::isnan(r.cond_f.min_f)) min_f.push_back(r.cond_f.min_f);
    }
    for (const auto& tag : outcome_tags(methods)) {
        ScreeningRow row;
        row.mu = config.mu;
        row.xi = config.xi;
        row.method = tag;
        row.replicates = static_cast<int>(reps.size());
        row.threshold = threshold;
        std::vector<double> all, screened;
        for (const auto& r : reps) {
            const auto it = r.methods.find(tag);
            if (it == r.methods.end() || !it->second.evaluated || std::isnan(r.cond_f.min_f)) continue;
            const double c = it->second.covered ? 1.0 : 0.0;
            all.push_back(c);
            if (r.cond_f.min_f >= threshold) screened.push_back(c);
        }
        row.screened = static_cast<int>(screened.size());
        row.screened_fraction = all.empty() ? kNaN : static_cast<double>(screened.size()) / all.size();
        row.coverage_all = mean_of(all);
        row.coverage_all_se = std::sqrt(row.coverage_all * (1 - row.coverage_all) / std::max<double>(1.0, all.size()));
        if (!screened.empty()) {
            row.coverage_screened = mean_of(screened);
            row.coverage_screened_se =
                std::sqrt(row.coverage_screened * (1 - row.coverage_screened) / static_cast<double>(screened.size()));
        }
        row.mean_min_f = mean_of(min_f);
        result.rows.push_back(row);
    }
    const int kept = result.rows.empty() ? 0 : result.rows.front().screened;
    if (kept == 0) {
        result.warnings.push_back("no replicate passed the screening threshold " + num(threshold));
    } else if (kept < 30) {
        result.warnings.push_back("only " + std::to_string(kept) + " replicates passed screening");
    }
    if (keep_replicates) result.replicates = std::move(reps);
    return result;
}

double tune_mu_for_mean_min_f(const SimulationConfig& config, double target, int pilot_replicates) {
    if (!(target > 0.0)) throw InputError("target mean F must be positive");
    const auto mean_min_f = [&](double mu) {
        SimulationConfig c = config;
        c.mu = mu;
        std::vector<double> f(static_cast<std::size_t>(pilot_replicates), kNaN);
        parallel_for(f.size(), config.threads, [&](std::size_t i) {
            try {
                f[i] = conditional_f_report(simulate_dataset(c, i).summary).min_f;
            } catch (const std::exception&) {
            }
        });
        std::vector<double> ok;
        for (double v : f) {
            if (!std::isnan(v)) ok.push_back(v);
        }
        return mean_of(ok);
    };
    double lo = std::log(0.05);
    double hi = std::log(500.0);
    for (int i = 0; i < 40; ++i) {
        const double mid = 0.5 * (lo + hi);
        (mean_min_f(std::exp(mid)) >= target ? hi : lo) = mid;
        if (hi - lo < 1e-4) break;
    }
    return std::exp(hi);
}

SelectionStudy selection_experiment(const SimulationConfig& config, const std::vector<double>& tau_list,
                                    const std::vector<double>& mu_list) {
    SelectionStudy study;
    SimulationConfig base = config;
    base.extra_blocks = 1;
    validate_config(base);
    const StudyCalibration calibration(base, {4, 8}, true);
    const auto grid = ThetaGrid::from_ranges(base.grid);
    const std::vector<Index> core_rows{0, 1, 2, 3};

    for (double mu : mu_list) {
        for (double tau : tau_list) {
            SimulationConfig cell = base;
            cell.mu = mu;
            cell.tau = tau;
            std::vector<SelectionReplicate> reps(static_cast<std::size_t>(cell.replicates));
            std::vector<char> ok(reps.size(), 0);
            parallel_for(reps.size(), cell.threads, [&](std::size_t i) {
                auto& rep = reps[i];
                rep.index = i;
                rep.tau = tau;
                rep.mu = mu;
                try {
                    const auto data = simulate_dataset(cell, i);
                    const auto core = build_multivariable_summary(subset_variants(data.tables, core_rows));
                    const auto& full = data.summary;
                    std::vector<SubsetScore> scores(2);
                    const auto analyze = [&](const MultivariableSummary& s, SubsetScore& score, bool& covered,
                                             double& area) {
                        const auto& ladder = calibration.ladder(static_cast<int>(s.J()));
                        GridRequest req;
                        req.kstar = true;
                        req.andrews_wald = true;
                        const auto stats = evaluate_grid(grid, s, req, 1);
                        const auto cut = distortion_cutoff(grid, stats, s, ladder);
                        area = static_cast<double>(cut.cs_r.area);
                        const auto at_truth = evaluate_point(data.truth, s, StatSelection{true, true, false, false});
                        covered = at_truth.kstar + cut.cal_min.a * at_truth.ar <= cut.cal_min.quantile;
                        score.ok = true;
                        score.num_instruments = static_cast<std::size_t>(s.J());
                        score.min_f = conditional_f_report(s).min_f;
                        if (cut.determined) score.gamma_hat = cut.gamma_hat;
                    };
                    analyze(core, scores[0], rep.core_covered, rep.core_area);
                    analyze(full, scores[1], rep.full_covered, rep.full_area);
                    rep.core_min_f = scores[0].min_f;
                    rep.full_min_f = scores[1].min_f;
                    rep.core_gamma = scores[0].gamma_hat;
                    rep.full_gamma = scores[1].gamma_hat;
                    rep.condf_picks_full = pick_best(scores, SelectionStrategy::max_min_condf).value_or(0) == 1;
                    rep.gamma_picks_full = pick_best(scores, SelectionStrategy::min_distortion).value_or(0) == 1;
                    ok[i] = 1;
                } catch (const std::exception&) {
                    ok[i] = 0;
                }
            });

            struct Acc {
                std::vector<double> cov, area;
                std::vector<double> full_rate;
            };
            std::map<std::string, Acc> acc;
            const std::vector<std::string> policies{"core", "full", "post_condf", "post_gamma"};
            for (std::size_t i = 0; i < reps.size(); ++i) {
                if (!ok[i]) continue;
                const auto& r = reps[i];
                const auto add = [&](const std::string& p, bool use_full) {
                    acc[p].cov.push_back((use_full ? r.full_covered : r.core_covered) ? 1.0 : 0.0);
                    acc[p].area.push_back(use_full ? r.full_area : r.core_area);
                };
                add("core", false);
                add("full", true);
                add("post_condf", r.condf_picks_full);
                add("post_gamma", r.gamma_picks_full);
                acc["post_condf"].full_rate.push_back(r.condf_picks_full ? 1.0 : 0.0);
                acc["post_gamma"].full_rate.push_back(r.gamma_picks_full ? 1.0 : 0.0);
            }
            for (const auto& p : policies) {
                SelectionRow row;
                row.mu = mu;
                row.tau = tau;
                row.policy = p;
                const auto& a = acc[p];
                row.replicates = static_cast<int>(a.cov.size());
                row.coverage = mean_of(a.cov);
                row.coverage_se = std::sqrt(row.coverage * (1 - row.coverage) / std::max<double>(1.0, a.cov.size()));
                row.mean_area = mean_of(a.area);
                row.full_selection_rate = a.full_rate.empty() ? kNaN : mean_of(a.full_rate);
                study.rows.push_back(row);
            }
            for (std::size_t i = 0; i < reps.size(); ++i) {
                if (ok[i]) study.replicates.push_back(reps[i]);
            }
        }
    }
    return study;
}

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
    out << "design,mu,xi,method,replicates,evaluated,coverage,coverage_se,power,mean_area,mean_bias_1,mean_bias_2,"
           "mean_min_f,mean_gamma_hat,median_gamma_hat\n";
    for (const auto& r : rows) {
        out << "baseline," << num(r.mu) << ',' << num(r.xi) << ',' << r.method << ',' << r.replicates << ','
            << r.evaluated << ',' << num(r.coverage) << ',' << num(r.coverage_se) << ',' << num(r.power) << ','
            << num(r.mean_area) << ',' << num(r.mean_bias_1) << ',' << num(r.mean_bias_2) << ',' << num(r.mean_min_f)
            << ',' << num(r.mean_gamma_hat) << ',' << num(r.median_gamma_hat) << '\n';
    }
}

void write_screening_csv(std::ostream& out, const std::vector<ScreeningRow>& rows) {
    out << "design,mu,xi,method,replicates,threshold,screened,screened_fraction,coverage_all,coverage_all_se,"
           "coverage_screened,coverage_screened_se,mean_min_f\n";
    for (const auto& r : rows) {
        out << "screening," << num(r.mu) << ',' << num(r.xi) << ',' << r.method << ',' << r.replicates << ','
            << num(r.threshold) << ',' << r.screened << ',' << num(r.screened_fraction) << ',' << num(r.coverage_all)
            << ',' << num(r.coverage_all_se) << ',' << num(r.coverage_screened) << ','
            << num(r.coverage_screened_se) << ',' << num(r.mean_min_f) << '\n';
    }
}

void write_selection_csv(std::ostream& out, const std::vector<SelectionRow>& rows) {
    out << "design,mu,tau,policy,replicates,coverage,coverage_se,mean_area,full_selection_rate\n";
    for (const auto& r : rows) {
        out << "selection," << num(r.mu) << ',' << num(r.tau) << ',' << r.policy << ',' << r.replicates << ','
            << num(r.coverage) << ',' << num(r.coverage_se) << ',' << num(r.mean_area) << ','
            << num(r.full_selection_rate) << '\n';
    }
}

void write_replicates_csv(std::ostream& out, const std::vector<ReplicateOutcome>& reps,
                          const std::vector<std::string>& method_tags) {
    out << "replicate,seed,min_f,gamma_hat,ivw_theta_1,ivw_theta_2,gmm_theta_1,gmm_theta_2";
    for (const auto& t : method_tags) out << ",covered_" << t << ",rejects_null_" << t << ",area_" << t;
    out << ",errors\n";
    for (const auto& r : reps) {
        out << r.index << ',' << r.seed << ',' << num(r.cond_f.min_f) << ',' << num(r.gamma_hat);
        for (const auto* est : {&r.ivw, &r.gmm}) {
            if (*est) {
                out << ',' << num((*est)->theta(0)) << ',' << num((*est)->theta(1));
            } else {
                out << ",NA,NA";
            }
        }
        for (const auto& t : method_tags) {
            const auto it = r.methods.find(t);
            if (it == r.methods.end() || !it->second.evaluated) {
                out << ",NA,NA,NA";
            } else {
                out << ',' << int(it->second.covered) << ',' << int(it->second.rejects_null) << ','
                    << num(it->second.area);
            }
        }
        out << ',' << r.errors.size() << '\n';
    }
}

void write_selection_replicates_csv(std::ostream& out, const std::vector<SelectionReplicate>& reps) {
    out << "replicate,mu,tau,core_covered,full_covered,core_area,full_area,core_min_f,full_min_f,core_gamma_hat,"
           "full_gamma_hat,condf_picks_full,gamma_picks_full\n";
    for (const auto& r : reps) {
        out << r.index << ',' << num(r.mu) << ',' << num(r.tau) << ',' << int(r.core_covered) << ','
            << int(r.full_covered) << ',' << num(r.core_area) << ',' << num(r.full_area) << ',' << num(r.core_min_f)
            << ',' << num(r.full_min_f) << ',' << (r.core_gamma ? num(*r.core_gamma) : "NA") << ','
            << (r.full_gamma ? num(*r.full_gamma) : "NA") << ',' << int(r.condf_picks_full) << ','
            << int(r.gamma_picks_full) << '\n';
    }
}

}  // namespace mvmr

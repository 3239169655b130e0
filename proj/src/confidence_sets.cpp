#include "mvmr/confidence_sets.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "mvmr/errors.hpp"
#include "mvmr/parallel.hpp"
#include "mvmr/robust_stats.hpp"

namespace mvmr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kMaxDiagnostics = 20;

std::string chi2_label(int df, double alpha) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "chi2_%d(%.6g)", df, 1.0 - alpha);
    return buf;
}

std::string lc_label(const LcCalibration& cal, int J, int K) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "q(%.6g; a=%.6g, J=%d, K=%d)", 1.0 - cal.alpha, cal.a, J, K);
    return buf;
}

const std::vector<double>& require(const std::vector<double>& v, const char* name) {
    if (v.empty()) throw InputError(std::string("statistic not evaluated on the grid: ") + name);
    return v;
}

std::vector<double> combine(const std::vector<double>& kstar, const std::vector<double>& ar, double a) {
    std::vector<double> out(kstar.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = kstar[i] + a * ar[i];
    return out;
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::wald: return "wald";
        case Method::andrews_wald: return "andrews_wald";
        case Method::ar: return "ar";
        case Method::kleibergen: return "kleibergen";
        case Method::lc_robust: return "lc_robust";
        case Method::cs_p: return "cs_p";
        case Method::kleibergen_oh: return "kleibergen_oh";
    }
    return "unknown";
}

Method parse_method(const std::string& tag) {
    if (tag == "wald") return Method::wald;
    if (tag == "andrews_wald" || tag == "aw") return Method::andrews_wald;
    if (tag == "ar") return Method::ar;
    if (tag == "kleibergen") return Method::kleibergen;
    if (tag == "lc_robust" || tag == "lc") return Method::lc_robust;
    if (tag == "cs_p") return Method::cs_p;
    if (tag == "kleibergen_oh" || tag == "koh") return Method::kleibergen_oh;
    throw InputError("unknown method tag '" + tag + "'");
}

GridStatistics evaluate_grid(const ThetaGrid& grid, const MultivariableSummary& s, const GridRequest& request,
                             unsigned threads) {
    if (grid.size() == 0) throw InputError("grid is empty");
    if (static_cast<Eigen::Index>(grid.dims()) != s.K()) {
        throw InputError("grid has " + std::to_string(grid.dims()) + " axes but K=" + std::to_string(s.K()));
    }
    validate_summary(s);
    const std::size_t n = grid.size();
    GridStatistics out;
    out.ar.resize(n);
    if (request.kstar) out.kstar.resize(n);
    if (request.andrews_wald) out.andrews_wald.resize(n);
    if (request.kleibergen_oh) out.kleibergen_oh.resize(n);
    if (request.wald_estimate) out.wald.resize(n);
    std::vector<std::string> errors(n);

    const StatSelection which{request.ar, request.kstar, request.andrews_wald, request.kleibergen_oh};
    parallel_for(n, threads, [&](std::size_t i) {
        const Eigen::VectorXd theta = grid.point(i);
        const auto ps = evaluate_point(theta, s, which);
        out.ar[i] = ps.ar;
        if (request.kstar) out.kstar[i] = ps.kstar;
        if (request.andrews_wald) out.andrews_wald[i] = ps.andrews_wald;
        if (request.kleibergen_oh) out.kleibergen_oh[i] = ps.kleibergen_oh;
        errors[i] = ps.error;
        if (request.wald_estimate) {
            try {
                out.wald[i] = wald_stat(theta, *request.wald_estimate, s.n_x);
            } catch (const Error& e) {
                out.wald[i] = kNaN;
                errors[i] += (errors[i].empty() ? "" : "; ") + std::string(e.what());
            }
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) out.failures.push_back({i, std::move(errors[i])});
    }
    return out;
}

ConfidenceSetResult make_set(Method method, const ThetaGrid& grid, const std::vector<double>& values,
                             double critical_value, std::string label, double alpha,
                             const std::vector<PointFailure>& failures, bool keep_stats) {
    ConfidenceSetResult r;
    r.method = method;
    r.alpha = alpha;
    r.critical_value = critical_value;
    r.critical_value_label = std::move(label);
    const std::size_t n = grid.size();
    if (values.size() != n) throw InputError("statistic vector does not match the grid");
    r.member.assign(n, 0);
    std::size_t fi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = values[i];
        if (std::isnan(v)) {
            ++r.failed_points;
            if (r.failures.size() < kMaxDiagnostics) {
                while (fi < failures.size() && failures[fi].index < i) ++fi;
                const bool known = fi < failures.size() && failures[fi].index == i;
                r.failures.push_back({i, known ? failures[fi].message : "statistic evaluation failed"});
            }
            continue;
        }
        if (v <= critical_value) {
            r.member[i] = 1;
            ++r.area;
            if (!r.touches_boundary && grid.on_edge(i)) r.touches_boundary = true;
        }
    }
    r.empty = r.area == 0;
    r.unreliable = static_cast<double>(r.failed_points) > 0.001 * static_cast<double>(n);
    if (keep_stats) r.stat_values = values;
    return r;
}

ConfidenceSetResult set_from_statistics(Method method, const ThetaGrid& grid, const GridStatistics& stats,
                                        const MultivariableSummary& s, double alpha, const LcCalibration* cal,
                                        bool keep_stats) {
    const int J = static_cast<int>(s.J());
    const int K = static_cast<int>(s.K());
    const double chi_k = chi2_quantile(1.0 - alpha, K);
    switch (method) {
        case Method::wald:
            return make_set(method, grid, require(stats.wald, "wald"), chi_k, chi2_label(K, alpha), alpha,
                            stats.failures, keep_stats);
        case Method::andrews_wald:
            return make_set(method, grid, require(stats.andrews_wald, "andrews_wald"), chi_k, chi2_label(K, alpha),
                            alpha, stats.failures, keep_stats);
        case Method::ar:
            return make_set(method, grid, require(stats.ar, "ar"), chi2_quantile(1.0 - alpha, J),
                            chi2_label(J, alpha), alpha, stats.failures, keep_stats);
        case Method::kleibergen:
            return make_set(method, grid, require(stats.kstar, "kleibergen"), chi_k, chi2_label(K, alpha), alpha,
                            stats.failures, keep_stats);
        case Method::kleibergen_oh:
            return make_set(method, grid, require(stats.kleibergen_oh, "kleibergen_oh"), chi_k, chi2_label(K, alpha),
                            alpha, stats.failures, keep_stats);
        case Method::lc_robust:
        case Method::cs_p: {
            if (!cal) throw InputError(to_string(method) + " needs a calibration");
            const auto values = combine(require(stats.kstar, "kleibergen"), require(stats.ar, "ar"), cal->a);
            if (method == Method::lc_robust) {
                return make_set(method, grid, values, cal->quantile, lc_label(*cal, J, K), alpha, stats.failures,
                                keep_stats);
            }
            return make_set(method, grid, values, chi_k, chi2_label(K, alpha), alpha, stats.failures, keep_stats);
        }
    }
    throw InputError("unknown method");
}

ConfidenceSetResult invert_confidence_set(Method method, const ThetaGrid& grid, const MultivariableSummary& s,
                                          double alpha, const LcCalibration* cal, const InversionOptions& options) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    GridRequest req;
    req.ar = true;
    req.kstar = method == Method::kleibergen || method == Method::lc_robust || method == Method::cs_p;
    req.andrews_wald = method == Method::andrews_wald;
    req.kleibergen_oh = method == Method::kleibergen_oh;
    Estimate fitted;
    if (method == Method::wald) {
        if (options.wald_estimate) {
            req.wald_estimate = options.wald_estimate;
        } else {
            fitted = gmm_estimate(s);
            req.wald_estimate = &fitted;
        }
    }
    const auto stats = evaluate_grid(grid, s, req, options.threads);
    return set_from_statistics(method, grid, stats, s, alpha, cal, options.keep_stats);
}

DistortionCutoff distortion_cutoff(const ThetaGrid& grid, const GridStatistics& stats, const MultivariableSummary& s,
                                   const DistortionLadder& ladder) {
    if (ladder.levels.empty()) throw InputError("distortion ladder is empty");
    const double alpha = ladder.alpha;
    DistortionCutoff out;
    out.cal_min = ladder.levels.front();
    out.cs_n = set_from_statistics(Method::andrews_wald, grid, stats, s, alpha, nullptr);
    out.cs_r = set_from_statistics(Method::lc_robust, grid, stats, s, alpha, &out.cal_min);

    const double chi_k = chi2_quantile(1.0 - alpha, static_cast<int>(s.K()));
    const auto& kstar = require(stats.kstar, "kleibergen");
    const auto& ar = stats.ar;
    for (std::size_t l = 0; l < ladder.levels.size(); ++l) {
        const double a = ladder.levels[l].a;
        bool contained = true;
        for (std::size_t i = 0; i < grid.size() && contained; ++i) {
            const double v = kstar[i] + a * ar[i];
            if (v <= chi_k && !out.cs_n.member[i]) contained = false;
        }
        if (contained) {
            out.determined = true;
            out.gamma_hat = ladder.gammas[l];
            return out;
        }
    }
    out.gamma_hat = ladder.gamma_cap;
    return out;
}

DistortionCutoff distortion_cutoff(const ThetaGrid& grid, const MultivariableSummary& s, double alpha,
                                   double gamma_min, const DistortionOptions& options) {
    const CalibrationDraws draws(static_cast<int>(s.J()), static_cast<int>(s.K()), options.draws, options.seed);
    const auto ladder = build_distortion_ladder(draws, alpha, gamma_min, options.gamma_step,
                                                options.gamma_cap.value_or(1.0 - alpha));
    GridRequest req;
    req.kstar = true;
    req.andrews_wald = true;
    const auto stats = evaluate_grid(grid, s, req, options.threads);
    return distortion_cutoff(grid, stats, s, ladder);
}

std::vector<std::optional<std::pair<double, double>>> projected_intervals(const ThetaGrid& grid,
                                                                          const ConfidenceSetResult& set) {
    std::vector<std::optional<std::pair<double, double>>> out(grid.dims());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!set.member[i]) continue;
        const auto p = grid.point(i);
        for (std::size_t d = 0; d < grid.dims(); ++d) {
            const double v = p(static_cast<Eigen::Index>(d));
            if (!out[d]) {
                out[d] = std::make_pair(v, v);
            } else {
                out[d]->first = std::min(out[d]->first, v);
                out[d]->second = std::max(out[d]->second, v);
            }
        }
    }
    return out;
}

}  // namespace mvmr

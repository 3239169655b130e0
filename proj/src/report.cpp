#include "mvmr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "mvmr/errors.hpp"

namespace mvmr {

namespace {

using nlohmann::ordered_json;

constexpr std::size_t kMaxGridPoints = 5'000'000;

ordered_json vec_json(const Eigen::VectorXd& v) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

ordered_json mat_json(const Eigen::MatrixXd& m) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
    return a;
}

// NaN is not representable in JSON; write null instead.
ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json estimate_json(const Estimate& e) {
    ordered_json j;
    j["theta"] = vec_json(e.theta);
    j["se"] = vec_json(e.se);
    j["cov"] = mat_json(e.cov);
    j["criterion"] = number(e.criterion_value);
    j["converged"] = e.converged;
    j["iterations"] = e.iterations;
    return j;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

bool wants(const AnalysisOptions& o, Method m) {
    return std::find(o.methods.begin(), o.methods.end(), m) != o.methods.end();
}

}  // namespace

std::vector<AxisRange> auto_grid(const Estimate& est) {
    std::vector<AxisRange> axes;
    for (Eigen::Index k = 0; k < est.theta.size(); ++k) {
        const double half = 10.0 * est.se(k);
        if (!(half > 0.0) || !std::isfinite(half)) throw NumericalError("cannot build an automatic grid: SE not finite");
        axes.push_back({est.theta(k) - half, est.theta(k) + half, 2.0 * half / 100.0});
    }
    return axes;
}

AnalysisResult run_analysis(const MultivariableSummary& s, const AnalysisOptions& o) {
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(o.gamma_min > 0.0 && o.gamma_min < 1.0 - o.alpha)) {
        throw InputError("gamma-min must lie in (0, 1 - alpha)");
    }
    if (o.methods.empty()) throw InputError("no methods requested");
    validate_summary(s);

    AnalysisResult r;
    r.summary = s;
    r.warnings = s.warnings;
    r.ivw = ivw_estimate(s);
    r.gmm = gmm_estimate(s);
    if (!r.gmm.converged) r.warnings.push_back("GMM optimizer did not report convergence");

    try {
        r.cond_f = conditional_f_report(s);
    } catch (const Error& e) {
        r.warnings.push_back(std::string("conditional F unavailable: ") + e.what());
    }
    try {
        r.kappa2 = solve_kappa2(r.gmm.theta, s);
    } catch (const Error& e) {
        r.warnings.push_back(std::string("overdispersion fit unavailable: ") + e.what());
    }

    if (o.grid) {
        r.grid_ranges = *o.grid;
    } else {
        r.grid_ranges = auto_grid(r.gmm);
        r.grid_auto = true;
    }
    if (static_cast<Eigen::Index>(r.grid_ranges.size()) != s.K()) {
        throw InputError("grid has " + std::to_string(r.grid_ranges.size()) + " axes but there are " +
                         std::to_string(s.K()) + " exposures");
    }
    double points = 1.0;
    for (const auto& ax : r.grid_ranges) points *= std::floor((ax.hi - ax.lo) / ax.step + 1e-9) + 1.0;
    if (points > static_cast<double>(kMaxGridPoints)) {
        throw InputError("grid has too many points (" + fmt(points) + "); pass a coarser --grid");
    }
    r.grid = ThetaGrid::from_ranges(r.grid_ranges);

    const CalibrationDraws draws(static_cast<int>(s.J()), static_cast<int>(s.K()), o.draws, o.seed);
    const auto ladder = build_distortion_ladder(draws, o.alpha, o.gamma_min, o.gamma_step, 1.0 - o.alpha);

    GridRequest req;
    req.kstar = true;
    req.andrews_wald = true;
    req.kleibergen_oh = wants(o, Method::kleibergen_oh);
    req.wald_estimate = wants(o, Method::wald) ? &r.gmm : nullptr;
    const auto stats = evaluate_grid(r.grid, s, req, o.threads);

    r.cutoff = distortion_cutoff(r.grid, stats, s, ladder);
    if (!r.cutoff.determined) {
        r.warnings.push_back("distortion cutoff undetermined: no gamma up to " + fmt(ladder.gamma_cap) +
                             " gives CS_P inside the non-robust set on this grid");
    }
    for (Method m : o.methods) {
        auto set = set_from_statistics(m, r.grid, stats, s, o.alpha, &r.cutoff.cal_min);
        const std::string tag = to_string(m);
        if (set.touches_boundary) {
            r.warnings.push_back(tag + " set touches the grid boundary and may be unbounded");
        }
        if (set.unreliable) {
            r.warnings.push_back(tag + " set unreliable: " + std::to_string(set.failed_points) +
                                 " grid points failed to evaluate");
        }
        if (set.empty && m == Method::ar) {
            r.warnings.push_back("ar set is empty; this may be due to excessive heterogeneity");
        } else if (set.empty) {
            r.warnings.push_back(tag + " set is empty on this grid");
        }
        r.sets.push_back(std::move(set));
    }
    return r;
}

ordered_json report_json(const AnalysisResult& r, const AnalysisOptions& o, const InputDigest& in) {
    const auto& s = r.summary;
    ordered_json j;
    j["schema_version"] = kReportSchemaVersion;

    ordered_json inputs;
    inputs["exposures"] = in.paths.exposures.string();
    inputs["outcome"] = in.paths.outcome.string();
    inputs["ld"] = in.paths.ld.string();
    inputs["exposure_cor"] = in.paths.exposure_cor.string();
    inputs["exposure_names"] = in.exposure_names;
    inputs["J"] = s.J();
    inputs["K"] = s.K();
    inputs["n_x"] = s.n_x;
    inputs["n_y"] = s.n_y;
    inputs["c"] = s.c();
    inputs["covariance_scale"] =
        "covariances on the sqrt(n_x) scale; the outcome covariance embeds c = n_x/n_y through the n_x multiplier";
    j["inputs"] = inputs;

    ordered_json opts;
    opts["alpha"] = o.alpha;
    opts["gamma_min"] = o.gamma_min;
    opts["gamma_step"] = o.gamma_step;
    ordered_json methods = ordered_json::array();
    for (Method m : o.methods) methods.push_back(to_string(m));
    opts["methods"] = methods;
    j["options"] = opts;

    ordered_json est;
    est["ivw"] = estimate_json(r.ivw);
    est["gmm"] = estimate_json(r.gmm);
    j["estimates"] = est;

    if (r.cond_f) {
        ordered_json cf;
        cf["f_stats"] = vec_json(r.cond_f->f_stats);
        cf["min_f"] = r.cond_f->min_f;
        j["conditional_f"] = cf;
    } else {
        j["conditional_f"] = nullptr;
    }

    if (r.kappa2) {
        ordered_json k;
        k["at"] = "gmm";
        k["kappa2"] = r.kappa2->kappa2;
        k["truncated_at_zero"] = r.kappa2->at_boundary;
        j["overdispersion"] = k;
    } else {
        j["overdispersion"] = nullptr;
    }

    const auto& cal = r.cutoff.cal_min;
    ordered_json c;
    c["seed"] = cal.seed;
    c["draws"] = cal.draws;
    c["gamma"] = cal.gamma;
    c["a"] = cal.a;
    c["quantile"] = cal.quantile;
    c["a_at_boundary"] = cal.at_boundary;
    j["calibration"] = c;

    ordered_json cut;
    cut["determined"] = r.cutoff.determined;
    cut["gamma_hat"] = r.cutoff.determined ? ordered_json(r.cutoff.gamma_hat) : ordered_json(nullptr);
    cut["gamma_min"] = o.gamma_min;
    cut["search_cap"] = 1.0 - o.alpha;
    j["distortion_cutoff"] = cut;

    ordered_json g;
    g["auto"] = r.grid_auto;
    ordered_json axes = ordered_json::array();
    for (std::size_t d = 0; d < r.grid.dims(); ++d) {
        ordered_json ax;
        ax["lo"] = r.grid.axis(d).front();
        ax["hi"] = r.grid.axis(d).back();
        ax["step"] = r.grid_ranges[d].step;
        ax["points"] = r.grid.axis(d).size();
        axes.push_back(ax);
    }
    g["axes"] = axes;
    g["evaluations"] = r.grid.size();
    j["grid"] = g;

    ordered_json sets = ordered_json::array();
    for (const auto& set : r.sets) {
        ordered_json e;
        e["method"] = to_string(set.method);
        e["alpha"] = set.alpha;
        e["level"] = 1.0 - set.alpha;
        e["critical_value"] = set.critical_value;
        e["critical_value_label"] = set.critical_value_label;
        e["area"] = set.area;
        e["empty"] = set.empty;
        e["touches_boundary"] = set.touches_boundary;
        e["failed_points"] = set.failed_points;
        e["unreliable"] = set.unreliable;
        ordered_json fails = ordered_json::array();
        for (const auto& f : set.failures) {
            ordered_json fj;
            fj["index"] = f.index;
            fj["message"] = f.message;
            fails.push_back(fj);
        }
        e["failures"] = fails;
        ordered_json proj = ordered_json::array();
        const auto intervals = projected_intervals(r.grid, set);
        for (std::size_t d = 0; d < intervals.size(); ++d) {
            ordered_json p;
            p["exposure"] = d < in.exposure_names.size() ? in.exposure_names[d] : "theta_" + std::to_string(d + 1);
            p["kind"] = "grid projection (not a marginal interval)";
            p["lower"] = intervals[d] ? ordered_json(intervals[d]->first) : ordered_json(nullptr);
            p["upper"] = intervals[d] ? ordered_json(intervals[d]->second) : ordered_json(nullptr);
            proj.push_back(p);
        }
        e["projected_intervals"] = proj;
        sets.push_back(e);
    }
    j["sets"] = sets;
    j["warnings"] = r.warnings;
    return j;
}

std::string dump_report(const ordered_json& report) { return report.dump(2) + "\n"; }

void write_sets_csv(std::ostream& out, const ThetaGrid& grid, const std::vector<ConfidenceSetResult>& sets) {
    for (std::size_t d = 0; d < grid.dims(); ++d) out << (d ? "," : "") << "theta_" << d + 1;
    for (const auto& s : sets) out << ",member_" << to_string(s.method);
    out << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto p = grid.point(i);
        for (Eigen::Index d = 0; d < p.size(); ++d) out << (d ? "," : "") << fmt(p(d));
        for (const auto& s : sets) out << ',' << int(s.member[i]);
        out << '\n';
    }
}

}  // namespace mvmr

#include "mvmr/robust_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvmr/core_stats.hpp"
#include "mvmr/errors.hpp"

namespace mvmr {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MatrixXd factor_or_throw(const MatrixXd& m, Eigen::LLT<MatrixXd>& llt) {
    llt.compute(m);
    if (llt.info() != Eigen::Success) throw NumericalError("Omega not PD");
    return m;
}

MatrixXd d_matrix(const VectorXd& theta, const MultivariableSummary& s, const VectorXd& omega_inv_g) {
    const Index K = s.K();
    MatrixXd D = s.exposure_assoc;
    for (Index k = 0; k < K; ++k) {
        for (Index m = 0; m < K; ++m) {
            if (theta(m) != 0.0) D.col(k).noalias() += theta(m) * (s.exposure_block(k, m) * omega_inv_g);
        }
    }
    return D;
}

// Projection of the whitened moment onto the whitened columns of `X`.
// Returns n_x * |P g~|^2 (capped at `ar`) and the coefficient vector.
struct Projection {
    double value = 0.0;
    VectorXd coef;
};

Projection project(const Eigen::LLT<MatrixXd>& llt, const VectorXd& g, const MatrixXd& X, double n_x, double ar,
                   const char* rank_message) {
    const MatrixXd Xw = llt.matrixL().solve(X);
    const VectorXd gw = llt.matrixL().solve(g);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
        throw NumericalError(std::string(rank_message) + " (rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(X.cols()) + ")");
    }
    Projection p;
    p.coef = qr.solve(gw);
    p.value = std::clamp(n_x * (Xw * p.coef).squaredNorm(), 0.0, ar);
    return p;
}

OverdispersionFit fit_kappa2(const MatrixXd& om, const VectorXd& g, double n_x, double c) {
    const auto J = static_cast<double>(g.size());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(om);
    const VectorXd lambda = eig.eigenvalues();
    const VectorXd z2 = (eig.eigenvectors().transpose() * g).array().square();
    const auto f = [&](double kappa2) {
        return n_x * (z2.array() / (lambda.array() + c * kappa2)).sum() - J;
    };
    OverdispersionFit fit;
    const double f0 = f(0.0);
    if (f0 <= 0.0) {
        fit.kappa2 = 0.0;
        fit.at_boundary = true;
        fit.residual = f0;
        return fit;
    }
    double lo = 0.0;
    double hi = std::max(lambda.maxCoeff() / c, std::numeric_limits<double>::min());
    for (int i = 0; i < 2000 && f(hi) > 0.0; ++i) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    // Pick the bracket end with the smaller residual.
    const double f_lo = f(lo);
    const double f_hi = f(hi);
    fit.kappa2 = std::abs(f_lo) <= std::abs(f_hi) ? lo : hi;
    fit.residual = std::abs(f_lo) <= std::abs(f_hi) ? f_lo : f_hi;
    return fit;
}

KStar kstar_with(const VectorXd& theta, const MultivariableSummary& s, const MatrixXd& om) {
    Eigen::LLT<MatrixXd> llt;
    factor_or_throw(om, llt);
    const VectorXd g = s.outcome_assoc - s.exposure_assoc * theta;
    const double ar = s.n_x * g.dot(llt.solve(g));
    const MatrixXd D = d_matrix(theta, s, llt.solve(g));
    const auto p = project(llt, g, D, s.n_x, ar, "unidentified direction: D(theta) is rank deficient");
    return {p.value, theta + p.coef};
}

}  // namespace

double ar_stat(const VectorXd& theta, const MultivariableSummary& s) { return s.n_x * gmm_criterion(theta, s); }

MatrixXd kleibergen_D(const VectorXd& theta, const MultivariableSummary& s) {
    Eigen::LLT<MatrixXd> llt;
    factor_or_throw(omega(theta, s), llt);
    return d_matrix(theta, s, llt.solve(moment_function(theta, s)));
}

KStar kstar_stat(const VectorXd& theta, const MultivariableSummary& s) { return kstar_with(theta, s, omega(theta, s)); }

AndrewsWald andrews_wald_stat(const VectorXd& theta, const MultivariableSummary& s) {
    Eigen::LLT<MatrixXd> llt;
    factor_or_throw(omega(theta, s), llt);
    const VectorXd g = moment_function(theta, s);
    const double ar = s.n_x * g.dot(llt.solve(g));
    const auto p = project(llt, g, s.exposure_assoc, s.n_x, ar, "collinear exposures");
    return {p.value, theta + p.coef};
}

double lc_stat(const VectorXd& theta, const MultivariableSummary& s, double a) {
    return kstar_stat(theta, s).value + a * ar_stat(theta, s);
}

OverdispersionFit solve_kappa2(const VectorXd& theta, const MultivariableSummary& s) {
    if (!(s.c() > 0.0)) throw InputError("overdispersion fit needs n_x / n_y > 0");
    return fit_kappa2(omega(theta, s), moment_function(theta, s), s.n_x, s.c());
}

double kleibergen_oh_stat(const VectorXd& theta, const MultivariableSummary& s) {
    MatrixXd om = omega(theta, s);
    const auto fit = fit_kappa2(om, moment_function(theta, s), s.n_x, s.c());
    if (fit.kappa2 > 0.0) om.diagonal().array() += s.c() * fit.kappa2;
    return kstar_with(theta, s, om).value;
}

PointStatistics evaluate_point(const VectorXd& theta, const MultivariableSummary& s, const StatSelection& which) {
    PointStatistics out;
    out.ar = out.kstar = out.andrews_wald = out.kleibergen_oh = kNaN;
    MatrixXd om;
    Eigen::LLT<MatrixXd> llt;
    try {
        om = omega(theta, s);
        llt.compute(om);
    } catch (const Error& e) {
        out.error = e.what();
        return out;
    }
    const VectorXd g = s.outcome_assoc - s.exposure_assoc * theta;
    const VectorXd wg = llt.solve(g);
    const double ar = s.n_x * g.dot(wg);
    out.ar = ar;
    const auto record = [&](const Error& e) {
        if (!out.error.empty()) out.error += "; ";
        out.error += e.what();
    };
    if (which.kstar) {
        try {
            out.kstar = project(llt, g, d_matrix(theta, s, wg), s.n_x, ar,
                                "unidentified direction: D(theta) is rank deficient")
                            .value;
        } catch (const Error& e) {
            record(e);
        }
    }
    if (which.andrews_wald) {
        try {
            out.andrews_wald = project(llt, g, s.exposure_assoc, s.n_x, ar, "collinear exposures").value;
        } catch (const Error& e) {
            record(e);
        }
    }
    if (which.kleibergen_oh) {
        try {
            const auto fit = fit_kappa2(om, g, s.n_x, s.c());
            if (fit.kappa2 > 0.0) {
                om.diagonal().array() += s.c() * fit.kappa2;
                out.kleibergen_oh = kstar_with(theta, s, om).value;
            } else {
                out.kleibergen_oh = std::isnan(out.kstar) ? kstar_with(theta, s, om).value : out.kstar;
            }
        } catch (const Error& e) {
            record(e);
        }
    }
    return out;
}

}  // namespace mvmr

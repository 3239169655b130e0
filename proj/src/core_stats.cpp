#include "mvmr/core_stats.hpp"

#include <cmath>
#include <limits>

#include "mvmr/detail/cue_solver.hpp"
#include "mvmr/errors.hpp"

namespace mvmr {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_theta(const VectorXd& theta, const MultivariableSummary& s) {
    if (theta.size() != s.K()) {
        throw InputError("theta has length " + std::to_string(theta.size()) + ", expected K=" +
                         std::to_string(s.K()));
    }
}

// K x K information matrix gamma' W^{-1} gamma; throws "collinear exposures" when singular.
MatrixXd weighted_design_inverse(const MatrixXd& gamma, const Eigen::LLT<MatrixXd>& weight) {
    const MatrixXd info = gamma.transpose() * weight.solve(gamma);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (info + info.transpose()));
    const double hi = eig.eigenvalues().maxCoeff();
    const double lo = eig.eigenvalues().minCoeff();
    if (!(hi > 0.0) || !(lo > 1e-12 * hi)) throw NumericalError("collinear exposures");
    return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

Estimate finish_estimate(const MultivariableSummary& s, Estimate est) {
    Eigen::LLT<MatrixXd> llt(omega(est.theta, s));
    est.cov = weighted_design_inverse(s.exposure_assoc, llt);
    est.se = (est.cov.diagonal() / s.n_x).cwiseSqrt();
    return est;
}

detail::CueProblem gmm_problem(const MultivariableSummary& s) {
    const Index J = s.J();
    const Index K = s.K();
    detail::CueProblem p;
    p.columns.resize(J, K + 1);
    p.columns.col(0) = s.outcome_assoc;
    p.columns.rightCols(K) = s.exposure_assoc;
    p.V.assign(static_cast<std::size_t>(K + 1), std::vector<MatrixXd>(static_cast<std::size_t>(K + 1)));
    p.V[0][0] = s.outcome_cov;
    for (Index k = 0; k < K; ++k) {
        p.V[0][static_cast<std::size_t>(k + 1)] = MatrixXd::Zero(J, J);
        p.V[static_cast<std::size_t>(k + 1)][0] = MatrixXd::Zero(J, J);
        for (Index m = 0; m < K; ++m) {
            p.V[static_cast<std::size_t>(k + 1)][static_cast<std::size_t>(m + 1)] = s.exposure_block(k, m);
        }
    }
    return p;
}

}  // namespace

VectorXd moment_function(const VectorXd& theta, const MultivariableSummary& s) {
    check_theta(theta, s);
    return s.outcome_assoc - s.exposure_assoc * theta;
}

MatrixXd omega(const VectorXd& theta, const MultivariableSummary& s) {
    check_theta(theta, s);
    const Index K = s.K();
    MatrixXd out = s.outcome_cov;
    for (Index k = 0; k < K; ++k) {
        if (theta(k) == 0.0) continue;
        for (Index m = 0; m < K; ++m) {
            if (theta(m) != 0.0) out.noalias() += (theta(k) * theta(m)) * s.exposure_block(k, m);
        }
    }
    out = 0.5 * (out + out.transpose());
    Eigen::LLT<MatrixXd> llt(out);
    if (llt.info() != Eigen::Success) throw NumericalError("Omega not PD");
    return out;
}

double gmm_criterion(const VectorXd& theta, const MultivariableSummary& s) {
    const VectorXd g = moment_function(theta, s);
    Eigen::LLT<MatrixXd> llt(omega(theta, s));
    return g.dot(llt.solve(g));
}

Estimate ivw_estimate(const MultivariableSummary& s) {
    validate_summary(s);
    Eigen::LLT<MatrixXd> llt(s.outcome_cov);
    if (llt.info() != Eigen::Success) throw NumericalError("outcome covariance is not positive definite");
    Estimate est;
    est.cov = weighted_design_inverse(s.exposure_assoc, llt);
    est.theta = est.cov * (s.exposure_assoc.transpose() * llt.solve(s.outcome_assoc));
    est.se = (est.cov.diagonal() / s.n_x).cwiseSqrt();
    est.criterion_value = gmm_criterion(est.theta, s);
    est.converged = true;
    return est;
}

Estimate gmm_estimate(const MultivariableSummary& s, const std::optional<VectorXd>& init, const GmmOptions& options) {
    validate_summary(s);
    VectorXd start;
    double start_value = std::numeric_limits<double>::infinity();
    if (init) {
        check_theta(*init, s);
        start = *init;
    } else {
        start = ivw_estimate(s).theta;
    }
    start_value = gmm_criterion(start, s);

    detail::CueOptions cue;
    cue.max_iterations = options.max_iterations;
    cue.step_tolerance = options.step_tolerance;
    const auto res = detail::minimize_cue_global(gmm_problem(s), start, cue);

    Estimate est;
    if (res.value <= start_value) {
        est.theta = res.d;
        est.criterion_value = res.value;
    } else {
        est.theta = start;
        est.criterion_value = start_value;
    }
    est.converged = res.converged;
    est.iterations = res.iterations;
    return finish_estimate(s, std::move(est));
}

double wald_stat(const VectorXd& theta, const Estimate& est, double n_x) {
    const VectorXd diff = est.theta - theta;
    Eigen::LLT<MatrixXd> llt(est.cov);
    if (llt.info() != Eigen::Success) throw NumericalError("estimate covariance is not positive definite");
    return n_x * diff.dot(llt.solve(diff));
}

ConditionalF conditional_f(const MultivariableSummary& s, Index k) {
    validate_summary(s);
    const Index J = s.J();
    const Index K = s.K();
    if (k < 0 || k >= K) throw InputError("exposure index out of range");
    const double scale = s.n_x / static_cast<double>(J - K + 1);

    ConditionalF out;
    if (K == 1) {
        Eigen::LLT<MatrixXd> llt(MatrixXd(s.exposure_block(0, 0)));
        if (llt.info() != Eigen::Success) throw NumericalError("exposure covariance block is not positive definite");
        const VectorXd g = s.exposure_assoc.col(0);
        out.f = scale * g.dot(llt.solve(g));
        out.delta = VectorXd(0);
        out.converged = true;
        return out;
    }

    // Exposure k first, remaining exposures after it in their original order.
    std::vector<Index> order{k};
    for (Index m = 0; m < K; ++m) {
        if (m != k) order.push_back(m);
    }
    detail::CueProblem p;
    p.columns.resize(J, K);
    p.V.assign(static_cast<std::size_t>(K), std::vector<MatrixXd>(static_cast<std::size_t>(K)));
    for (Index a = 0; a < K; ++a) {
        p.columns.col(a) = s.exposure_assoc.col(order[static_cast<std::size_t>(a)]);
        for (Index b = 0; b < K; ++b) {
            p.V[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                s.exposure_block(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
        }
    }

    // Unweighted least squares of gamma_k on gamma_{-k} as the starting point.
    const MatrixXd X = p.columns.rightCols(K - 1);
    VectorXd init = X.colPivHouseholderQr().solve(p.columns.col(0));
    if (!init.allFinite()) init = VectorXd::Zero(K - 1);

    detail::CueOptions cue;
    cue.max_iterations = 100;
    cue.step_tolerance = 1e-8;
    auto res = detail::minimize_cue_global(p, init, cue);
    if (!std::isfinite(res.value)) {
        // Inner weight not PD at the start: restart from perturbed points.
        for (int attempt = 1; attempt <= 5 && !std::isfinite(res.value); ++attempt) {
            VectorXd alt = init;
            alt.array() += 0.1 * attempt;
            res = detail::minimize_cue(p, alt, cue);
        }
        if (!std::isfinite(res.value)) {
            throw NumericalError("conditional F: weight matrix not positive definite for exposure " +
                                 std::to_string(k + 1));
        }
    }
    out.f = scale * res.value;
    out.delta = res.d;
    out.converged = res.converged;
    return out;
}

ConditionalFReport conditional_f_report(const MultivariableSummary& s) {
    ConditionalFReport rep;
    rep.f_stats.resize(s.K());
    for (Index k = 0; k < s.K(); ++k) {
        auto cf = conditional_f(s, k);
        rep.f_stats(k) = cf.f;
        rep.delta_at_min.push_back(std::move(cf.delta));
    }
    rep.min_f = rep.f_stats.minCoeff();
    return rep;
}

}  // namespace mvmr

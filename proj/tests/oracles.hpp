#pragma once

// Independent reference computations. Deliberately naive: dense Kronecker
// products, explicit inverses and brute-force grid searches, sharing no code
// with the library beyond the data types.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mvmr/summary_data.hpp"

namespace mvmr::oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
    return out;
}

/// Omega(theta) = Sigma_Gamma + (theta' (x) I_J) Sigma_gamma (theta (x) I_J).
inline MatrixXd dense_omega(const VectorXd& theta, const MultivariableSummary& s) {
    const MatrixXd phi = kron(theta.transpose(), MatrixXd::Identity(s.J(), s.J()));
    return s.outcome_cov + phi * s.exposure_cov * phi.transpose();
}

inline double dense_criterion(const VectorXd& theta, const MultivariableSummary& s) {
    const VectorXd g = s.outcome_assoc - s.exposure_assoc * theta;
    return g.dot(dense_omega(theta, s).inverse() * g);
}

/// Delta_k = cov(g, gamma_k) = -(theta' (x) I_J) Sigma_gamma (e_k (x) I_J).
inline MatrixXd score_matrix(const VectorXd& theta, const MultivariableSummary& s) {
    const Index J = s.J();
    const Index K = s.K();
    const MatrixXd phi = kron(theta.transpose(), MatrixXd::Identity(J, J));
    const MatrixXd W = dense_omega(theta, s).inverse();
    const VectorXd g = s.outcome_assoc - s.exposure_assoc * theta;
    MatrixXd D(J, K);
    for (Index k = 0; k < K; ++k) {
        MatrixXd ek = MatrixXd::Zero(K, 1);
        ek(k, 0) = 1.0;
        const MatrixXd delta = -phi * s.exposure_cov * kron(ek, MatrixXd::Identity(J, J));
        D.col(k) = s.exposure_assoc.col(k) - delta.transpose() * W * g;
    }
    return D;
}

/// K*(theta) through the explicit theta* formula with inverses.
inline double dense_kstar(const VectorXd& theta, const MultivariableSummary& s) {
    const MatrixXd W = dense_omega(theta, s).inverse();
    const VectorXd g = s.outcome_assoc - s.exposure_assoc * theta;
    const MatrixXd D = score_matrix(theta, s);
    const MatrixXd info = D.transpose() * W * D;
    const VectorXd step = info.inverse() * D.transpose() * W * g;
    return s.n_x * step.dot(info * step);
}

/// Wald statistic at theta using theta_bar(theta) and (gamma' W gamma)^{-1}.
inline double dense_andrews_wald(const VectorXd& theta, const MultivariableSummary& s) {
    const MatrixXd W = dense_omega(theta, s).inverse();
    const VectorXd g = s.outcome_assoc - s.exposure_assoc * theta;
    const MatrixXd info = s.exposure_assoc.transpose() * W * s.exposure_assoc;
    const VectorXd step = info.inverse() * s.exposure_assoc.transpose() * W * g;
    return s.n_x * step.dot(info * step);
}

/// Brute-force 2-D minimizer of the GMM criterion: coarse grid then repeated
/// 10x refinement around the incumbent.
inline VectorXd grid_argmin_2d(const MultivariableSummary& s, const VectorXd& centre, double half_width,
                               double coarse_step, int refinements) {
    VectorXd best = centre;
    double best_q = std::numeric_limits<double>::infinity();
    double half = half_width;
    double step = coarse_step;
    VectorXd c = centre;
    for (int level = 0; level <= refinements; ++level) {
        const int n = static_cast<int>(std::round(half / step));
        for (int i = -n; i <= n; ++i) {
            for (int j = -n; j <= n; ++j) {
                const VectorXd t = c + Eigen::Vector2d(i * step, j * step);
                double q = std::numeric_limits<double>::infinity();
                try {
                    q = dense_criterion(t, s);
                } catch (...) {
                }
                if (q < best_q) {
                    best_q = q;
                    best = t;
                }
            }
        }
        c = best;
        half = 2.0 * step;
        step /= 10.0;
    }
    return best;
}

/// Conditional F for K = 2 by scanning delta over [lo, hi] at `step`.
inline double conditional_f_grid(const MultivariableSummary& s, Index k, double lo, double hi, double step,
                                 double* delta_out = nullptr) {
    const Index m = 1 - k;
    const Index J = s.J();
    const MatrixXd Bkk = s.exposure_cov.block(k * J, k * J, J, J);
    const MatrixXd Bmm = s.exposure_cov.block(m * J, m * J, J, J);
    const MatrixXd Bkm = s.exposure_cov.block(k * J, m * J, J, J);
    double best = std::numeric_limits<double>::infinity();
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) {
        const double d = lo + static_cast<double>(i) * step;
        const VectorXd r = s.exposure_assoc.col(k) - d * s.exposure_assoc.col(m);
        const MatrixXd V = Bkk - d * (Bkm + Bkm.transpose()) + d * d * Bmm;
        const double q = r.dot(V.inverse() * r);
        if (q < best) {
            best = q;
            if (delta_out) *delta_out = d;
        }
    }
    return s.n_x / static_cast<double>(J - 1) * best;
}

}  // namespace mvmr::oracle

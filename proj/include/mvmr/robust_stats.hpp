#pragma once

#include <Eigen/Dense>

#include "mvmr/summary_data.hpp"

namespace mvmr {

/// Anderson-Rubin statistic S(theta) = n_x * Q(theta).
double ar_stat(const Eigen::VectorXd& theta, const MultivariableSummary& s);

/// J x K matrix with columns D_k = gamma_k - Delta_k' Omega^{-1} g, where
/// Delta_k = -sum_m theta_m Sigma_gamma(m, k) is cov(g, gamma_k).
Eigen::MatrixXd kleibergen_D(const Eigen::VectorXd& theta, const MultivariableSummary& s);

struct KStar {
    double value = 0.0;
    Eigen::VectorXd theta_star;
};

/// Score projection n_x g'W D (D'W D)^{-1} D'W g with W = Omega^{-1}.
/// Throws NumericalError("unidentified direction ...") when D is rank deficient.
KStar kstar_stat(const Eigen::VectorXd& theta, const MultivariableSummary& s);

struct AndrewsWald {
    double value = 0.0;
    Eigen::VectorXd theta_bar;
};

/// Wald-type statistic centred at the one-step estimate theta_bar(theta).
AndrewsWald andrews_wald_stat(const Eigen::VectorXd& theta, const MultivariableSummary& s);

/// K*(theta) + a * S(theta).
double lc_stat(const Eigen::VectorXd& theta, const MultivariableSummary& s, double a);

struct OverdispersionFit {
    double kappa2 = 0.0;
    bool at_boundary = false;
    double residual = 0.0;  // n_x g' Omega(theta, kappa2)^{-1} g - J
};

/// Root of n_x g' (Omega(theta) + c kappa2 I)^{-1} g = J, truncated at zero.
OverdispersionFit solve_kappa2(const Eigen::VectorXd& theta, const MultivariableSummary& s);

/// K* recomputed with Omega(theta, kappa2_hat(theta)) in place of Omega(theta).
double kleibergen_oh_stat(const Eigen::VectorXd& theta, const MultivariableSummary& s);

/// Which statistics `evaluate_point` should compute.
struct StatSelection {
    bool ar = true;
    bool kstar = true;
    bool andrews_wald = true;
    bool kleibergen_oh = false;
};

/// Statistics at one theta sharing a single Omega factorization. A statistic
/// that failed holds NaN and its message is recorded in `error`.
struct PointStatistics {
    double ar = 0.0;
    double kstar = 0.0;
    double andrews_wald = 0.0;
    double kleibergen_oh = 0.0;
    std::string error;
};

PointStatistics evaluate_point(const Eigen::VectorXd& theta, const MultivariableSummary& s,
                               const StatSelection& which);

}  // namespace mvmr

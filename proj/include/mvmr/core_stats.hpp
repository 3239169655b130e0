#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mvmr/summary_data.hpp"

namespace mvmr {

struct Estimate {
    Eigen::VectorXd theta;
    Eigen::MatrixXd cov;  // large-sample covariance on the sqrt(n_x) scale
    Eigen::VectorXd se;   // sqrt(diag(cov) / n_x)
    double criterion_value = 0.0;  // Q(theta) at the returned point
    bool converged = false;
    int iterations = 0;
};

struct ConditionalFReport {
    Eigen::VectorXd f_stats;              // one per exposure
    double min_f = 0.0;
    std::vector<Eigen::VectorXd> delta_at_min;  // (K-1)-vector per exposure
};

/// g(theta) = Gamma - gamma * theta.
Eigen::VectorXd moment_function(const Eigen::VectorXd& theta, const MultivariableSummary& s);

/// Omega(theta) = Sigma_Gamma + sum_{k,m} theta_k theta_m Sigma_gamma(k, m), symmetrized.
/// Throws NumericalError("Omega not PD") when the result has no Cholesky factor.
Eigen::MatrixXd omega(const Eigen::VectorXd& theta, const MultivariableSummary& s);

/// Q(theta) = g' Omega^{-1} g.
double gmm_criterion(const Eigen::VectorXd& theta, const MultivariableSummary& s);

Estimate ivw_estimate(const MultivariableSummary& s);

struct GmmOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;
};

Estimate gmm_estimate(const MultivariableSummary& s, const std::optional<Eigen::VectorXd>& init = std::nullopt,
                      const GmmOptions& options = {});

/// n_x (theta_hat - theta)' cov^{-1} (theta_hat - theta).
double wald_stat(const Eigen::VectorXd& theta, const Estimate& est, double n_x);

struct ConditionalF {
    double f = 0.0;
    Eigen::VectorXd delta;
    bool converged = false;
};

/// Conditional F-statistic for exposure k (0-based).
ConditionalF conditional_f(const MultivariableSummary& s, Eigen::Index k);

ConditionalFReport conditional_f_report(const MultivariableSummary& s);

}  // namespace mvmr

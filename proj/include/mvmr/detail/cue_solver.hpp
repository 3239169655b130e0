#pragma once

// Minimizer for continuously-updated quadratic forms
//
//   f(d) = r(d)' W(d)^{-1} r(d),   r(d) = y - X d,   W(d) = sum_{a,b} c_a c_b V_ab,
//
// with c = (1, -d). Column 0 of `columns` is y, columns 1..P are X; V_ab is the
// J x J covariance between columns a and b. The GMM criterion and the inner
// problem of the conditional F-statistic both have this shape.

#include <vector>

#include <Eigen/Dense>

namespace mvmr::detail {

struct CueProblem {
    Eigen::MatrixXd columns;                      // J x (P + 1)
    std::vector<std::vector<Eigen::MatrixXd>> V;  // (P + 1) x (P + 1) blocks, V[a][b] = V[b][a]'
};

struct CueOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;
    int simplex_max_iterations = 4000;
};

struct CueResult {
    Eigen::VectorXd d;
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

Eigen::MatrixXd cue_weight(const CueProblem& p, const Eigen::VectorXd& d);

/// f(d); returns +inf when W(d) is not PD.
double cue_objective(const CueProblem& p, const Eigen::VectorXd& d);

/// Local minimizer from `init`: scoring steps (D'W^{-1}D)^{-1} D'W^{-1} r with
/// backtracking, then a Nelder-Mead polish if scoring stalls.
CueResult minimize_cue(const CueProblem& p, const Eigen::VectorXd& init, const CueOptions& options = {});

/// Global variant. f is homogeneous of degree zero in c = (1, -d), so it is
/// scanned over directions on the unit sphere in R^{P+1}; local searches start
/// from `init` and from the best few well-separated directions. The lowest
/// value wins, ties going to the earlier start.
CueResult minimize_cue_global(const CueProblem& p, const Eigen::VectorXd& init, const CueOptions& options = {});

}  // namespace mvmr::detail

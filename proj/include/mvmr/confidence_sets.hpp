#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvmr/calibration.hpp"
#include "mvmr/core_stats.hpp"
#include "mvmr/summary_data.hpp"
#include "mvmr/theta_grid.hpp"

namespace mvmr {

enum class Method { wald, andrews_wald, ar, kleibergen, lc_robust, cs_p, kleibergen_oh };

std::string to_string(Method m);

/// Accepts canonical tags plus the short CLI aliases `lc`, `koh` and `aw`.
Method parse_method(const std::string& tag);

struct PointFailure {
    std::size_t index = 0;
    std::string message;
};

struct ConfidenceSetResult {
    Method method = Method::wald;
    double alpha = 0.05;
    double critical_value = 0.0;
    std::string critical_value_label;  // e.g. "chi2_2(0.95)" or "q(0.95; a=0.0123, J=4, K=2)"
    std::vector<std::uint8_t> member;  // one entry per grid point, row-major
    std::size_t area = 0;
    bool empty = true;
    bool touches_boundary = false;
    std::size_t failed_points = 0;
    std::vector<PointFailure> failures;  // first few diagnostics
    bool unreliable = false;             // more than 0.1% of points failed
    std::optional<std::vector<double>> stat_values;
};

/// Statistic values over a grid, NaN where evaluation failed.
struct GridStatistics {
    std::vector<double> ar;
    std::vector<double> kstar;
    std::vector<double> andrews_wald;
    std::vector<double> kleibergen_oh;
    std::vector<double> wald;
    std::vector<PointFailure> failures;  // one entry per failing point
};

struct GridRequest {
    bool ar = true;
    bool kstar = true;
    bool andrews_wald = true;
    bool kleibergen_oh = false;
    const Estimate* wald_estimate = nullptr;  // evaluates W(theta) when set
};

GridStatistics evaluate_grid(const ThetaGrid& grid, const MultivariableSummary& s, const GridRequest& request,
                             unsigned threads = 1);

/// Membership mask and flags for statistic <= critical value.
ConfidenceSetResult make_set(Method method, const ThetaGrid& grid, const std::vector<double>& values,
                             double critical_value, std::string label, double alpha,
                             const std::vector<PointFailure>& failures, bool keep_stats = false);

/// Builds the set for `method` from precomputed grid statistics. `cal` must be
/// set for lc_robust (uses its a and quantile) and cs_p (uses its a).
ConfidenceSetResult set_from_statistics(Method method, const ThetaGrid& grid, const GridStatistics& stats,
                                        const MultivariableSummary& s, double alpha, const LcCalibration* cal,
                                        bool keep_stats = false);

struct InversionOptions {
    bool keep_stats = false;
    unsigned threads = 1;
    const Estimate* wald_estimate = nullptr;  // reused instead of re-fitting GMM
};

ConfidenceSetResult invert_confidence_set(Method method, const ThetaGrid& grid, const MultivariableSummary& s,
                                          double alpha, const LcCalibration* cal = nullptr,
                                          const InversionOptions& options = {});

struct DistortionCutoff {
    bool determined = false;
    double gamma_hat = 0.0;  // gamma_cap when undetermined
    ConfidenceSetResult cs_n;
    ConfidenceSetResult cs_r;
    LcCalibration cal_min;
};

/// First gamma on the ladder with CS_P(gamma) contained in CS_N, using
/// precomputed statistics (needs ar, kstar and andrews_wald).
DistortionCutoff distortion_cutoff(const ThetaGrid& grid, const GridStatistics& stats, const MultivariableSummary& s,
                                   const DistortionLadder& ladder);

struct DistortionOptions {
    double gamma_step = 0.01;
    std::optional<double> gamma_cap;  // defaults to 1 - alpha
    std::size_t draws = kDefaultDraws;
    std::uint64_t seed = 20240101;
    unsigned threads = 1;
};

DistortionCutoff distortion_cutoff(const ThetaGrid& grid, const MultivariableSummary& s, double alpha,
                                   double gamma_min, const DistortionOptions& options = {});

/// [min, max] of member points along each axis; nullopt for an empty set.
std::vector<std::optional<std::pair<double, double>>> projected_intervals(const ThetaGrid& grid,
                                                                          const ConfidenceSetResult& set);

}  // namespace mvmr

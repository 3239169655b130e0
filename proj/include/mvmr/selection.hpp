#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvmr/calibration.hpp"
#include "mvmr/summary_data.hpp"
#include "mvmr/theta_grid.hpp"

namespace mvmr {

enum class SelectionStrategy { max_min_condf, min_distortion };

SelectionStrategy parse_selection_strategy(const std::string& tag);

struct SubsetScore {
    bool ok = false;
    std::string error;
    std::size_t num_instruments = 0;
    double min_f = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> gamma_hat;  // nullopt when undetermined (treated as +inf)
};

struct SelectionResult {
    std::size_t chosen = 0;
    std::vector<SubsetScore> scores;
};

/// Index of the best successful score under `strategy` (nullopt if none succeeded).
std::optional<std::size_t> pick_best(const std::vector<SubsetScore>& scores, SelectionStrategy strategy);

using SummaryBuilder = std::function<MultivariableSummary(const std::vector<Eigen::Index>&)>;

/// Ladders are looked up by instrument count J; `ladder_for(J)` must return the
/// a(gamma) ladder for that J (only used by min_distortion).
using LadderProvider = std::function<const DistortionLadder&(int J)>;

/// Picks the candidate subset that maximizes the minimum conditional F or
/// minimizes the distortion cutoff. Ties go to fewer instruments, then to the
/// earlier candidate. Throws InputError when no candidate can be built.
SelectionResult select_instruments(const std::vector<std::vector<Eigen::Index>>& candidates,
                                   const SummaryBuilder& build, SelectionStrategy strategy, const ThetaGrid& grid,
                                   const LadderProvider& ladder_for, unsigned threads = 1);

}  // namespace mvmr

namespace mvmr {

/// Convenience form that builds (and caches per J) the a(gamma) ladders from
/// alpha, gamma_min and a draw store seeded with `seed`.
SelectionResult select_instruments(const std::vector<std::vector<Eigen::Index>>& candidates,
                                   const SummaryBuilder& build, SelectionStrategy strategy, const ThetaGrid& grid,
                                   double alpha, double gamma_min, std::size_t draws = kDefaultDraws,
                                   std::uint64_t seed = 20240101, unsigned threads = 1);

}  // namespace mvmr

#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvmr/calibration.hpp"
#include "mvmr/confidence_sets.hpp"
#include "mvmr/core_stats.hpp"
#include "mvmr/summary_data.hpp"
#include "mvmr/theta_grid.hpp"

namespace mvmr {

/// Two-exposure linear IV design with blocks of four instruments.
///
/// The core block has effects gamma_1 = (1+xi, 1+xi, 1-xi, 1-xi) * 0.2 mu / sqrt(n_x)
/// and gamma_2 = (1-xi, 1-xi, 1+xi, 1+xi) * mu / sqrt(n_x); each extra block
/// repeats the core effects scaled by tau. Instruments are N(0, R) with
/// R_ij = a_i a_j off the diagonal, a_i ~ U[0, sqrt(0.4)] redrawn per replicate.
struct SimulationConfig {
    double n_x = 5000;
    double n_y = 5000;
    Eigen::VectorXd theta0 = Eigen::Vector2d(1.0, 0.0);
    double mu = 10.0;
    double xi = 1.0;
    double tau = 0.0;
    int extra_blocks = 0;
    double overdispersion_kappa2 = 0.0;  // direct effects nu ~ N(0, kappa2 / n_y) per instrument
    Eigen::Matrix3d error_cov = (Eigen::Matrix3d() << 1.0, -0.6, 0.6, -0.6, 1.0, 0.3, 0.6, 0.3, 1.0).finished();
    std::vector<AxisRange> grid{{-2.0, 2.0, 0.04}, {-2.0, 2.0, 0.04}};
    double alpha = 0.05;
    double gamma_min = 0.01;
    int replicates = 100;
    std::uint64_t master_seed = 1;
    std::size_t calibration_draws = kDefaultDraws;
    std::uint64_t calibration_seed = 20240101;
    bool evaluate_grid = true;  // false: coverage/power from statistics at theta0 and 0 only
    unsigned threads = 1;

    [[nodiscard]] int num_instruments() const { return 4 * (1 + extra_blocks); }
};

void validate_config(const SimulationConfig& config);

/// Error covariance actually sampled. The stated design matrix is slightly
/// indefinite (smallest eigenvalue about -0.0117), so eigenvalues are floored at
/// 1e-3 and the result rescaled to unit diagonal; PD inputs pass through unchanged.
Eigen::Matrix3d sampling_error_cov(const Eigen::Matrix3d& error_cov);

/// Per-replicate seed from the master seed (splitmix64 over the index).
std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t replicate);

struct SimulatedData {
    UnivariableGwasTables tables;
    MultivariableSummary summary;
    Eigen::VectorXd truth;
    Eigen::MatrixXd true_gamma;  // J x 2
    std::uint64_t seed = 0;
};

SimulatedData simulate_dataset(const SimulationConfig& config, std::uint64_t replicate);

/// Outcome of one method in one replicate.
struct MethodOutcome {
    bool evaluated = false;
    bool covered = false;       // theta0 in the set / interval
    bool rejects_null = false;  // zero vector (or 0 for intervals) excluded
    double area = std::numeric_limits<double>::quiet_NaN();
    bool empty = false;
};

/// Method tags used in study outputs: set methods plus the per-exposure-1
/// intervals "ivw_ci" and "gmm_ci".
struct ReplicateOutcome {
    std::uint64_t index = 0;
    std::uint64_t seed = 0;
    MultivariableSummary summary;
    Eigen::VectorXd truth;
    ConditionalFReport cond_f;
    std::optional<Estimate> ivw;
    std::optional<Estimate> gmm;
    std::map<std::string, MethodOutcome> methods;
    double gamma_hat = std::numeric_limits<double>::quiet_NaN();
    bool gamma_determined = false;
    std::vector<std::string> errors;
};

/// Shared, immutable per-study calibration (one ladder per instrument count).
class StudyCalibration {
public:
    StudyCalibration(const SimulationConfig& config, const std::vector<int>& instrument_counts, bool full_ladder);
    const DistortionLadder& ladder(int J) const;

private:
    std::map<int, DistortionLadder> ladders_;
};

ReplicateOutcome analyze_replicate(const SimulationConfig& config, const SimulatedData& data,
                                   const std::vector<Method>& methods, const DistortionLadder& ladder);

std::vector<ReplicateOutcome> run_replicates(const SimulationConfig& config, const std::vector<Method>& methods);

struct StudyRow {
    double mu = 0.0;
    double xi = 0.0;
    std::string method;
    int replicates = 0;
    int evaluated = 0;
    double coverage = 0.0;
    double coverage_se = 0.0;
    double power = 0.0;
    double mean_area = std::numeric_limits<double>::quiet_NaN();
    double mean_bias_1 = std::numeric_limits<double>::quiet_NaN();
    double mean_bias_2 = std::numeric_limits<double>::quiet_NaN();
    double mean_min_f = 0.0;
    double mean_gamma_hat = std::numeric_limits<double>::quiet_NaN();
    double median_gamma_hat = std::numeric_limits<double>::quiet_NaN();
};

struct StudyResult {
    std::vector<StudyRow> rows;
    std::vector<ReplicateOutcome> replicates;  // kept only when requested
};

std::vector<Method> default_study_methods();

StudyResult run_study(const SimulationConfig& config, const std::vector<double>& mu_list,
                      const std::vector<double>& xi_list, const std::vector<Method>& methods,
                      bool keep_replicates = false);

struct ScreeningRow {
    double mu = 0.0;
    double xi = 0.0;
    std::string method;
    int replicates = 0;
    double threshold = 10.0;
    int screened = 0;
    double screened_fraction = 0.0;
    double coverage_all = 0.0;
    double coverage_all_se = 0.0;
    double coverage_screened = std::numeric_limits<double>::quiet_NaN();
    double coverage_screened_se = std::numeric_limits<double>::quiet_NaN();
    double mean_min_f = 0.0;
};

struct ScreeningResult {
    std::vector<ScreeningRow> rows;
    std::vector<std::string> warnings;
    std::vector<ReplicateOutcome> replicates;
};

ScreeningResult screening_experiment(const SimulationConfig& config, double threshold = 10.0,
                                     bool keep_replicates = false);

/// Smallest mu (bisection on log mu over pilot replicates) whose mean minimum
/// conditional F reaches `target`.
double tune_mu_for_mean_min_f(const SimulationConfig& config, double target, int pilot_replicates = 200);

struct SelectionRow {
    double mu = 0.0;
    double tau = 0.0;
    std::string policy;  // core, full, post_condf, post_gamma
    int replicates = 0;
    double coverage = 0.0;
    double coverage_se = 0.0;
    double mean_area = 0.0;
    double full_selection_rate = std::numeric_limits<double>::quiet_NaN();
};

struct SelectionReplicate {
    std::uint64_t index = 0;
    double tau = 0.0;
    double mu = 0.0;
    bool core_covered = false, full_covered = false;
    double core_area = 0.0, full_area = 0.0;
    double core_min_f = 0.0, full_min_f = 0.0;
    std::optional<double> core_gamma, full_gamma;
    bool condf_picks_full = false, gamma_picks_full = false;
};

struct SelectionStudy {
    std::vector<SelectionRow> rows;
    std::vector<SelectionReplicate> replicates;
};

SelectionStudy selection_experiment(const SimulationConfig& config, const std::vector<double>& tau_list,
                                    const std::vector<double>& mu_list);

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows);
void write_screening_csv(std::ostream& out, const std::vector<ScreeningRow>& rows);
void write_selection_csv(std::ostream& out, const std::vector<SelectionRow>& rows);
void write_replicates_csv(std::ostream& out, const std::vector<ReplicateOutcome>& reps,
                          const std::vector<std::string>& method_tags);
void write_selection_replicates_csv(std::ostream& out, const std::vector<SelectionReplicate>& reps);

}  // namespace mvmr

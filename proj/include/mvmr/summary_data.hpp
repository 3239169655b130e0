#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvmr {

/// Per-variant univariable association rows for K exposures and one outcome.
///
/// Alleles are stored for both files. After harmonization the outcome alleles
/// agree with the exposure alleles and the outcome betas, together with the
/// LD rows/columns, are expressed per copy of the exposure-file effect allele.
struct UnivariableGwasTables {
    std::vector<std::string> variants;
    std::vector<std::string> effect_allele;  // exposure file coding
    std::vector<std::string> other_allele;
    std::vector<std::string> outcome_effect_allele;
    std::vector<std::string> outcome_other_allele;
    std::vector<std::string> exposure_names;

    Eigen::MatrixXd exposure_beta;  // J x K
    Eigen::MatrixXd exposure_se;    // J x K
    Eigen::VectorXd outcome_beta;   // J
    Eigen::VectorXd outcome_se;     // J
    Eigen::MatrixXd ld;             // J x J, coded like the outcome file until harmonized
    Eigen::MatrixXd exposure_cor;   // K x K

    double n_x = 0.0;
    double n_y = 0.0;

    std::vector<std::string> warnings;

    [[nodiscard]] Eigen::Index num_variants() const { return exposure_beta.rows(); }
    [[nodiscard]] Eigen::Index num_exposures() const { return exposure_beta.cols(); }
};

/// Multivariable summary bundle consumed by every statistic.
///
/// Covariances are on the sqrt(n_x) scale: sqrt(n_x) * (estimate - truth) has
/// covariance `outcome_cov` (resp. `exposure_cov`). `exposure_cov` is JK x JK with
/// block (k, m) of size J x J holding cov(gamma_k, gamma_m), matching the
/// column-stacked vec(gamma) ordering.
struct MultivariableSummary {
    Eigen::VectorXd outcome_assoc;   // J
    Eigen::MatrixXd exposure_assoc;  // J x K
    Eigen::MatrixXd outcome_cov;     // J x J
    Eigen::MatrixXd exposure_cov;    // JK x JK
    double n_x = 0.0;
    double n_y = 0.0;

    std::vector<std::string> warnings;

    [[nodiscard]] Eigen::Index J() const { return exposure_assoc.rows(); }
    [[nodiscard]] Eigen::Index K() const { return exposure_assoc.cols(); }
    [[nodiscard]] double c() const { return n_x / n_y; }

    [[nodiscard]] auto exposure_block(Eigen::Index k, Eigen::Index m) const {
        return exposure_cov.block(k * J(), m * J(), J(), J());
    }
};

/// Checks dimensions, symmetry and sample sizes; throws InputError.
/// Positive definiteness is not required here (statistics only need Omega PD).
void validate_summary(const MultivariableSummary& s);

struct GwasPaths {
    std::filesystem::path exposures;
    std::filesystem::path outcome;
    std::filesystem::path ld;
    std::filesystem::path exposure_cor;
};

UnivariableGwasTables load_gwas_tables(const GwasPaths& paths, double n_x, double n_y);

/// Writes tables in the same TSV formats `load_gwas_tables` reads.
void write_gwas_tables(const UnivariableGwasTables& tables, const GwasPaths& paths);

struct HarmonizeOptions {
    bool allow_ambiguous = false;  // keep A/T and C/G variants (literal allele match, warned)
};

UnivariableGwasTables harmonize_variants(const UnivariableGwasTables& tables,
                                         const HarmonizeOptions& options = {});

struct SummaryOptions {
    double max_ld_condition = 1e10;
};

MultivariableSummary build_multivariable_summary(const UnivariableGwasTables& tables,
                                                 const SummaryOptions& options = {});

/// Restricts tables to the given variant rows (LD sub-block included).
UnivariableGwasTables subset_variants(const UnivariableGwasTables& tables,
                                      const std::vector<Eigen::Index>& rows);

/// Symmetrizes `m` and applies a small ridge when its smallest eigenvalue is below
/// 1e-10 * trace / dim. Throws NumericalError("invalid covariance") if it stays non-PD.
Eigen::MatrixXd repair_covariance(const Eigen::MatrixXd& m, const std::string& name,
                                  std::vector<std::string>& warnings);

}  // namespace mvmr

#pragma once

#include <cstdint>
#include <vector>

namespace mvmr {

/// Common random numbers for the (1 + a) chi2_K + a chi2_{J-K} mixture.
///
/// The same pair of chi-squared draws is reused for every weight `a`, so each
/// mixture quantile is nondecreasing in `a`. Immutable after construction and
/// safe to share across threads.
class CalibrationDraws {
public:
    CalibrationDraws(int J, int K, std::size_t draws, std::uint64_t seed);

    /// Empirical p-quantile (order statistic ceil(p * n)) of the mixture with weight a.
    [[nodiscard]] double quantile(double p, double a) const;

    [[nodiscard]] int J() const { return J_; }
    [[nodiscard]] int K() const { return K_; }
    [[nodiscard]] std::size_t draws() const { return chi_k_.size(); }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

private:
    int J_;
    int K_;
    std::uint64_t seed_;
    std::vector<double> chi_k_;
    std::vector<double> chi_rest_;
};

struct LcCalibration {
    double a = 0.0;
    double gamma = 0.0;
    double alpha = 0.05;
    double quantile = 0.0;  // q(1 - alpha; a, J, K)
    std::size_t draws = 0;
    std::uint64_t seed = 0;
    bool at_boundary = false;  // a capped at 1
};

inline constexpr std::size_t kDefaultDraws = 100000;

/// Chi-squared quantile with `df` degrees of freedom.
double chi2_quantile(double p, int df);

/// q(1 - alpha; a, J, K) from a fresh draw store.
double crit_value(double a, int J, int K, double alpha, std::size_t draws, std::uint64_t seed);

/// Smallest a in [0, 1] (resolution 2^-14) with q(1 - alpha - gamma; a) >= chi2_{K, 1 - alpha}.
LcCalibration solve_a(double gamma, double alpha, const CalibrationDraws& draws);

/// a(gamma) on the ladder gamma_min, gamma_min + step, ... <= cap.
struct DistortionLadder {
    double alpha = 0.05;
    double gamma_min = 0.01;
    double gamma_step = 0.01;
    double gamma_cap = 0.95;
    std::vector<double> gammas;
    std::vector<LcCalibration> levels;
};

DistortionLadder build_distortion_ladder(const CalibrationDraws& draws, double alpha, double gamma_min,
                                         double gamma_step, double gamma_cap);

}  // namespace mvmr

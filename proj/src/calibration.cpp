#include "mvmr/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "mvmr/errors.hpp"

namespace mvmr {

CalibrationDraws::CalibrationDraws(int J, int K, std::size_t draws, std::uint64_t seed)
    : J_(J), K_(K), seed_(seed) {
    if (K < 1 || J < K) throw InputError("calibration needs J >= K >= 1");
    if (draws < 10000) throw InputError("calibration needs at least 10000 draws");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    chi_k_.resize(draws);
    chi_rest_.resize(draws);
    for (std::size_t i = 0; i < draws; ++i) {
        double x = 0.0;
        for (int k = 0; k < K; ++k) {
            const double z = normal(rng);
            x += z * z;
        }
        double y = 0.0;
        for (int k = 0; k < J - K; ++k) {
            const double z = normal(rng);
            y += z * z;
        }
        chi_k_[i] = x;
        chi_rest_[i] = y;
    }
}

double CalibrationDraws::quantile(double p, double a) const {
    const std::size_t n = chi_k_.size();
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (1.0 + a) * chi_k_[i] + a * chi_rest_[i];
    const double rank = std::ceil(std::clamp(p, 0.0, 1.0) * static_cast<double>(n) - 1e-9);
    const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(n))) - 1;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
    return v[idx];
}

double chi2_quantile(double p, int df) {
    boost::math::chi_squared dist(static_cast<double>(df));
    return boost::math::quantile(dist, p);
}

double crit_value(double a, int J, int K, double alpha, std::size_t draws, std::uint64_t seed) {
    if (!(a >= 0.0 && a <= 1.0)) throw InputError("weight a must lie in [0, 1]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    return CalibrationDraws(J, K, draws, seed).quantile(1.0 - alpha, a);
}

LcCalibration solve_a(double gamma, double alpha, const CalibrationDraws& draws) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0 - alpha + 1e-12)) {
        throw InputError("distortion level must lie in [0, 1 - alpha]");
    }
    const double target = chi2_quantile(1.0 - alpha, draws.K());
    const double p = 1.0 - alpha - gamma;

    LcCalibration cal;
    cal.gamma = gamma;
    cal.alpha = alpha;
    cal.draws = draws.draws();
    cal.seed = draws.seed();

    if (draws.quantile(p, 0.0) >= target) {
        cal.a = 0.0;
    } else if (draws.quantile(p, 1.0) < target) {
        cal.a = 1.0;
        cal.at_boundary = true;
    } else {
        // Fixed dyadic bisection: returns the smallest multiple of 2^-14 that
        // satisfies the (monotone) condition, so a(gamma) is monotone in gamma.
        double lo = 0.0;
        double hi = 1.0;
        for (int i = 0; i < 14; ++i) {
            const double mid = 0.5 * (lo + hi);
            (draws.quantile(p, mid) >= target ? hi : lo) = mid;
        }
        cal.a = hi;
    }
    cal.quantile = draws.quantile(1.0 - alpha, cal.a);
    return cal;
}

DistortionLadder build_distortion_ladder(const CalibrationDraws& draws, double alpha, double gamma_min,
                                         double gamma_step, double gamma_cap) {
    if (!(gamma_min >= 0.001)) throw InputError("gamma_min must be at least 0.001");
    if (!(gamma_step > 0.0)) throw InputError("gamma step must be positive");
    if (!(gamma_cap >= gamma_min && gamma_cap <= 1.0 - alpha + 1e-12)) {
        throw InputError("gamma cap must lie in [gamma_min, 1 - alpha]");
    }
    DistortionLadder ladder;
    ladder.alpha = alpha;
    ladder.gamma_min = gamma_min;
    ladder.gamma_step = gamma_step;
    ladder.gamma_cap = gamma_cap;
    for (int i = 0;; ++i) {
        double g = gamma_min + i * gamma_step;
        g = std::round(g * 1e12) / 1e12;
        if (g > gamma_cap + 1e-12) break;
        ladder.gammas.push_back(std::min(g, 1.0 - alpha));
        ladder.levels.push_back(solve_a(ladder.gammas.back(), alpha, draws));
    }
    return ladder;
}

}  // namespace mvmr

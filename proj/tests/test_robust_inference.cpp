#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mvmr/calibration.hpp"
#include "mvmr/confidence_sets.hpp"
#include "mvmr/core_stats.hpp"
#include "mvmr/errors.hpp"
#include "mvmr/robust_stats.hpp"
#include "mvmr/selection.hpp"
#include "mvmr/theta_grid.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mvmr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd random_theta(Index K, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    VectorXd t(K);
    for (Index k = 0; k < K; ++k) t(k) = z(rng);
    return t;
}

// Rows `keep` of every J-indexed object.
MultivariableSummary take_rows(const MultivariableSummary& s, const std::vector<Index>& keep) {
    const Index J = s.J();
    const Index K = s.K();
    const auto n = static_cast<Index>(keep.size());
    MultivariableSummary out;
    out.n_x = s.n_x;
    out.n_y = s.n_y;
    out.outcome_assoc.resize(n);
    out.exposure_assoc.resize(n, K);
    out.outcome_cov.resize(n, n);
    out.exposure_cov.resize(n * K, n * K);
    for (Index i = 0; i < n; ++i) {
        out.outcome_assoc(i) = s.outcome_assoc(keep[i]);
        out.exposure_assoc.row(i) = s.exposure_assoc.row(keep[i]);
        for (Index j = 0; j < n; ++j) {
            out.outcome_cov(i, j) = s.outcome_cov(keep[i], keep[j]);
            for (Index a = 0; a < K; ++a) {
                for (Index b = 0; b < K; ++b) {
                    out.exposure_cov(a * n + i, b * n + j) = s.exposure_cov(a * J + keep[i], b * J + keep[j]);
                }
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("K* and the Andrews-Wald statistic match dense formulas") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 40; ++rep) {
        const Index K = 1 + rep % 3;
        const Index J = K + 1 + rep % 4;
        const auto s = testing::random_summary(J, K, rng);
        const VectorXd theta = random_theta(K, rng);
        const double ks = oracle::dense_kstar(theta, s);
        const double aw = oracle::dense_andrews_wald(theta, s);
        CHECK(kstar_stat(theta, s).value == Catch::Approx(ks).epsilon(1e-8).margin(1e-10));
        CHECK(andrews_wald_stat(theta, s).value == Catch::Approx(aw).epsilon(1e-8).margin(1e-10));
        CHECK(ar_stat(theta, s) == Catch::Approx(s.n_x * oracle::dense_criterion(theta, s)).epsilon(1e-10));
        CHECK((kleibergen_D(theta, s) - oracle::score_matrix(theta, s)).norm() <
              1e-9 * (1.0 + oracle::score_matrix(theta, s).norm()));

        const auto pt = evaluate_point(theta, s, {true, true, true, true});
        CHECK(pt.error.empty());
        CHECK(pt.kstar == Catch::Approx(ks).epsilon(1e-8).margin(1e-10));
        CHECK(pt.andrews_wald == Catch::Approx(aw).epsilon(1e-8).margin(1e-10));
        CHECK(pt.kleibergen_oh == Catch::Approx(kleibergen_oh_stat(theta, s)).epsilon(1e-10));
    }
}

TEST_CASE("score projection identities") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 50; ++rep) {
        const Index K = 1 + rep % 3;
        const Index J = K + rep % 4;
        const auto s = testing::random_summary(J, K, rng);
        const VectorXd theta = random_theta(K, rng);
        const double S = ar_stat(theta, s);
        const double ks = kstar_stat(theta, s).value;
        CHECK(ks >= -1e-10);
        CHECK(ks <= S * (1.0 + 1e-10) + 1e-10);
        if (J == K) CHECK(ks == Catch::Approx(S).epsilon(1e-8));
        CHECK(lc_stat(theta, s, 0.25) == Catch::Approx(ks + 0.25 * S).epsilon(1e-10));
    }
}

TEST_CASE("one-step estimates are fixed at an exact solution") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const Index K = 1 + rep % 3;
        auto s = testing::random_summary(K + 2, K, rng);
        const VectorXd theta = random_theta(K, rng);
        s.outcome_assoc = s.exposure_assoc * theta;  // g(theta) = 0
        const auto ks = kstar_stat(theta, s);
        const auto aw = andrews_wald_stat(theta, s);
        CHECK(ks.value < 1e-20);
        CHECK(aw.value < 1e-20);
        CHECK((ks.theta_star - theta).norm() < 1e-12);
        CHECK((aw.theta_bar - theta).norm() < 1e-12);
        CHECK(solve_kappa2(theta, s).kappa2 == 0.0);
        CHECK(solve_kappa2(theta, s).at_boundary);
    }
}

TEST_CASE("K* reports rank-deficient D") {
    std::mt19937_64 rng(14);
    auto s = testing::random_summary(4, 2, rng);
    s.exposure_assoc.setZero();
    s.exposure_cov = MatrixXd::Identity(8, 8) * 1e-3;
    CHECK_THROWS_AS(kstar_stat(VectorXd::Zero(2), s), NumericalError);
    const auto pt = evaluate_point(VectorXd::Zero(2), s, {});
    CHECK(std::isnan(pt.kstar));
    CHECK_FALSE(pt.error.empty());
    CHECK(std::isfinite(pt.ar));
}

TEST_CASE("overdispersion with one instrument has a closed form") {
    std::mt19937_64 rng(15);
    std::normal_distribution<double> z;
    int positive = 0;
    for (int rep = 0; rep < 200; ++rep) {
        MultivariableSummary s;
        s.n_x = 1000.0;
        s.n_y = 500.0 * (1 + rep % 4);
        s.exposure_assoc = MatrixXd::Constant(1, 1, z(rng));
        s.outcome_assoc = VectorXd::Constant(1, z(rng) * 0.2);
        s.outcome_cov = MatrixXd::Constant(1, 1, 0.5 + std::abs(z(rng)));
        s.exposure_cov = MatrixXd::Constant(1, 1, 0.5 + std::abs(z(rng)));
        const VectorXd theta = random_theta(1, rng);
        const double g = s.outcome_assoc(0) - s.exposure_assoc(0, 0) * theta(0);
        const double om = s.outcome_cov(0, 0) + theta(0) * theta(0) * s.exposure_cov(0, 0);
        const double expect = std::max(0.0, (s.n_x * g * g - om) / s.c());
        const auto fit = solve_kappa2(theta, s);
        CHECK(fit.kappa2 == Catch::Approx(expect).epsilon(1e-6).margin(1e-9));
        CHECK(fit.at_boundary == (expect == 0.0));
        if (expect > 0.0) {
            ++positive;
            CHECK(std::abs(fit.residual) < 1e-6);
        }
    }
    CHECK(positive > 20);
}

TEST_CASE("Kleibergen-OH reduces to K* without overdispersion and matches the inflated dense form") {
    std::mt19937_64 rng(16);
    for (int rep = 0; rep < 20; ++rep) {
        auto s = testing::random_summary(6, 2, rng, 1.0, 1000.0, 1000.0);
        const VectorXd theta = random_theta(2, rng);
        // Large heterogeneity so the fit is interior.
        s.outcome_assoc += random_theta(6, rng);
        const auto fit = solve_kappa2(theta, s);
        auto inflated = s;
        inflated.outcome_cov.diagonal().array() += s.c() * fit.kappa2;
        CHECK(kleibergen_oh_stat(theta, s) == Catch::Approx(oracle::dense_kstar(theta, inflated)).epsilon(1e-8));
        if (!fit.at_boundary) {
            CHECK(s.n_x * oracle::dense_criterion(theta, inflated) == Catch::Approx(6.0).epsilon(1e-6));
        }

        auto clean = s;
        clean.outcome_assoc = clean.exposure_assoc * theta;
        CHECK(kleibergen_oh_stat(theta, clean) == Catch::Approx(kstar_stat(theta, clean).value).margin(1e-12));
    }
}

TEST_CASE("chi-squared quantiles") {
    CHECK(chi2_quantile(0.95, 1) == Catch::Approx(3.841458820694124).epsilon(1e-10));
    CHECK(chi2_quantile(0.95, 2) == Catch::Approx(5.991464547107979).epsilon(1e-10));
    CHECK(chi2_quantile(0.95, 4) == Catch::Approx(9.487729036781154).epsilon(1e-10));
    CHECK(chi2_quantile(0.90, 3) == Catch::Approx(6.251388631170325).epsilon(1e-10));
}

TEST_CASE("mixture critical values") {
    // a = 0 is chi2_K exactly; simulated to Monte Carlo accuracy.
    CHECK(crit_value(0.0, 4, 2, 0.05, 200000, 1) == Catch::Approx(5.991464547107979).epsilon(0.015));
    CHECK(crit_value(0.0, 6, 1, 0.05, 200000, 2) == Catch::Approx(3.841458820694124).epsilon(0.015));
    // a = 1 with J = 2K: 2 chi2_K + chi2_K; check against a direct simulation.
    std::mt19937_64 rng(99);
    std::chi_squared_distribution<double> c2(2.0);
    std::vector<double> v(200000);
    for (auto& x : v) x = 2.0 * c2(rng) + c2(rng);
    std::sort(v.begin(), v.end());
    const double direct = v[static_cast<std::size_t>(std::ceil(0.95 * v.size())) - 1];
    CHECK(crit_value(1.0, 4, 2, 0.05, 200000, 3) == Catch::Approx(direct).epsilon(0.02));

    const CalibrationDraws d(5, 2, 20000, 7);
    double prev = 0.0;
    for (double a = 0.0; a <= 1.0; a += 0.05) {
        const double q = d.quantile(0.95, a);
        CHECK(q >= prev);
        prev = q;
    }
}

TEST_CASE("calibration draws are reproducible from the seed") {
    const CalibrationDraws a(6, 2, 20000, 42);
    const CalibrationDraws b(6, 2, 20000, 42);
    const CalibrationDraws c(6, 2, 20000, 43);
    CHECK(a.quantile(0.9, 0.3) == b.quantile(0.9, 0.3));
    CHECK(a.quantile(0.9, 0.3) != c.quantile(0.9, 0.3));
}

TEST_CASE("a(gamma) is the smallest dyadic weight meeting the target") {
    const CalibrationDraws d(6, 2, 50000, 5);
    const double target = chi2_quantile(0.95, 2);
    const auto ladder = build_distortion_ladder(d, 0.05, 0.01, 0.01, 0.95);
    REQUIRE(ladder.gammas.size() == 95);
    CHECK(ladder.gammas.front() == 0.01);
    CHECK(ladder.gammas.back() == Catch::Approx(0.95));
    double prev = 0.0;
    for (const auto& cal : ladder.levels) {
        CHECK(cal.a >= prev);
        prev = cal.a;
        const double p = 0.95 - cal.gamma;
        const double a_multiple = cal.a * 16384.0;
        CHECK(a_multiple == std::round(a_multiple));
        if (!cal.at_boundary) CHECK(d.quantile(p, cal.a) >= target);
        if (cal.a > 0.0 && !cal.at_boundary) CHECK(d.quantile(p, cal.a - 1.0 / 16384.0) < target);
        CHECK(cal.quantile == d.quantile(0.95, cal.a));
    }
    // Tiny distortion needs little weight on S, large distortion a lot.
    CHECK(ladder.levels.front().a < 0.05);
    CHECK(ladder.levels.back().a > ladder.levels.front().a);

    CHECK_THROWS_AS(solve_a(0.99, 0.05, d), InputError);
    CHECK_THROWS_AS(build_distortion_ladder(d, 0.05, 0.0005, 0.01, 0.5), InputError);
}

TEST_CASE("theta grid layout") {
    const auto g = ThetaGrid::from_ranges({{-1.0, 1.0, 0.5}, {0.0, 0.2, 0.1}});
    REQUIRE(g.size() == 15);
    CHECK(g.axis(0).size() == 5);
    CHECK(g.axis(1).size() == 3);
    CHECK(g.point(0).isApprox(Eigen::Vector2d(-1.0, 0.0)));
    CHECK(g.point(1).isApprox(Eigen::Vector2d(-1.0, 0.1)));
    CHECK(g.point(3).isApprox(Eigen::Vector2d(-0.5, 0.0)));
    CHECK(g.coordinates(7) == std::vector<std::size_t>{2, 1});
    CHECK_FALSE(g.on_edge(7));
    CHECK(g.on_edge(6));
    CHECK(g.on_edge(14));

    const auto r = parse_grid_spec("-2:2:0.04,-0.5:1.5:0.25");
    REQUIRE(r.size() == 2);
    CHECK(r[0].lo == -2.0);
    CHECK(r[1].step == 0.25);
    CHECK(ThetaGrid::from_ranges(parse_grid_spec("-2:2:0.04")).size() == 101);
    CHECK_THROWS_AS(parse_grid_spec("1:0:0.1"), InputError);
    CHECK_THROWS_AS(parse_grid_spec("0:1"), InputError);
    CHECK_THROWS_AS(parse_grid_spec("0:1:x"), InputError);
    CHECK_THROWS_AS(parse_grid_spec("0:1:-0.1"), InputError);
    CHECK_THROWS_AS(parse_grid_spec(""), InputError);
}

TEST_CASE("grid sets agree with pointwise statistics") {
    std::mt19937_64 rng(17);
    const auto s = testing::random_summary(5, 2, rng, 0.3, 300.0, 300.0);
    const auto grid = ThetaGrid::from_ranges({{-3.0, 3.0, 0.25}, {-3.0, 3.0, 0.25}});
    const auto est = gmm_estimate(s);
    GridRequest req;
    req.kleibergen_oh = true;
    req.wald_estimate = &est;
    const auto one = evaluate_grid(grid, s, req, 1);
    const auto many = evaluate_grid(grid, s, req, 4);
    CHECK(one.kstar == many.kstar);
    CHECK(one.ar == many.ar);

    const double chi2 = chi2_quantile(0.95, 2);
    const double chi5 = chi2_quantile(0.95, 5);
    const auto ar = set_from_statistics(Method::ar, grid, one, s, 0.05, nullptr);
    const auto ks = set_from_statistics(Method::kleibergen, grid, one, s, 0.05, nullptr);
    const auto wald = set_from_statistics(Method::wald, grid, one, s, 0.05, nullptr);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const VectorXd t = grid.point(i);
        CHECK(static_cast<bool>(ar.member[i]) == (s.n_x * oracle::dense_criterion(t, s) <= chi5));
        CHECK(static_cast<bool>(wald.member[i]) == (wald_stat(t, est, s.n_x) <= chi2));
        CHECK(one.kstar[i] == Catch::Approx(oracle::dense_kstar(t, s)).epsilon(1e-7).margin(1e-9));
    }
    (void)ks;

    const auto direct = invert_confidence_set(Method::ar, grid, s, 0.05);
    CHECK(direct.member == ar.member);
    CHECK(direct.area == ar.area);
    CHECK_THROWS_AS(set_from_statistics(Method::lc_robust, grid, one, s, 0.05, nullptr), InputError);
}

TEST_CASE("CS_P shrinks as the weight on S grows") {
    std::mt19937_64 rng(18);
    const auto s = testing::random_summary(6, 2, rng, 0.2, 500.0, 500.0);
    const auto grid = ThetaGrid::from_ranges({{-4.0, 4.0, 0.2}, {-4.0, 4.0, 0.2}});
    const auto stats = evaluate_grid(grid, s, {}, 2);
    std::vector<std::uint8_t> prev(grid.size(), 1);
    for (double a : {0.0, 0.01, 0.05, 0.2, 0.5, 1.0}) {
        LcCalibration cal;
        cal.a = a;
        const auto set = set_from_statistics(Method::cs_p, grid, stats, s, 0.05, &cal);
        for (std::size_t i = 0; i < grid.size(); ++i) CHECK(set.member[i] <= prev[i]);
        prev = set.member;
    }
}

TEST_CASE("distortion cutoff matches a brute-force containment scan") {
    std::mt19937_64 rng(19);
    const CalibrationDraws draws(4, 2, 20000, 3);
    const auto ladder = build_distortion_ladder(draws, 0.05, 0.01, 0.01, 0.95);
    const auto grid = ThetaGrid::from_ranges({{-3.0, 3.0, 0.2}, {-3.0, 3.0, 0.2}});
    const double chi2 = chi2_quantile(0.95, 2);
    int determined = 0;
    for (int rep = 0; rep < 6; ++rep) {
        const auto s = testing::random_summary(4, 2, rng, rep < 3 ? 0.15 : 1.0, 400.0, 400.0);
        const auto stats = evaluate_grid(grid, s, {}, 2);
        const auto cut = distortion_cutoff(grid, stats, s, ladder);

        std::vector<double> ks(grid.size()), S(grid.size()), aw(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const VectorXd t = grid.point(i);
            ks[i] = oracle::dense_kstar(t, s);
            S[i] = s.n_x * oracle::dense_criterion(t, s);
            aw[i] = oracle::dense_andrews_wald(t, s);
        }
        std::optional<double> expect;
        for (std::size_t l = 0; l < ladder.levels.size() && !expect; ++l) {
            bool ok = true;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                // Skip points sitting on a rounding knife edge.
                const double v = ks[i] + ladder.levels[l].a * S[i];
                if (std::abs(v - chi2) < 1e-7 || std::abs(aw[i] - chi2) < 1e-7) continue;
                if (v <= chi2 && aw[i] > chi2) ok = false;
            }
            if (ok) expect = ladder.gammas[l];
        }
        CHECK(cut.determined == expect.has_value());
        if (expect) {
            ++determined;
            CHECK(cut.gamma_hat == *expect);
        } else {
            CHECK(cut.gamma_hat == Catch::Approx(0.95));
        }
        CHECK(cut.cal_min.gamma == 0.01);
    }
    CHECK(determined > 0);
}

TEST_CASE("projected intervals") {
    const auto grid = ThetaGrid::from_ranges({{0.0, 1.0, 0.25}, {-1.0, 1.0, 1.0}});
    ConfidenceSetResult set;
    set.member.assign(grid.size(), 0);
    CHECK_FALSE(projected_intervals(grid, set)[0].has_value());
    set.member[grid.size() - 1] = 1;  // (1, 1)
    set.member[4] = 1;                // (0.25, 0)
    const auto iv = projected_intervals(grid, set);
    REQUIRE(iv.size() == 2);
    CHECK(iv[0]->first == 0.25);
    CHECK(iv[0]->second == 1.0);
    CHECK(iv[1]->first == 0.0);
    CHECK(iv[1]->second == 1.0);
}

TEST_CASE("method tags") {
    CHECK(parse_method("lc") == Method::lc_robust);
    CHECK(parse_method("koh") == Method::kleibergen_oh);
    CHECK(parse_method("aw") == Method::andrews_wald);
    CHECK(to_string(Method::kleibergen) == "kleibergen");
    CHECK_THROWS_AS(parse_method("bogus"), InputError);
}

TEST_CASE("pick_best ordering") {
    auto score = [](bool ok, std::size_t n, double f, std::optional<double> g) {
        SubsetScore s;
        s.ok = ok;
        s.num_instruments = n;
        s.min_f = f;
        s.gamma_hat = g;
        return s;
    };
    std::vector<SubsetScore> v{score(true, 8, 10.0, 0.2), score(false, 4, 50.0, 0.01), score(true, 4, 10.0, 0.1),
                               score(true, 6, 3.0, 0.1)};
    CHECK(pick_best(v, SelectionStrategy::max_min_condf) == 2u);  // tie on F, fewer instruments
    CHECK(pick_best(v, SelectionStrategy::min_distortion) == 2u);  // tie on gamma, fewer instruments
    v[3].num_instruments = 4;
    CHECK(pick_best(v, SelectionStrategy::min_distortion) == 2u);  // then the earlier candidate
    v[2].gamma_hat.reset();
    CHECK(pick_best(v, SelectionStrategy::min_distortion) == 3u);  // undetermined is +inf
    std::vector<SubsetScore> none{score(false, 4, 1.0, 0.1)};
    CHECK_FALSE(pick_best(none, SelectionStrategy::max_min_condf).has_value());
    CHECK(parse_selection_strategy("max_min_condf") == SelectionStrategy::max_min_condf);
    CHECK_THROWS_AS(parse_selection_strategy("x"), InputError);
}

TEST_CASE("instrument selection scores each candidate independently") {
    std::mt19937_64 rng(20);
    const auto s = testing::random_summary(8, 2, rng, 0.5, 2000.0, 2000.0);
    const std::vector<std::vector<Index>> candidates{{0, 1, 2, 3}, {4, 5, 6, 7}, {0, 1, 2, 3, 4, 5, 6, 7}};
    const auto build = [&](const std::vector<Index>& rows) { return take_rows(s, rows); };
    const auto grid = ThetaGrid::from_ranges({{-3.0, 3.0, 0.25}, {-3.0, 3.0, 0.25}});

    const auto by_f = select_instruments(candidates, build, SelectionStrategy::max_min_condf, grid, 0.05, 0.05, 20000);
    REQUIRE(by_f.scores.size() == 3);
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double f = conditional_f_report(take_rows(s, candidates[c])).min_f;
        CHECK(by_f.scores[c].ok);
        CHECK(by_f.scores[c].num_instruments == candidates[c].size());
        CHECK(by_f.scores[c].min_f == Catch::Approx(f).epsilon(1e-9));
        if (f > best) {
            best = f;
            arg = c;
        }
    }
    CHECK(by_f.chosen == arg);

    const auto by_d = select_instruments(candidates, build, SelectionStrategy::min_distortion, grid, 0.05, 0.05, 20000);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto sub = take_rows(s, candidates[c]);
        const auto cut = distortion_cutoff(grid, sub, 0.05, 0.05, {0.01, std::nullopt, 20000});
        CHECK(by_d.scores[c].gamma_hat.has_value() == cut.determined);
        if (cut.determined) CHECK(*by_d.scores[c].gamma_hat == cut.gamma_hat);
    }
    CHECK(by_d.chosen == *pick_best(by_d.scores, SelectionStrategy::min_distortion));
}

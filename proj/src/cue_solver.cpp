#include "mvmr/detail/cue_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace mvmr::detail {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

VectorXd weights_of(const VectorXd& d) {
    VectorXd c(d.size() + 1);
    c(0) = 1.0;
    c.tail(d.size()) = -d;
    return c;
}

struct Scoring {
    double value = kInf;
    VectorXd step;
    bool ok = false;
};

// Evaluates f(d) and the scoring step at d.
Scoring score_at(const CueProblem& p, const VectorXd& d) {
    Scoring out;
    const VectorXd c = weights_of(d);
    const MatrixXd W = cue_weight(p, d);
    Eigen::LLT<MatrixXd> llt(W);
    if (llt.info() != Eigen::Success) return out;
    const VectorXd r = p.columns * c;
    const VectorXd w = llt.solve(r);
    out.value = r.dot(w);

    const Index P = d.size();
    const Index J = p.columns.rows();
    MatrixXd D(J, P);
    for (Index m = 0; m < P; ++m) {
        VectorXd col = p.columns.col(m + 1);
        for (Index b = 0; b <= P; ++b) {
            if (c(b) != 0.0) col.noalias() -= c(b) * (p.V[m + 1][b] * w);
        }
        D.col(m) = col;
    }
    const MatrixXd WinvD = llt.solve(D);
    const MatrixXd info = D.transpose() * WinvD;
    Eigen::LDLT<MatrixXd> info_ldlt(info);
    if (info_ldlt.info() != Eigen::Success || !info_ldlt.isPositive()) return out;
    out.step = info_ldlt.solve(WinvD.transpose() * r);
    out.ok = out.step.allFinite();
    return out;
}

struct SimplexResult {
    VectorXd x;
    double value = kInf;
    bool converged = false;
    int iterations = 0;
};

SimplexResult nelder_mead(const CueProblem& p, const VectorXd& start, int max_iterations) {
    const Index n = start.size();
    std::vector<VectorXd> pts(static_cast<std::size_t>(n + 1), start);
    std::vector<double> vals(static_cast<std::size_t>(n + 1));
    for (Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)](i) += 0.01 * (1.0 + std::abs(start(i)));
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = cue_objective(p, pts[i]);

    std::vector<std::size_t> order(pts.size());
    SimplexResult res;
    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it + 1;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[order.size() - 2];

        double diameter = 0.0;
        for (const auto& q : pts) diameter = std::max(diameter, (q - pts[best]).cwiseAbs().maxCoeff());
        const double spread = vals[worst] - vals[best];
        if (std::isfinite(spread) && spread <= 1e-15 * (1.0 + std::abs(vals[best])) &&
            diameter <= 1e-10 * (1.0 + pts[best].cwiseAbs().maxCoeff())) {
            res.converged = true;
            break;
        }

        VectorXd centroid = VectorXd::Zero(n);
        for (std::size_t i : order) {
            if (i != worst) centroid += pts[i];
        }
        centroid /= static_cast<double>(n);

        const VectorXd reflected = centroid + (centroid - pts[worst]);
        const double f_r = cue_objective(p, reflected);
        if (f_r < vals[best]) {
            const VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
            const double f_e = cue_objective(p, expanded);
            if (f_e < f_r) {
                pts[worst] = expanded;
                vals[worst] = f_e;
            } else {
                pts[worst] = reflected;
                vals[worst] = f_r;
            }
            continue;
        }
        if (f_r < vals[second]) {
            pts[worst] = reflected;
            vals[worst] = f_r;
            continue;
        }
        const bool outside = f_r < vals[worst];
        const VectorXd contracted =
            outside ? VectorXd(centroid + 0.5 * (reflected - centroid)) : VectorXd(centroid + 0.5 * (pts[worst] - centroid));
        const double f_c = cue_objective(p, contracted);
        if (f_c < (outside ? f_r : vals[worst])) {
            pts[worst] = contracted;
            vals[worst] = f_c;
            continue;
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            vals[i] = cue_objective(p, pts[i]);
        }
    }
    const auto best_it = std::min_element(vals.begin(), vals.end());
    res.x = pts[static_cast<std::size_t>(best_it - vals.begin())];
    res.value = *best_it;
    return res;
}

}  // namespace

MatrixXd cue_weight(const CueProblem& p, const VectorXd& d) {
    const VectorXd c = weights_of(d);
    const Index J = p.columns.rows();
    MatrixXd W = MatrixXd::Zero(J, J);
    for (Index a = 0; a < c.size(); ++a) {
        if (c(a) == 0.0) continue;
        for (Index b = 0; b < c.size(); ++b) {
            if (c(b) != 0.0) W.noalias() += (c(a) * c(b)) * p.V[a][b];
        }
    }
    return 0.5 * (W + W.transpose());
}

double cue_objective(const CueProblem& p, const VectorXd& d) {
    Eigen::LLT<MatrixXd> llt(cue_weight(p, d));
    if (llt.info() != Eigen::Success) return kInf;
    const VectorXd r = p.columns * weights_of(d);
    const double v = r.dot(llt.solve(r));
    return std::isfinite(v) ? v : kInf;
}

CueResult minimize_cue(const CueProblem& p, const VectorXd& init, const CueOptions& options) {
    CueResult res;
    res.d = init;
    Scoring cur = score_at(p, init);
    res.value = cur.value;
    if (!std::isfinite(cur.value)) {
        res.value = kInf;
        return res;
    }

    bool stalled = false;
    for (int it = 0; it < options.max_iterations; ++it) {
        res.iterations = it + 1;
        if (!cur.ok) {
            stalled = true;
            break;
        }
        const double tol = options.step_tolerance * (1.0 + res.d.norm());
        if (cur.step.norm() < tol) {
            res.converged = true;
            break;
        }
        double t = 1.0;
        Scoring next;
        VectorXd candidate;
        bool improved = false;
        while (t > 1e-12) {
            candidate = res.d + t * cur.step;
            next = score_at(p, candidate);
            if (next.value <= cur.value) {
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved) {
            stalled = true;
            break;
        }
        const double moved = (t * cur.step).norm();
        res.d = candidate;
        res.value = next.value;
        cur = next;
        if (moved < tol) {
            res.converged = true;
            break;
        }
    }
    if (res.converged) return res;

    // Scoring stalled or ran out of iterations; polish with a simplex search.
    (void)stalled;
    SimplexResult nm = nelder_mead(p, res.d, options.simplex_max_iterations);
    res.iterations += nm.iterations;
    if (nm.value <= res.value) {
        res.d = nm.x;
        res.value = nm.value;
    }
    res.converged = nm.converged;
    return res;
}

namespace {

// Deterministic unit directions in R^{P+1} with c_0 > 0 (c and -c are equivalent).
std::vector<VectorXd> sphere_directions(Index P) {
    std::vector<VectorXd> dirs;
    if (P == 1) {
        constexpr int n = 720;
        for (int i = 0; i < n; ++i) {
            const double phi = -0.5 * M_PI + M_PI * (i + 0.5) / n;
            dirs.push_back(Eigen::Vector2d(std::cos(phi), std::sin(phi)));
        }
        return dirs;
    }
    const int n = P == 2 ? 3000 : static_cast<int>(1000 * P);
    std::mt19937_64 rng(0x5eed5eedULL + static_cast<std::uint64_t>(P));
    std::normal_distribution<double> z;
    for (int i = 0; i < n; ++i) {
        VectorXd c(P + 1);
        for (Index a = 0; a <= P; ++a) c(a) = z(rng);
        if (c(0) < 0.0) c = -c;
        dirs.push_back(c / c.norm());
    }
    return dirs;
}

}  // namespace

CueResult minimize_cue_global(const CueProblem& p, const VectorXd& init, const CueOptions& options) {
    const Index P = init.size();
    CueResult best = minimize_cue(p, init, options);
    if (P == 0) return best;

    struct Seed {
        double value;
        VectorXd c;
    };
    std::vector<Seed> seeds;
    for (const auto& c : sphere_directions(P)) {
        if (c(0) < 1e-3) continue;  // d would be enormous
        const VectorXd d = -c.tail(P) / c(0);
        const double v = cue_objective(p, d);
        if (std::isfinite(v)) seeds.push_back({v, c});
    }
    std::stable_sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.value < b.value; });

    std::vector<VectorXd> chosen;
    for (const auto& sd : seeds) {
        if (chosen.size() >= 4) break;
        bool separated = true;
        for (const auto& c : chosen) separated = separated && std::abs(c.dot(sd.c)) < 0.995;
        if (!separated) continue;
        chosen.push_back(sd.c);
        const VectorXd d = -sd.c.tail(P) / sd.c(0);
        const CueResult r = minimize_cue(p, d, options);
        if (r.value < best.value - 1e-12 * (1.0 + std::abs(best.value))) {
            const int iterations = best.iterations + r.iterations;
            best = r;
            best.iterations = iterations;
        }
    }
    return best;
}

}  // namespace mvmr::detail

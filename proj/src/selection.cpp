#include "mvmr/selection.hpp"

#include <map>
#include <memory>

#include "mvmr/confidence_sets.hpp"
#include "mvmr/core_stats.hpp"
#include "mvmr/errors.hpp"

namespace mvmr {

SelectionStrategy parse_selection_strategy(const std::string& tag) {
    if (tag == "max_min_condf") return SelectionStrategy::max_min_condf;
    if (tag == "min_distortion") return SelectionStrategy::min_distortion;
    throw InputError("unknown selection strategy '" + tag + "'");
}

std::optional<std::size_t> pick_best(const std::vector<SubsetScore>& scores, SelectionStrategy strategy) {
    // Lower key is better; undetermined gamma_hat counts as +inf.
    const auto key = [&](const SubsetScore& s) {
        if (strategy == SelectionStrategy::max_min_condf) return -s.min_f;
        return s.gamma_hat ? *s.gamma_hat : std::numeric_limits<double>::infinity();
    };
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const auto& s = scores[c];
        if (!s.ok) continue;
        if (!best) {
            best = c;
            continue;
        }
        const auto& b = scores[*best];
        const double ks = key(s);
        const double kb = key(b);
        if (ks < kb || (ks == kb && s.num_instruments < b.num_instruments)) best = c;
    }
    return best;
}

SelectionResult select_instruments(const std::vector<std::vector<Eigen::Index>>& candidates,
                                   const SummaryBuilder& build, SelectionStrategy strategy, const ThetaGrid& grid,
                                   const LadderProvider& ladder_for, unsigned threads) {
    if (candidates.empty()) throw InputError("no candidate instrument subsets");
    SelectionResult out;
    out.scores.resize(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        auto& score = out.scores[c];
        score.num_instruments = candidates[c].size();
        try {
            const auto s = build(candidates[c]);
            if (s.J() < s.K()) throw InputError("subset has fewer instruments than exposures");
            if (strategy == SelectionStrategy::max_min_condf) {
                score.min_f = conditional_f_report(s).min_f;
            } else {
                GridRequest req;
                req.kstar = true;
                req.andrews_wald = true;
                const auto stats = evaluate_grid(grid, s, req, threads);
                const auto cut = distortion_cutoff(grid, stats, s, ladder_for(static_cast<int>(s.J())));
                if (cut.determined) score.gamma_hat = cut.gamma_hat;
            }
            score.ok = true;
        } catch (const Error& e) {
            score.error = e.what();
        }
    }

    const auto best = pick_best(out.scores, strategy);
    if (!best) throw InputError("all candidate instrument subsets failed to build");
    out.chosen = *best;
    return out;
}

SelectionResult select_instruments(const std::vector<std::vector<Eigen::Index>>& candidates,
                                   const SummaryBuilder& build, SelectionStrategy strategy, const ThetaGrid& grid,
                                   double alpha, double gamma_min, std::size_t draws, std::uint64_t seed,
                                   unsigned threads) {
    std::map<int, std::unique_ptr<DistortionLadder>> cache;
    const int K = static_cast<int>(grid.dims());
    LadderProvider provider = [&](int J) -> const DistortionLadder& {
        auto& slot = cache[J];
        if (!slot) {
            const CalibrationDraws store(J, K, draws, seed);
            slot = std::make_unique<DistortionLadder>(
                build_distortion_ladder(store, alpha, gamma_min, 0.01, 1.0 - alpha));
        }
        return *slot;
    };
    return select_instruments(candidates, build, strategy, grid, provider, threads);
}

}  // namespace mvmr

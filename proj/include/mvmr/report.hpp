#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvmr/calibration.hpp"
#include "mvmr/confidence_sets.hpp"
#include "mvmr/core_stats.hpp"
#include "mvmr/robust_stats.hpp"
#include "mvmr/summary_data.hpp"
#include "mvmr/theta_grid.hpp"

namespace mvmr {

inline constexpr int kReportSchemaVersion = 1;

struct AnalysisOptions {
    double alpha = 0.05;
    double gamma_min = 0.05;
    double gamma_step = 0.01;
    std::optional<std::vector<AxisRange>> grid;  // auto: GMM +/- 10 SE, 101 points per axis
    std::vector<Method> methods{Method::wald, Method::ar, Method::kleibergen, Method::lc_robust,
                                Method::kleibergen_oh};
    std::uint64_t seed = 20240101;
    std::size_t draws = kDefaultDraws;
    unsigned threads = 1;
};

/// Everything an analysis computes; serialized by `report_json`.
struct AnalysisResult {
    MultivariableSummary summary;
    ThetaGrid grid;
    std::vector<AxisRange> grid_ranges;
    bool grid_auto = false;
    Estimate ivw;
    Estimate gmm;
    std::optional<ConditionalFReport> cond_f;
    std::optional<OverdispersionFit> kappa2;
    DistortionCutoff cutoff;
    std::vector<ConfidenceSetResult> sets;
    std::vector<std::string> warnings;
};

/// Auto grid: estimate +/- 10 standard errors per axis with 101 points.
std::vector<AxisRange> auto_grid(const Estimate& est);

/// Runs estimation, calibration, grid inversion and the distortion cutoff.
/// Throws InputError for bad options, NumericalError when estimation fails.
AnalysisResult run_analysis(const MultivariableSummary& summary, const AnalysisOptions& options);

struct InputDigest {
    GwasPaths paths;
    std::vector<std::string> exposure_names;
};

/// Report document; key order is fixed so equal inputs give equal bytes.
nlohmann::ordered_json report_json(const AnalysisResult& result, const AnalysisOptions& options,
                                   const InputDigest& inputs);

/// Pretty-printed report with a trailing newline.
std::string dump_report(const nlohmann::ordered_json& report);

/// Plot-ready membership grid: theta_1..theta_K, member_<method>...
void write_sets_csv(std::ostream& out, const ThetaGrid& grid, const std::vector<ConfidenceSetResult>& sets);

}  // namespace mvmr

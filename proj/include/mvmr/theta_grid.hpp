#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvmr {

struct AxisRange {
    double lo = 0.0;
    double hi = 0.0;
    double step = 0.0;
};

/// Cartesian grid of candidate exposure-effect vectors, enumerated row-major
/// (the last axis varies fastest).
class ThetaGrid {
public:
    ThetaGrid() = default;
    explicit ThetaGrid(std::vector<std::vector<double>> axes);

    static ThetaGrid from_ranges(const std::vector<AxisRange>& ranges);

    [[nodiscard]] std::size_t dims() const { return axes_.size(); }
    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] const std::vector<double>& axis(std::size_t d) const { return axes_[d]; }
    [[nodiscard]] const std::vector<std::vector<double>>& axes() const { return axes_; }

    [[nodiscard]] Eigen::VectorXd point(std::size_t index) const;
    [[nodiscard]] std::vector<std::size_t> coordinates(std::size_t index) const;
    [[nodiscard]] bool on_edge(std::size_t index) const;

private:
    std::vector<std::vector<double>> axes_;
    std::size_t size_ = 0;
};

/// Parses "lo:hi:step[,lo:hi:step...]".
std::vector<AxisRange> parse_grid_spec(const std::string& spec);

}  // namespace mvmr

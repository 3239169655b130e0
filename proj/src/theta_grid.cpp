#include "mvmr/theta_grid.hpp"

#include <cmath>
#include <sstream>

#include "mvmr/errors.hpp"

namespace mvmr {

ThetaGrid::ThetaGrid(std::vector<std::vector<double>> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw InputError("grid needs at least one axis");
    size_ = 1;
    for (const auto& ax : axes_) {
        if (ax.empty()) throw InputError("grid axis is empty");
        for (std::size_t i = 1; i < ax.size(); ++i) {
            if (!(ax[i] > ax[i - 1])) throw InputError("grid axis values must be strictly increasing");
        }
        size_ *= ax.size();
    }
}

ThetaGrid ThetaGrid::from_ranges(const std::vector<AxisRange>& ranges) {
    std::vector<std::vector<double>> axes;
    for (const auto& r : ranges) {
        if (!(r.step > 0.0) || !(r.hi >= r.lo) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
            throw InputError("grid range needs lo <= hi and step > 0");
        }
        const auto n = static_cast<std::size_t>(std::floor((r.hi - r.lo) / r.step + 1e-9)) + 1;
        if (n > 100000) throw InputError("grid axis has too many points");
        std::vector<double> ax(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = r.lo + static_cast<double>(i) * r.step;
            ax[i] = std::round(v * 1e12) / 1e12;
        }
        axes.push_back(std::move(ax));
    }
    return ThetaGrid(std::move(axes));
}

std::vector<std::size_t> ThetaGrid::coordinates(std::size_t index) const {
    std::vector<std::size_t> c(axes_.size());
    for (std::size_t d = axes_.size(); d-- > 0;) {
        c[d] = index % axes_[d].size();
        index /= axes_[d].size();
    }
    return c;
}

Eigen::VectorXd ThetaGrid::point(std::size_t index) const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(axes_.size()));
    for (std::size_t d = axes_.size(); d-- > 0;) {
        p(static_cast<Eigen::Index>(d)) = axes_[d][index % axes_[d].size()];
        index /= axes_[d].size();
    }
    return p;
}

bool ThetaGrid::on_edge(std::size_t index) const {
    for (std::size_t d = axes_.size(); d-- > 0;) {
        const std::size_t i = index % axes_[d].size();
        if (i == 0 || i + 1 == axes_[d].size()) return true;
        index /= axes_[d].size();
    }
    return false;
}

std::vector<AxisRange> parse_grid_spec(const std::string& spec) {
    std::vector<AxisRange> out;
    std::stringstream axes(spec);
    std::string part;
    while (std::getline(axes, part, ',')) {
        AxisRange r;
        std::stringstream fields(part);
        std::string f;
        std::vector<double> vals;
        while (std::getline(fields, f, ':')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(f, &used));
                if (used != f.size()) throw std::invalid_argument(f);
            } catch (const std::exception&) {
                throw InputError("cannot parse grid axis '" + part + "': expected lo:hi:step");
            }
        }
        if (vals.size() != 3) throw InputError("cannot parse grid axis '" + part + "': expected lo:hi:step");
        r.lo = vals[0];
        r.hi = vals[1];
        r.step = vals[2];
        if (!(r.step > 0.0) || !(r.hi >= r.lo) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
            throw InputError("grid axis '" + part + "' needs lo <= hi and step > 0");
        }
        out.push_back(r);
    }
    if (out.empty()) throw InputError("empty grid specification");
    return out;
}

}  // namespace mvmr

#include "volenc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "volenc/error.hpp"

namespace volenc {

namespace {

// Axis values come from CSV text and user flags; compare with a tolerance
// far below the grid spacing.
constexpr double kAxisTol = 1e-9;

void check_axis(const std::vector<double>& axis, const char* name) {
    if (axis.empty()) {
        throw ValidationError(std::string("grid axis '") + name + "' is empty");
    }
    for (std::size_t i = 0; i < axis.size(); ++i) {
        if (!std::isfinite(axis[i]) || axis[i] <= 0.0) {
            std::ostringstream os;
            os << "grid axis '" << name << "' has non-positive value " << axis[i];
            throw ValidationError(os.str());
        }
        if (i > 0 && !(axis[i] > axis[i - 1])) {
            std::ostringstream os;
            os << "grid axis '" << name << "' is not strictly increasing at " << axis[i];
            throw ValidationError(os.str());
        }
    }
}

std::size_t find_axis(const std::vector<double>& axis, double value, const char* name) {
    for (std::size_t i = 0; i < axis.size(); ++i) {
        if (std::abs(axis[i] - value) <= kAxisTol * std::max(1.0, std::abs(value))) return i;
    }
    std::ostringstream os;
    os << name << " " << value << " is not on the grid";
    throw ValidationError(os.str());
}

}  // namespace

GridSpec GridSpec::canonical() {
    return GridSpec{{3, 6, 9, 12, 18, 24, 36, 48}, {0.80, 0.90, 0.95, 1.00, 1.05, 1.10, 1.20}};
}

void GridSpec::validate() const {
    check_axis(terms, "terms");
    check_axis(moneyness, "moneyness");
}

std::size_t GridSpec::term_index(double term_months) const {
    return find_axis(terms, term_months, "term");
}

std::size_t GridSpec::moneyness_index(double m) const {
    return find_axis(moneyness, m, "moneyness");
}

SurfaceGrid::SurfaceGrid(GridSpec grid, std::vector<double> vols)
    : grid_(std::move(grid)), vols_(std::move(vols)) {
    grid_.validate();
    if (vols_.size() != grid_.size()) {
        std::ostringstream os;
        os << "surface has " << vols_.size() << " vols, grid expects " << grid_.size();
        throw ValidationError(os.str());
    }
    for (std::size_t k = 0; k < vols_.size(); ++k) {
        if (!std::isfinite(vols_[k]) || vols_[k] <= 0.0) {
            const std::size_t nm = grid_.n_moneyness();
            std::ostringstream os;
            os << "implied vol " << vols_[k] << " at term " << grid_.terms[k / nm]
               << " moneyness " << grid_.moneyness[k % nm] << " must be finite and > 0";
            throw ValidationError(os.str());
        }
    }
}

double SurfaceGrid::mean() const {
    return std::accumulate(vols_.begin(), vols_.end(), 0.0) / static_cast<double>(vols_.size());
}

Eigen::VectorXd flatten(const SurfaceGrid& surface) {
    const auto& v = surface.vols();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

SurfaceGrid unflatten(const GridSpec& grid, const Eigen::VectorXd& values) {
    return SurfaceGrid(grid, std::vector<double>(values.data(), values.data() + values.size()));
}

std::vector<bool> subset_mask(const GridSpec& grid, std::span<const double> terms_kept,
                              std::span<const double> moneyness_kept) {
    std::vector<bool> keep_term(grid.n_terms(), false);
    std::vector<bool> keep_m(grid.n_moneyness(), false);
    for (double t : terms_kept) keep_term[grid.term_index(t)] = true;
    for (double m : moneyness_kept) keep_m[grid.moneyness_index(m)] = true;

    std::vector<bool> mask(grid.size(), false);
    for (std::size_t i = 0; i < grid.n_terms(); ++i) {
        for (std::size_t j = 0; j < grid.n_moneyness(); ++j) {
            mask[grid.index(i, j)] = keep_term[i] && keep_m[j];
        }
    }
    return mask;
}

std::vector<bool> canonical_known_mask(const GridSpec& grid) {
    const double terms[] = {3, 6, 9, 12};
    const double money[] = {0.95, 1.00, 1.05};
    return subset_mask(grid, terms, money);
}

std::size_t count_true(const std::vector<bool>& mask) {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

}  // namespace volenc

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace volenc {

/// Term (months) by moneyness (K/S) lattice on which every surface lives.
struct GridSpec {
    std::vector<double> terms;
    std::vector<double> moneyness;

    /// 8 terms x 7 moneyness points used throughout the toolkit.
    static GridSpec canonical();

    /// Throws ValidationError unless both axes are non-empty, positive and
    /// strictly increasing.
    void validate() const;

    std::size_t n_terms() const { return terms.size(); }
    std::size_t n_moneyness() const { return moneyness.size(); }
    std::size_t size() const { return terms.size() * moneyness.size(); }

    /// Row-major (term-major) flat index.
    std::size_t index(std::size_t term_idx, std::size_t m_idx) const {
        return term_idx * moneyness.size() + m_idx;
    }

    /// Position of an exact axis value, or throws ValidationError naming it.
    std::size_t term_index(double term_months) const;
    std::size_t moneyness_index(double m) const;

    bool operator==(const GridSpec&) const = default;
};

/// One implied-vol surface. Vols are decimal fractions (0.20 == 20%),
/// stored row-major with rows indexed by term.
class SurfaceGrid {
public:
    /// Validates that the grid is well formed, the value count matches and
    /// every vol is finite and strictly positive.
    SurfaceGrid(GridSpec grid, std::vector<double> vols);

    const GridSpec& grid() const { return grid_; }
    const std::vector<double>& vols() const { return vols_; }
    double at(std::size_t term_idx, std::size_t m_idx) const {
        return vols_[grid_.index(term_idx, m_idx)];
    }
    double mean() const;

    bool operator==(const SurfaceGrid&) const = default;

private:
    GridSpec grid_;
    std::vector<double> vols_;
};

Eigen::VectorXd flatten(const SurfaceGrid& surface);
SurfaceGrid unflatten(const GridSpec& grid, const Eigen::VectorXd& values);

/// Boolean mask over the flattened grid that is true exactly where both the
/// term and the moneyness belong to the kept sets.
std::vector<bool> subset_mask(const GridSpec& grid, std::span<const double> terms_kept,
                              std::span<const double> moneyness_kept);

/// 3, 6, 9, 12 months by 0.95, 1.00, 1.05: the short-dated near-the-money block.
std::vector<bool> canonical_known_mask(const GridSpec& grid);

std::size_t count_true(const std::vector<bool>& mask);

}  // namespace volenc

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "volenc/grid.hpp"

namespace volenc {

/// Bid/offer-derived tolerance per (term, moneyness) bucket, decimal vols.
/// Term buckets (0,3], (3,9], (9,inf) months; moneyness buckets (0,0.9],
/// (0.9,1.05], (1.05,inf).
struct ThresholdTable {
    std::array<std::array<double, 3>, 3> values{};

    static ThresholdTable canonical();

    double threshold_for(double term_months, double moneyness) const;
};

/// Reads three lines of three comma-separated decimals, rows by term bucket.
/// Blank lines and lines starting with '#' are skipped.
ThresholdTable load_thresholds(const std::filesystem::path& path);

double threshold_for(double term_months, double moneyness);

struct EvalReport {
    std::size_t points = 0;
    std::size_t satisfactory = 0;
    double rate = 0.0;
    double mae = 0.0;
};

/// Point (i, j) is satisfactory iff |truth - pred| < threshold (strict).
EvalReport satisfaction(const SurfaceGrid& truth, const SurfaceGrid& pred,
                        const ThresholdTable& table = ThresholdTable::canonical());

/// Pools `part` into `total`, weighting by point count.
void accumulate(EvalReport& total, const EvalReport& part);

struct MaeSplit {
    std::optional<double> inside;   // over mask-true points
    std::optional<double> outside;  // over mask-false points
};

MaeSplit mae_split(const SurfaceGrid& truth, const SurfaceGrid& pred, const std::vector<bool>& mask);

}  // namespace volenc

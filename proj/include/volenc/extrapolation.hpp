#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volenc/corpus.hpp"
#include "volenc/evaluation.hpp"
#include "volenc/lbfgs.hpp"
#include "volenc/vae.hpp"

namespace volenc {

/// Known points of a surface: values holds one vol per true mask entry, in
/// flattened order.
struct PartialSurface {
    GridSpec grid;
    std::vector<bool> mask;
    std::vector<double> values;

    static PartialSurface from_surface(const SurfaceGrid& s, const std::vector<bool>& mask);
    void validate() const;
};

struct ExtrapolationOptions {
    int starts = 8;            // origin plus starts - 1 prior draws
    std::uint64_t seed = 1;
    double huber_delta = 1e-6;
    LbfgsOptions lbfgs;
};

struct ExtrapolationResult {
    Eigen::VectorXd z_hat;
    SurfaceGrid surface;       // decode(model, z_hat)
    double objective = 0.0;    // smoothed MAE on the known points
    double mae_known = 0.0;    // plain MAE on the known points
    int iterations = 0;        // of the winning start
    bool converged = false;
    int best_start = 0;
};

/// Smoothed known-point MAE at z and its gradient.
double extrapolation_objective(const VaeModel& model, const PartialSurface& partial, const Eigen::VectorXd& z,
                               Eigen::VectorXd* grad, double huber_delta = 1e-6);

/// Multi-start L-BFGS search for the latent code whose decoded surface best
/// matches the known points. Throws ValidationError with no known points and
/// Error when every start gives a non-finite objective.
ExtrapolationResult extrapolate(const VaeModel& model, const PartialSurface& partial,
                                const ExtrapolationOptions& opts = {});

struct ExtrapolationRow {
    std::string symbol;
    std::size_t surfaces = 0;
    double mae_known = 0.0;
    double mae_unknown = 0.0;
    double satisfaction = 0.0;  // over all grid points
};

struct ExtrapolationTable {
    std::vector<ExtrapolationRow> rows;  // one per symbol, sorted
    ExtrapolationRow overall;            // symbol "ALL"
};

/// Extrapolates every record from its masked points and scores the full
/// prediction against the record.
ExtrapolationTable evaluate_extrapolation(const VaeModel& model, std::span<const SurfaceRecord* const> records,
                                          const std::vector<bool>& mask, const ExtrapolationOptions& opts = {},
                                          const ThresholdTable& thresholds = ThresholdTable::canonical());

/// symbol,surfaces,mae_known,mae_unknown,satisfaction with an ALL row last.
void save_extrapolation_table(const ExtrapolationTable& t, const std::filesystem::path& path);

}  // namespace volenc

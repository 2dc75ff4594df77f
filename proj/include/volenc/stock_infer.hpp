#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volenc/corpus.hpp"
#include "volenc/evaluation.hpp"
#include "volenc/synth.hpp"
#include "volenc/vae.hpp"

namespace volenc {

struct OlsFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd std_error;  // classical, sigma^2 (X'X)^-1 with n - p dof
    Eigen::VectorXd residuals;
};

/// Least squares with an explicit rank check. `names` labels the columns of
/// X; a rank-deficient design throws ValidationError naming a column that
/// is collinear with the others.
OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names);

struct LatentPoint {
    Date date;
    Eigen::VectorXd mu;
};
using LatentSeries = std::vector<LatentPoint>;  // sorted by date

/// Per-latent regressions mu_stock_k = b0 + b1 * mu_index_k + b2 * rv_std,
/// where rv_std is realised vol standardised with the window's mean and sd.
struct RegressionWindowModel {
    Date first_date;  // first observation used
    Date last_date;   // last observation used; predictions must come later
    std::size_t window = 0;
    double rv_mean = 0.0;
    double rv_sd = 0.0;
    std::vector<Eigen::Vector3d> coef;    // one per latent: intercept, index slope, rv slope
    std::vector<Eigen::Vector3d> std_error;
};

/// Fits on the last `window` dates strictly before `end` on which all three
/// series have a value. Throws ValidationError when window < 10, when fewer
/// than `window` aligned dates exist, or when the design is rank deficient.
RegressionWindowModel fit_window(const LatentSeries& stock, const LatentSeries& index,
                                 const std::vector<DatedValue>& realized, Date end, std::size_t window);

/// Throws ValidationError unless reg.last_date < date.
Eigen::VectorXd predict_latent(const RegressionWindowModel& reg, const Eigen::VectorXd& index_mu,
                               double realized, Date date);
SurfaceGrid predict_surface(const VaeModel& model, const RegressionWindowModel& reg,
                            const Eigen::VectorXd& index_mu, double realized, Date date);

struct InferenceConfig {
    std::size_t window = 60;
    std::size_t realized_window = 252;
    std::string index_symbol = "IDX";
};

struct InferenceRow {
    std::string symbol;
    std::size_t predictions = 0;
    std::vector<double> z_error;  // mean |z_hat_k - mu_k| per latent
    double satisfaction = 0.0;
};

struct InferenceTable {
    std::vector<InferenceRow> rows;  // stocks only, sorted
    double mean_satisfaction = 0.0;  // unweighted mean over stocks
};

/// Walk-forward over the test dates of every non-index symbol: refit on the
/// trailing window, predict, decode and score against the recorded surface
/// and its encoded mu.
InferenceTable evaluate_inference(const VaeModel& model, const Corpus& corpus, const PriceTable& prices,
                                  const InferenceConfig& cfg = {},
                                  const ThresholdTable& thresholds = ThresholdTable::canonical());

/// symbol,predictions,z1_error..zD_error,satisfaction
void save_inference_table(const InferenceTable& t, const std::filesystem::path& path);

}  // namespace volenc

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volenc/corpus.hpp"
#include "volenc/error.hpp"
#include "volenc/vae.hpp"

namespace volenc {

struct EncodedEntry {
    Date date;
    std::string symbol;
    bool stress = false;
    LatentCode code;
};

using EncodedCorpus = std::vector<EncodedEntry>;

/// One entry per record, in corpus order. Throws ValidationError when the
/// model and corpus grids differ.
EncodedCorpus encode_corpus(const VaeModel& model, const Corpus& corpus);
EncodedCorpus encode_records(const VaeModel& model, std::span<const SurfaceRecord* const> records);

/// D x N matrix of the entries' means.
Eigen::MatrixXd mu_matrix(const EncodedCorpus& enc);

struct CorrelationReport {
    Eigen::MatrixXd rho;                  // D x D, unit diagonal
    std::vector<int> zero_variance;       // latent indices with no spread
    std::vector<std::string> warnings;
};

/// Pearson correlations of mu across entries. A zero-variance latent gets
/// zero off-diagonal correlations and a warning. Needs >= 3 entries.
CorrelationReport latent_correlations(const EncodedCorpus& enc);
CorrelationReport latent_correlations(const Eigen::MatrixXd& mu);

double max_off_diagonal(const Eigen::MatrixXd& rho);

enum class Role { level = 0, skew = 1, term = 2 };
inline constexpr std::array<Role, 3> kRoles{Role::level, Role::skew, Role::term};
std::string to_string(Role r);

/// Level: grid mean. Skew: minus the mean over terms of the OLS slope of vol
/// against moneyness. Term: mean over moneyness of the OLS slope of vol
/// against log term. Positive skew means richer low strikes.
std::array<double, 3> shape_statistics(const SurfaceGrid& s);

struct SweepConfig {
    double lo = -2.0;
    double hi = 2.0;
    int steps = 21;

    std::vector<double> values() const;
};

struct FactorMatch {
    std::array<int, 3> latent_for_role{};  // indexed by Role
    std::array<int, 3> sign{};             // +1 / -1, indexed by Role
    Eigen::Matrix3d response;              // d statistic / d z, rows latents, cols roles
    Eigen::Matrix3d scores;                // |response| scaled by its column max
    double dominance_ratio = 0.0;          // min over roles: assigned score / best other score

    int role_of_latent(int latent) const;
};

class DegenerateMatchError : public ValidationError {
public:
    DegenerateMatchError(const std::string& what, Eigen::Matrix3d scores)
        : ValidationError(what), scores_(scores) {}
    const Eigen::Matrix3d& scores() const { return scores_; }

private:
    Eigen::Matrix3d scores_;
};

using SurfaceDecoder = std::function<SurfaceGrid(const Eigen::VectorXd&)>;

/// Sweeps each latent alone from the origin, regresses the three shape
/// statistics on the sweep value and picks the best-scoring one-to-one
/// assignment of latents to roles. Throws DegenerateMatchError when a
/// statistic's two strongest latents are within 10% of each other.
FactorMatch match_factors(const SurfaceDecoder& decoder, int latent_dim, const SweepConfig& cfg = {});
FactorMatch match_factors(const VaeModel& model, const SweepConfig& cfg = {});

/// Decodes base_z with coordinate `dim` replaced by each value in turn.
std::vector<SurfaceGrid> scenario_sweep(const VaeModel& model, const Eigen::VectorXd& base_z, int dim,
                                        std::span<const double> values);

struct StressSummary {
    std::size_t n_stress = 0, n_calm = 0;
    Eigen::VectorXd mean_stress, mean_calm;  // per-latent mean mu
};

StressSummary stress_summary(const EncodedCorpus& enc);

/// date,symbol,stress,mu_1..mu_D,log_sigma_1..log_sigma_D
void save_encodings(const EncodedCorpus& enc, const std::filesystem::path& path);
/// Square matrix with Z1..ZD labels on both axes.
void save_correlations(const Eigen::MatrixXd& rho, const std::filesystem::path& path);
/// Sweep surfaces in corpus CSV format; step k is stored under symbol
/// "Z<dim+1>_<k>" on `date`.
void save_sweep(const std::vector<SurfaceGrid>& surfaces, int dim, Date date, const std::filesystem::path& path);

}  // namespace volenc

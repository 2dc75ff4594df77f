#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "volenc/corpus.hpp"
#include "volenc/grid.hpp"
#include "volenc/neural.hpp"

namespace volenc {

/// Hidden widths; the canonical model is 56-32-16-(2D) / D-16-32-56.
struct VaeArchitecture {
    std::vector<int> encoder_hidden{32, 16};
    std::vector<int> decoder_hidden{16, 32};
};

/// How pairwise latent covariances enter the training objective.
enum class CovPenalty {
    signed_sum,    // sum_{i<j} cov_ij
    absolute_sum,  // sum_{i<j} |cov_ij|
    squared_sum,   // sum_{i<j} cov_ij^2
};

std::string to_string(CovPenalty p);
CovPenalty cov_penalty_from_string(const std::string& name);

struct VaeConfig {
    int latent_dim = 3;
    double lambda_kl = 1e-4;
    double lambda_cov = 0.1;  // 0 gives the classic VAE
    CovPenalty cov_penalty = CovPenalty::absolute_sum;
    std::uint64_t seed = 1;
    VaeArchitecture architecture;
};

/// PCA variational auto-encoder for one grid.
///
/// The encoder maps a standardised surface to 2D outputs: the first D are
/// the latent means, the last D the log standard deviations. Its last layer
/// starts at zero so a fresh model encodes every surface to the prior. The
/// decoder ends in a softplus so decoded vols are strictly positive.
struct VaeModel {
    GridSpec grid;
    int latent_dim = 3;
    double lambda_kl = 1e-4;
    double lambda_cov = 0.1;
    CovPenalty cov_penalty = CovPenalty::absolute_sum;
    std::uint64_t seed = 1;
    nn::DenseNet encoder;
    nn::DenseNet decoder;
    /// Encoder input standardisation, fitted on the training split.
    Eigen::VectorXd input_shift;
    Eigen::VectorXd input_scale;
    bool data_initialized = false;

    static VaeModel create(const GridSpec& grid, const VaeConfig& config = {});
};

struct LatentCode {
    Eigen::VectorXd mu;
    Eigen::VectorXd log_sigma;  // log of the standard deviation
    std::optional<Eigen::VectorXd> z;
    std::optional<Eigen::VectorXd> eps;
};

struct LossBreakdown {
    double recon = 0.0;
    double kl = 0.0;
    double cov = 0.0;
    double total = 0.0;
};

struct TrainConfig {
    int epochs = 40;
    int batch_size = 64;
    double learning_rate = 2e-3;
    std::uint64_t seed = 1;
    bool shuffle = true;
};

struct EpochStats {
    int epoch = 0;
    LossBreakdown loss;      // per-batch losses averaged over the epoch
    double mean_sigma = 0.0; // mean exp(log_sigma) over every sample seen
};

struct TrainResult {
    VaeModel model;
    std::vector<EpochStats> history;
};

LatentCode encode(const VaeModel& model, const Eigen::VectorXd& x);
LatentCode encode(const VaeModel& model, const SurfaceGrid& surface);

/// Batched encode: one surface per column. Returns D x N means and log sigmas.
void encode_batch(const VaeModel& model, const Eigen::MatrixXd& x, Eigen::MatrixXd& mu,
                  Eigen::MatrixXd& log_sigma);

/// z = mu + exp(log_sigma) * eps with eps ~ N(0, I); eps and z are recorded
/// on `code`.
Eigen::VectorXd sample_z(LatentCode& code, std::mt19937_64& rng);

Eigen::VectorXd decode_vector(const VaeModel& model, const Eigen::VectorXd& z);
SurfaceGrid decode(const VaeModel& model, const Eigen::VectorXd& z);

/// Per-sample KL to N(0, I), -1/2 * sum_k (1 + log s_k^2 - s_k^2 - mu_k^2),
/// averaged over the batch (columns).
double loss_kl(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& log_sigma);
double loss_kl(std::span<const LatentCode> codes);

/// Sum over latent pairs i < j of the batch covariance of columns i and j.
/// `z_batch` is B x D (one sample per row). Throws ValidationError if B < 2.
double loss_cov(const Eigen::MatrixXd& z_batch);

/// Diagnostic variant summing absolute pairwise covariances.
double loss_cov_abs(const Eigen::MatrixXd& z_batch);

/// Mean absolute error.
double loss_recon(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat);

struct BatchEvaluation {
    LossBreakdown loss;
    Eigen::MatrixXd mu, log_sigma, z, x_hat;
    Eigen::VectorXd encoder_grad;  // packed like DenseNet::parameters()
    Eigen::VectorXd decoder_grad;
};

/// Full loss recon + lambda_kl * kl + lambda_cov * cov for the batch `x`
/// (one surface per column) with the standard-normal draws `eps` (D x B)
/// held fixed. Gradients are filled when `with_gradients` is set.
BatchEvaluation evaluate_batch(const VaeModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps,
                               bool with_gradients = true);

/// Fits input standardisation and the decoder output bias to `x`.
void initialize_from_data(VaeModel& model, const Eigen::MatrixXd& x);

/// Minibatch Adam on the training split of `corpus`. Deterministic given
/// the model, corpus and config. Throws ValidationError on an empty
/// training split, a grid mismatch or batch_size < 2.
TrainResult train(VaeModel model, const Corpus& corpus, const TrainConfig& config);

/// Checkpoint I/O; see docs/checkpoint_format.md.
void save_model(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_model(const std::filesystem::path& path);
std::string model_to_json(const VaeModel& model);
VaeModel model_from_json(const std::string& text);

inline constexpr int kCheckpointVersion = 1;

/// Stacks the records' flattened surfaces column-wise.
Eigen::MatrixXd surfaces_to_matrix(std::span<const SurfaceRecord* const> records);

}  // namespace volenc

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace volenc::nn {

enum class Activation { identity, tanh, softplus };

std::string to_string(Activation a);
/// Throws SchemaError on an unknown name.
Activation activation_from_string(const std::string& name);

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
    Activation activation = Activation::identity;
};

/// Feed-forward stack of affine layers, each followed by its activation.
///
/// Every mutation through the non-const accessors bumps a revision number
/// so that forward caches taken before the change are rejected by backward.
class DenseNet {
public:
    DenseNet() = default;
    /// Throws ValidationError if adjacent layer shapes do not chain.
    explicit DenseNet(std::vector<DenseLayer> layers);

    /// Layer sizes {in, h1, ..., out}; weights and biases drawn from
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static DenseNet uniform_fan_in(std::span<const int> sizes, std::span<const Activation> activations,
                                   std::mt19937_64& rng);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    DenseLayer& mutable_layer(std::size_t i);

    Eigen::Index input_size() const;
    Eigen::Index output_size() const;
    std::size_t parameter_count() const;

    /// Parameters packed layer by layer: weights row-major, then bias.
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& packed);

    std::uint64_t revision() const { return revision_; }

private:
    void touch();

    std::vector<DenseLayer> layers_;
    std::uint64_t revision_ = 0;
};

/// Intermediates of one forward pass over a batch (one sample per column).
struct ForwardCache {
    const DenseNet* net = nullptr;
    std::uint64_t revision = 0;
    std::vector<Eigen::MatrixXd> inputs;       // input to each layer
    std::vector<Eigen::MatrixXd> pre;          // affine output of each layer
    Eigen::MatrixXd output;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;
    Eigen::MatrixXd input;

    /// Same packing as DenseNet::parameters().
    Eigen::VectorXd packed() const;
};

ForwardCache forward(const DenseNet& net, const Eigen::MatrixXd& batch);
Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x);

/// Reverse-mode gradients of a scalar whose gradient with respect to the
/// network output is `upstream` (same shape as cache.output). Throws
/// ValidationError if the cache does not belong to `net` at its current
/// revision.
Gradients backward(const DenseNet& net, const Eigen::MatrixXd& upstream, const ForwardCache& cache);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamState(std::size_t n_params, AdamConfig config = {});

    AdamConfig config;
    long step = 0;
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    Eigen::VectorXd numeric;
};

/// Central differences of `f` at `x` compared with `analytic` elementwise:
/// |a - n| / max(|a|, |n|, floor).
GradCheckReport check_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& analytic,
                               double h = 1e-5, double floor = 1e-8);

}  // namespace volenc::nn

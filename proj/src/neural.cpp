#include "volenc/neural.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "volenc/error.hpp"

namespace volenc::nn {

namespace {

std::atomic<std::uint64_t> g_revision{1};

void apply_activation(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
    switch (a) {
    case Activation::identity:
        out = pre;
        break;
    case Activation::tanh:
        out = pre.array().tanh();
        break;
    case Activation::softplus:
        out = pre.unaryExpr([](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
        break;
    }
}

// d(activation)/d(pre), elementwise.
Eigen::MatrixXd activation_slope(Activation a, const Eigen::MatrixXd& pre) {
    switch (a) {
    case Activation::identity:
        return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::tanh:
        return 1.0 - pre.array().tanh().square();
    case Activation::softplus:
        return pre.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    }
    return {};
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    }
    return "?";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "softplus") return Activation::softplus;
    throw SchemaError("unknown activation '" + name + "'");
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ValidationError("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.weights.rows() != l.bias.size() || l.weights.rows() == 0 || l.weights.cols() == 0) {
            throw ValidationError("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
        }
        if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows()) {
            throw ValidationError("layer " + std::to_string(i) + " input size " +
                                  std::to_string(l.weights.cols()) + " does not match previous output " +
                                  std::to_string(layers_[i - 1].weights.rows()));
        }
    }
    touch();
}

DenseNet DenseNet::uniform_fan_in(std::span<const int> sizes, std::span<const Activation> activations,
                                  std::mt19937_64& rng) {
    if (sizes.size() < 2 || activations.size() + 1 != sizes.size()) {
        throw ValidationError("need one activation per layer");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
        std::uniform_real_distribution<double> u(-bound, bound);
        DenseLayer l;
        l.weights.resize(sizes[i + 1], sizes[i]);
        // Row-major fill so the draw order matches the packed layout.
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = u(rng);
        }
        l.bias.resize(sizes[i + 1]);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = u(rng);
        l.activation = activations[i];
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

DenseLayer& DenseNet::mutable_layer(std::size_t i) {
    touch();
    return layers_.at(i);
}

void DenseNet::touch() {
    revision_ = g_revision.fetch_add(1);
}

Eigen::Index DenseNet::input_size() const {
    return layers_.empty() ? 0 : layers_.front().weights.cols();
}

Eigen::Index DenseNet::output_size() const {
    return layers_.empty() ? 0 : layers_.back().weights.rows();
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

Eigen::VectorXd DenseNet::parameters() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out(k++) = l.weights(r, c);
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) out(k++) = l.bias(r);
    }
    return out;
}

void DenseNet::set_parameters(const Eigen::VectorXd& packed) {
    if (static_cast<std::size_t>(packed.size()) != parameter_count()) {
        throw ValidationError("parameter vector has " + std::to_string(packed.size()) + " entries, network has " +
                              std::to_string(parameter_count()));
    }
    Eigen::Index k = 0;
    for (auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = packed(k++);
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = packed(k++);
    }
    touch();
}

Eigen::VectorXd Gradients::packed() const {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + bias[i].size();
    Eigen::VectorXd out(n);
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        for (Eigen::Index r = 0; r < weights[i].rows(); ++r) {
            for (Eigen::Index c = 0; c < weights[i].cols(); ++c) out(k++) = weights[i](r, c);
        }
        for (Eigen::Index r = 0; r < bias[i].size(); ++r) out(k++) = bias[i](r);
    }
    return out;
}

ForwardCache forward(const DenseNet& net, const Eigen::MatrixXd& batch) {
    if (net.layers().empty()) throw ValidationError("empty network");
    if (batch.rows() != net.input_size()) {
        throw ValidationError("input has " + std::to_string(batch.rows()) + " rows, network expects " +
                              std::to_string(net.input_size()));
    }
    ForwardCache cache;
    cache.net = &net;
    cache.revision = net.revision();
    cache.inputs.reserve(net.layers().size());
    cache.pre.reserve(net.layers().size());
    Eigen::MatrixXd x = batch;
    for (const auto& l : net.layers()) {
        Eigen::MatrixXd pre = l.weights * x;
        pre.colwise() += l.bias;
        cache.inputs.push_back(std::move(x));
        apply_activation(l.activation, pre, x);
        cache.pre.push_back(std::move(pre));
    }
    cache.output = std::move(x);
    return cache;
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x) {
    return forward(net, Eigen::MatrixXd(x)).output.col(0);
}

Gradients backward(const DenseNet& net, const Eigen::MatrixXd& upstream, const ForwardCache& cache) {
    if (cache.net != &net || cache.revision != net.revision() || cache.pre.size() != net.layers().size()) {
        throw ValidationError("stale forward cache: network changed since the forward pass");
    }
    if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
        throw ValidationError("upstream gradient shape does not match network output");
    }
    const std::size_t n = net.layers().size();
    Gradients g;
    g.weights.resize(n);
    g.bias.resize(n);
    Eigen::MatrixXd delta = upstream;
    for (std::size_t i = n; i-- > 0;) {
        const auto& l = net.layers()[i];
        if (l.activation != Activation::identity) {
            delta.array() *= activation_slope(l.activation, cache.pre[i]).array();
        }
        g.weights[i] = delta * cache.inputs[i].transpose();
        g.bias[i] = delta.rowwise().sum();
        delta = l.weights.transpose() * delta;
    }
    g.input = std::move(delta);
    return g;
}

AdamState::AdamState(std::size_t n_params, AdamConfig cfg)
    : config(cfg),
      first_moment(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))),
      second_moment(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))) {}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ValidationError("adam: parameter, gradient and moment sizes differ (" +
                              std::to_string(params.size()) + ", " + std::to_string(grads.size()) + ", " +
                              std::to_string(state.first_moment.size()) + ")");
    }
    const auto& c = state.config;
    ++state.step;
    state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
    state.second_moment = c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.cwiseAbs2();
    const double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    params.array() -= c.lr * (state.first_moment.array() / corr1) /
                      ((state.second_moment.array() / corr2).sqrt() + c.epsilon);
}

GradCheckReport check_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double h,
                               double floor) {
    if (analytic.size() != x.size()) throw ValidationError("gradient size does not match point size");
    GradCheckReport rep;
    rep.numeric.resize(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double up = f(probe);
        probe(i) = x(i) - h;
        const double down = f(probe);
        probe(i) = x(i);
        rep.numeric(i) = (up - down) / (2.0 * h);
        const double a = analytic(i);
        const double num = rep.numeric(i);
        const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
        if (rel > rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = static_cast<std::size_t>(i);
        }
    }
    return rep;
}

}  // namespace volenc::nn

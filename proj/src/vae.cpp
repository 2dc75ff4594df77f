#include "volenc/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "volenc/error.hpp"
#include "volenc/synth.hpp"

namespace volenc {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "volenc-pca-vae";

void check_grid_size(const VaeModel& model, Eigen::Index rows) {
    if (rows != static_cast<Eigen::Index>(model.grid.size())) {
        throw ValidationError("surface vector has " + std::to_string(rows) + " points, model grid has " +
                              std::to_string(model.grid.size()));
    }
}

Eigen::MatrixXd standardize(const VaeModel& model, const Eigen::MatrixXd& x) {
    check_grid_size(model, x.rows());
    Eigen::MatrixXd out = x;
    out.colwise() -= model.input_shift;
    out.array().colwise() /= model.input_scale.array();
    return out;
}

// Subtracts each latent's batch mean (rows are latents, columns samples).
Eigen::MatrixXd centered(const Eigen::MatrixXd& z_cols) {
    Eigen::MatrixXd c = z_cols;
    c.colwise() -= z_cols.rowwise().mean();
    return c;
}

}  // namespace

std::string to_string(CovPenalty p) {
    switch (p) {
    case CovPenalty::signed_sum: return "signed";
    case CovPenalty::absolute_sum: return "absolute";
    case CovPenalty::squared_sum: return "squared";
    }
    return "?";
}

CovPenalty cov_penalty_from_string(const std::string& name) {
    if (name == "signed") return CovPenalty::signed_sum;
    if (name == "absolute") return CovPenalty::absolute_sum;
    if (name == "squared") return CovPenalty::squared_sum;
    throw ValidationError("unknown covariance penalty '" + name + "' (expected signed, absolute or squared)");
}

VaeModel VaeModel::create(const GridSpec& grid, const VaeConfig& config) {
    grid.validate();
    if (config.latent_dim < 1) throw ValidationError("latent_dim must be >= 1");
    if (config.lambda_kl < 0.0 || config.lambda_cov < 0.0) {
        throw ValidationError("loss weights must be >= 0");
    }
    const int n = static_cast<int>(grid.size());
    const int d = config.latent_dim;
    std::mt19937_64 rng(config.seed);

    std::vector<int> enc_sizes{n};
    std::vector<nn::Activation> enc_act;
    for (int h : config.architecture.encoder_hidden) {
        enc_sizes.push_back(h);
        enc_act.push_back(nn::Activation::tanh);
    }
    enc_sizes.push_back(2 * d);
    enc_act.push_back(nn::Activation::identity);

    std::vector<int> dec_sizes{d};
    std::vector<nn::Activation> dec_act;
    for (int h : config.architecture.decoder_hidden) {
        dec_sizes.push_back(h);
        dec_act.push_back(nn::Activation::tanh);
    }
    dec_sizes.push_back(n);
    dec_act.push_back(nn::Activation::softplus);

    VaeModel m;
    m.grid = grid;
    m.latent_dim = d;
    m.lambda_kl = config.lambda_kl;
    m.lambda_cov = config.lambda_cov;
    m.cov_penalty = config.cov_penalty;
    m.seed = config.seed;
    m.encoder = nn::DenseNet::uniform_fan_in(enc_sizes, enc_act, rng);
    m.decoder = nn::DenseNet::uniform_fan_in(dec_sizes, dec_act, rng);
    auto& head = m.encoder.mutable_layer(m.encoder.layers().size() - 1);
    head.weights.setZero();
    head.bias.setZero();
    m.input_shift = Eigen::VectorXd::Zero(n);
    m.input_scale = Eigen::VectorXd::Ones(n);
    return m;
}

void encode_batch(const VaeModel& model, const Eigen::MatrixXd& x, Eigen::MatrixXd& mu,
                  Eigen::MatrixXd& log_sigma) {
    const auto out = nn::forward(model.encoder, standardize(model, x)).output;
    const int d = model.latent_dim;
    mu = out.topRows(d);
    log_sigma = out.bottomRows(d);
}

LatentCode encode(const VaeModel& model, const Eigen::VectorXd& x) {
    Eigen::MatrixXd mu, ls;
    encode_batch(model, Eigen::MatrixXd(x), mu, ls);
    return {mu.col(0), ls.col(0), std::nullopt, std::nullopt};
}

LatentCode encode(const VaeModel& model, const SurfaceGrid& surface) {
    if (!(surface.grid() == model.grid)) throw ValidationError("surface grid does not match model grid");
    return encode(model, flatten(surface));
}

Eigen::VectorXd sample_z(LatentCode& code, std::mt19937_64& rng) {
    Eigen::VectorXd eps(code.mu.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = normal(rng);
    Eigen::VectorXd z = code.mu + (code.log_sigma.array().exp() * eps.array()).matrix();
    code.eps = eps;
    code.z = z;
    return z;
}

Eigen::VectorXd decode_vector(const VaeModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.latent_dim) {
        throw ValidationError("latent vector has " + std::to_string(z.size()) + " entries, model expects " +
                              std::to_string(model.latent_dim));
    }
    return nn::forward(model.decoder, z);
}

SurfaceGrid decode(const VaeModel& model, const Eigen::VectorXd& z) {
    return unflatten(model.grid, decode_vector(model, z));
}

double loss_kl(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& log_sigma) {
    if (mu.cols() == 0) throw ValidationError("KL loss needs a non-empty batch");
    const Eigen::ArrayXXd ls = log_sigma.array();
    const double sum = (1.0 + 2.0 * ls - (2.0 * ls).exp() - mu.array().square()).sum();
    return -0.5 * sum / static_cast<double>(mu.cols());
}

double loss_kl(std::span<const LatentCode> codes) {
    if (codes.empty()) throw ValidationError("KL loss needs a non-empty batch");
    const auto d = codes.front().mu.size();
    Eigen::MatrixXd mu(d, static_cast<Eigen::Index>(codes.size()));
    Eigen::MatrixXd ls(d, static_cast<Eigen::Index>(codes.size()));
    for (std::size_t i = 0; i < codes.size(); ++i) {
        mu.col(static_cast<Eigen::Index>(i)) = codes[i].mu;
        ls.col(static_cast<Eigen::Index>(i)) = codes[i].log_sigma;
    }
    return loss_kl(mu, ls);
}

namespace {

Eigen::MatrixXd batch_covariance(const Eigen::MatrixXd& z_batch) {
    if (z_batch.rows() < 2) {
        throw ValidationError("covariance loss needs a batch of at least 2, got " +
                              std::to_string(z_batch.rows()));
    }
    const Eigen::MatrixXd c = centered(z_batch.transpose());
    return c * c.transpose() / static_cast<double>(z_batch.rows());
}

}  // namespace

double loss_cov(const Eigen::MatrixXd& z_batch) {
    const Eigen::MatrixXd cov = batch_covariance(z_batch);
    double s = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < cov.cols(); ++j) s += cov(i, j);
    }
    return s;
}

double loss_cov_abs(const Eigen::MatrixXd& z_batch) {
    const Eigen::MatrixXd cov = batch_covariance(z_batch);
    double s = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < cov.cols(); ++j) s += std::abs(cov(i, j));
    }
    return s;
}

double loss_recon(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat) {
    if (x.size() != x_hat.size() || x.size() == 0) {
        throw ValidationError("reconstruction loss needs equal, non-empty lengths");
    }
    return (x - x_hat).cwiseAbs().mean();
}

BatchEvaluation evaluate_batch(const VaeModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps,
                               bool with_gradients) {
    const int d = model.latent_dim;
    const Eigen::Index b = x.cols();
    if (b < 2) throw ValidationError("training batch must hold at least 2 surfaces");
    if (eps.rows() != d || eps.cols() != b) throw ValidationError("eps must be D x B");
    const double inv_b = 1.0 / static_cast<double>(b);

    BatchEvaluation out;
    const auto enc = nn::forward(model.encoder, standardize(model, x));
    out.mu = enc.output.topRows(d);
    out.log_sigma = enc.output.bottomRows(d);
    const Eigen::MatrixXd sigma = out.log_sigma.array().exp();
    out.z = out.mu + (sigma.array() * eps.array()).matrix();
    const auto dec = nn::forward(model.decoder, out.z);
    out.x_hat = dec.output;

    // Reconstruction error is measured on standardised surfaces.
    const Eigen::MatrixXd resid = (out.x_hat - x).array().colwise() / model.input_scale.array();
    const double n_points = static_cast<double>(x.rows());
    out.loss.recon = resid.cwiseAbs().sum() * inv_b / n_points;
    out.loss.kl = loss_kl(out.mu, out.log_sigma);
    const Eigen::MatrixXd zc = centered(out.z);
    const Eigen::MatrixXd cov = zc * zc.transpose() * inv_b;
    // pair_weight(i, j) = d penalty / d cov_ij for i != j.
    Eigen::MatrixXd pair_weight = Eigen::MatrixXd::Zero(d, d);
    double penalty = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            const double c = cov(i, j);
            double w = 1.0;
            switch (model.cov_penalty) {
            case CovPenalty::signed_sum:
                penalty += c;
                break;
            case CovPenalty::absolute_sum:
                penalty += std::abs(c);
                w = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
                break;
            case CovPenalty::squared_sum:
                penalty += c * c;
                w = 2.0 * c;
                break;
            }
            pair_weight(i, j) = pair_weight(j, i) = w;
        }
    }
    out.loss.cov = penalty;
    out.loss.total = out.loss.recon + model.lambda_kl * out.loss.kl + model.lambda_cov * out.loss.cov;
    if (!with_gradients) return out;

    Eigen::MatrixXd d_xhat = resid.unaryExpr([](double r) {
        return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    }) * (inv_b / n_points);
    d_xhat.array().colwise() /= model.input_scale.array();
    const auto dec_grad = nn::backward(model.decoder, d_xhat, dec);

    // d cov_ij / d z[i, t] = zc[j, t] / B
    const Eigen::MatrixXd d_cov = pair_weight * zc * inv_b;
    const Eigen::MatrixXd d_z = dec_grad.input + model.lambda_cov * d_cov;

    Eigen::MatrixXd d_head(2 * d, b);
    d_head.topRows(d) = d_z + model.lambda_kl * inv_b * out.mu;
    d_head.bottomRows(d) = (d_z.array() * sigma.array() * eps.array()).matrix() +
                           model.lambda_kl * inv_b * ((2.0 * out.log_sigma.array()).exp() - 1.0).matrix();
    const auto enc_grad = nn::backward(model.encoder, d_head, enc);

    out.encoder_grad = enc_grad.packed();
    out.decoder_grad = dec_grad.packed();
    return out;
}

Eigen::MatrixXd surfaces_to_matrix(std::span<const SurfaceRecord* const> records) {
    if (records.empty()) return {};
    const auto n = static_cast<Eigen::Index>(records.front()->surface.vols().size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        x.col(static_cast<Eigen::Index>(i)) = flatten(records[i]->surface);
    }
    return x;
}

void initialize_from_data(VaeModel& model, const Eigen::MatrixXd& x) {
    check_grid_size(model, x.rows());
    if (x.cols() < 2) throw ValidationError("need at least 2 surfaces to fit input scaling");
    model.input_shift = x.rowwise().mean();
    const Eigen::MatrixXd c = x.colwise() - model.input_shift;
    model.input_scale = (c.array().square().rowwise().sum() / static_cast<double>(x.cols() - 1)).sqrt().matrix();
    model.input_scale = model.input_scale.cwiseMax(1e-6);
    auto& out_layer = model.decoder.mutable_layer(model.decoder.layers().size() - 1);
    for (Eigen::Index k = 0; k < out_layer.bias.size(); ++k) {
        out_layer.bias(k) = inverse_softplus(model.input_shift(k));
    }
    model.data_initialized = true;
}

TrainResult train(VaeModel model, const Corpus& corpus, const TrainConfig& config) {
    if (!(corpus.grid() == model.grid)) throw ValidationError("corpus grid does not match model grid");
    if (config.batch_size < 2) throw ValidationError("batch_size must be >= 2");
    if (config.epochs < 0) throw ValidationError("epochs must be >= 0");
    const auto train_records = corpus.train();
    if (train_records.empty()) throw ValidationError("training split is empty");
    if (train_records.size() < 2) throw ValidationError("training split needs at least 2 surfaces");

    const Eigen::MatrixXd x_all = surfaces_to_matrix(train_records);
    if (!model.data_initialized) initialize_from_data(model, x_all);

    const auto n_enc = model.encoder.parameter_count();
    Eigen::VectorXd params(static_cast<Eigen::Index>(n_enc + model.decoder.parameter_count()));
    params << model.encoder.parameters(), model.decoder.parameters();
    nn::AdamState adam(static_cast<std::size_t>(params.size()), nn::AdamConfig{config.learning_rate});

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x_all.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainResult result;
    const int d = model.latent_dim;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
        EpochStats stats;
        stats.epoch = epoch;
        int n_batches = 0;
        double sigma_sum = 0.0;
        std::size_t sigma_count = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            // A trailing single surface has no covariance; it waits for the next epoch.
            if (end - start < 2) continue;
            const auto b = static_cast<Eigen::Index>(end - start);
            Eigen::MatrixXd xb(x_all.rows(), b);
            for (Eigen::Index i = 0; i < b; ++i) xb.col(i) = x_all.col(order[start + static_cast<std::size_t>(i)]);
            Eigen::MatrixXd eps(d, b);
            for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);

            const auto ev = evaluate_batch(model, xb, eps, true);
            Eigen::VectorXd grads(params.size());
            grads << ev.encoder_grad, ev.decoder_grad;
            nn::adam_step(params, grads, adam);
            model.encoder.set_parameters(params.head(static_cast<Eigen::Index>(n_enc)));
            model.decoder.set_parameters(params.tail(params.size() - static_cast<Eigen::Index>(n_enc)));

            stats.loss.recon += ev.loss.recon;
            stats.loss.kl += ev.loss.kl;
            stats.loss.cov += ev.loss.cov;
            stats.loss.total += ev.loss.total;
            sigma_sum += ev.log_sigma.array().exp().sum();
            sigma_count += static_cast<std::size_t>(ev.log_sigma.size());
            ++n_batches;
        }
        if (n_batches > 0) {
            stats.loss.recon /= n_batches;
            stats.loss.kl /= n_batches;
            stats.loss.cov /= n_batches;
            stats.loss.total /= n_batches;
            stats.mean_sigma = sigma_sum / static_cast<double>(sigma_count);
        }
        result.history.push_back(stats);
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json net_to_json(const nn::DenseNet& net) {
    json layers = json::array();
    for (const auto& l : net.layers()) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weights.size()));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
        }
        layers.push_back({{"in", l.weights.cols()},
                          {"out", l.weights.rows()},
                          {"activation", nn::to_string(l.activation)},
                          {"weights", w},
                          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    return {{"layers", layers}};
}

template <class T>
T field(const json& j, const std::string& name, const std::string& where) {
    if (!j.is_object() || !j.contains(name)) throw SchemaError("checkpoint: missing field '" + where + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw SchemaError("checkpoint: field '" + where + name + "' has the wrong type");
    }
}

nn::DenseNet net_from_json(const json& j, const std::string& where) {
    const auto layers_json = field<json>(j, "layers", where);
    if (!layers_json.is_array() || layers_json.empty()) {
        throw SchemaError("checkpoint: field '" + where + "layers' must be a non-empty array");
    }
    std::vector<nn::DenseLayer> layers;
    for (std::size_t i = 0; i < layers_json.size(); ++i) {
        const auto& lj = layers_json[i];
        const std::string at = where + "layers[" + std::to_string(i) + "].";
        const auto in = field<long>(lj, "in", at);
        const auto out = field<long>(lj, "out", at);
        const auto w = field<std::vector<double>>(lj, "weights", at);
        const auto b = field<std::vector<double>>(lj, "bias", at);
        if (in <= 0 || out <= 0) throw SchemaError("checkpoint: field '" + at + "in/out' must be positive");
        if (static_cast<long>(w.size()) != in * out) {
            throw SchemaError("checkpoint: field '" + at + "weights' has " + std::to_string(w.size()) +
                              " values, expected in*out = " + std::to_string(in * out));
        }
        if (static_cast<long>(b.size()) != out) {
            throw SchemaError("checkpoint: field '" + at + "bias' has " + std::to_string(b.size()) +
                              " values, expected out = " + std::to_string(out));
        }
        nn::DenseLayer l;
        l.weights.resize(out, in);
        for (long r = 0; r < out; ++r) {
            for (long c = 0; c < in; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
        }
        l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
        l.activation = nn::activation_from_string(field<std::string>(lj, "activation", at));
        layers.push_back(std::move(l));
    }
    try {
        return nn::DenseNet(std::move(layers));
    } catch (const ValidationError& e) {
        throw SchemaError("checkpoint: field '" + where + "layers' " + e.what());
    }
}

}  // namespace

std::string model_to_json(const VaeModel& model) {
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["latent_dim"] = model.latent_dim;
    j["lambda_kl"] = model.lambda_kl;
    j["lambda_cov"] = model.lambda_cov;
    j["cov_penalty"] = to_string(model.cov_penalty);
    j["seed"] = model.seed;
    j["grid"] = {{"terms", model.grid.terms}, {"moneyness", model.grid.moneyness}};
    j["data_initialized"] = model.data_initialized;
    j["input_shift"] = std::vector<double>(model.input_shift.data(), model.input_shift.data() + model.input_shift.size());
    j["input_scale"] = std::vector<double>(model.input_scale.data(), model.input_scale.data() + model.input_scale.size());
    j["encoder"] = net_to_json(model.encoder);
    j["decoder"] = net_to_json(model.decoder);
    return j.dump(1) + "\n";
}

VaeModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("checkpoint: not valid JSON: ") + e.what());
    }
    if (field<std::string>(j, "format", "") != kCheckpointFormat) {
        throw SchemaError("checkpoint: field 'format' is not '" + std::string(kCheckpointFormat) + "'");
    }
    const int version = field<int>(j, "version", "");
    if (version != kCheckpointVersion) {
        throw SchemaError("checkpoint: field 'version' is " + std::to_string(version) + ", this build reads " +
                          std::to_string(kCheckpointVersion));
    }
    VaeModel m;
    m.latent_dim = field<int>(j, "latent_dim", "");
    if (m.latent_dim < 1) throw SchemaError("checkpoint: field 'latent_dim' must be >= 1");
    m.lambda_kl = field<double>(j, "lambda_kl", "");
    m.lambda_cov = field<double>(j, "lambda_cov", "");
    try {
        m.cov_penalty = cov_penalty_from_string(field<std::string>(j, "cov_penalty", ""));
    } catch (const ValidationError& e) {
        throw SchemaError(std::string("checkpoint: field 'cov_penalty': ") + e.what());
    }
    m.seed = field<std::uint64_t>(j, "seed", "");
    const auto grid_json = field<json>(j, "grid", "");
    m.grid.terms = field<std::vector<double>>(grid_json, "terms", "grid.");
    m.grid.moneyness = field<std::vector<double>>(grid_json, "moneyness", "grid.");
    try {
        m.grid.validate();
    } catch (const ValidationError& e) {
        throw SchemaError(std::string("checkpoint: field 'grid' ") + e.what());
    }
    m.data_initialized = field<bool>(j, "data_initialized", "");
    const auto shift = field<std::vector<double>>(j, "input_shift", "");
    const auto scale = field<std::vector<double>>(j, "input_scale", "");
    const auto n = m.grid.size();
    if (shift.size() != n) throw SchemaError("checkpoint: field 'input_shift' length does not match grid");
    if (scale.size() != n) throw SchemaError("checkpoint: field 'input_scale' length does not match grid");
    m.input_shift = Eigen::Map<const Eigen::VectorXd>(shift.data(), static_cast<Eigen::Index>(n));
    m.input_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(n));
    m.encoder = net_from_json(field<json>(j, "encoder", ""), "encoder.");
    m.decoder = net_from_json(field<json>(j, "decoder", ""), "decoder.");

    const auto gn = static_cast<Eigen::Index>(n);
    if (m.encoder.input_size() != gn) throw SchemaError("checkpoint: field 'encoder' input size does not match grid");
    if (m.encoder.output_size() != 2 * m.latent_dim) {
        throw SchemaError("checkpoint: field 'latent_dim' = " + std::to_string(m.latent_dim) +
                          " does not match encoder output size " + std::to_string(m.encoder.output_size()));
    }
    if (m.decoder.input_size() != m.latent_dim) {
        throw SchemaError("checkpoint: field 'latent_dim' = " + std::to_string(m.latent_dim) +
                          " does not match decoder input size " + std::to_string(m.decoder.input_size()));
    }
    if (m.decoder.output_size() != gn) throw SchemaError("checkpoint: field 'decoder' output size does not match grid");
    return m;
}

void save_model(const VaeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << model_to_json(model);
}

VaeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace volenc

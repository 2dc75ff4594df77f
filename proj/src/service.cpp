#include "volenc/service.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "volenc/error.hpp"

namespace volenc {

using json = nlohmann::json;

namespace {

// A request problem tied to one body field; becomes a 400.
struct BadRequest {
    std::string field;
    std::string message;
};

HttpResponse error_response(int status, const std::string& message, const std::string& field = {}) {
    json j{{"error", message}};
    if (!field.empty()) j["field"] = field;
    return {status, j.dump()};
}

json parse_body(const std::string& body) {
    try {
        json j = json::parse(body);
        if (!j.is_object()) throw BadRequest{"", "request body must be a JSON object"};
        return j;
    } catch (const json::parse_error& e) {
        throw BadRequest{"", std::string("malformed JSON: ") + e.what()};
    }
}

const json& require(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) throw BadRequest{field, std::string("missing field '") + field + "'"};
    return *it;
}

double number_at(const json& v, const std::string& field) {
    if (!v.is_number()) throw BadRequest{field, "'" + field + "' must be a number"};
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw BadRequest{field, "'" + field + "' must be finite"};
    return x;
}

json grid_json(const GridSpec& g) { return {{"terms", g.terms}, {"moneyness", g.moneyness}}; }

json surface_json(const SurfaceGrid& s) {
    const auto& g = s.grid();
    json rows = json::array();
    for (std::size_t i = 0; i < g.n_terms(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < g.n_moneyness(); ++j) row.push_back(s.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Checks that `v` is a terms x moneyness nested array and visits each cell.
template <class F>
void for_each_cell(const json& v, const GridSpec& g, const std::string& field, F&& f) {
    if (!v.is_array() || v.size() != g.n_terms()) {
        throw BadRequest{field, "'" + field + "' must be an array of " + std::to_string(g.n_terms()) + " rows"};
    }
    for (std::size_t i = 0; i < g.n_terms(); ++i) {
        const auto& row = v[i];
        if (!row.is_array() || row.size() != g.n_moneyness()) {
            throw BadRequest{field, "'" + field + "' row " + std::to_string(i) + " must have " +
                                        std::to_string(g.n_moneyness()) + " entries"};
        }
        for (std::size_t j = 0; j < g.n_moneyness(); ++j) {
            f(g.index(i, j), row[j], field + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
        }
    }
}

}  // namespace

Service::Service(VaeModel model, ThresholdTable thresholds)
    : model_(std::move(model)), thresholds_(thresholds) {
    json d;
    try {
        const auto fm = match_factors(model_);
        json roles = json::array(), signs = json::array();
        for (int k = 0; k < model_.latent_dim; ++k) {
            const int r = fm.role_of_latent(k);
            roles.push_back(to_string(static_cast<Role>(r)));
            signs.push_back(fm.sign[static_cast<std::size_t>(r)]);
        }
        d["roles"] = roles;
        d["signs"] = signs;
        d["dominance_ratio"] = std::isfinite(fm.dominance_ratio) ? json(fm.dominance_ratio) : json(nullptr);
        json scores = json::array();
        for (int i = 0; i < 3; ++i) scores.push_back({fm.scores(i, 0), fm.scores(i, 1), fm.scores(i, 2)});
        d["scores"] = scores;
    } catch (const ValidationError& e) {
        d["roles"] = nullptr;
        d["error"] = e.what();
    }
    diagnostics_body_ = d.dump();
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) const {
    try {
        if (method == "GET" && path == "/model/meta") return meta();
        if (method == "GET" && path == "/diagnostics") return diagnostics();
        if (method == "GET" && path == "/thresholds") return thresholds();
        if (method == "POST" && path == "/decode") return decode_request(body);
        if (method == "POST" && path == "/encode") return encode_request(body);
        if (method == "POST" && path == "/extrapolate") return extrapolate_request(body);
        return error_response(404, "no route " + method + " " + path);
    } catch (const BadRequest& e) {
        return error_response(400, e.message, e.field);
    } catch (const ValidationError& e) {
        return error_response(400, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

HttpResponse Service::meta() const {
    json j{{"D", model_.latent_dim},
           {"grid", grid_json(model_.grid)},
           {"lambda_kl", model_.lambda_kl},
           {"lambda_cov", model_.lambda_cov},
           {"cov_penalty", to_string(model_.cov_penalty)},
           {"version", kCheckpointVersion}};
    return {200, j.dump()};
}

HttpResponse Service::diagnostics() const { return {200, diagnostics_body_}; }

HttpResponse Service::thresholds() const {
    json values = json::array();
    for (const auto& row : thresholds_.values) values.push_back(row);
    json j{{"term_upper_bounds", {3.0, 9.0, nullptr}},
           {"moneyness_upper_bounds", {0.9, 1.05, nullptr}},
           {"values", values}};
    return {200, j.dump()};
}

HttpResponse Service::decode_request(const std::string& body) const {
    const json req = parse_body(body);
    const json& zj = require(req, "z");
    if (!zj.is_array()) throw BadRequest{"z", "'z' must be an array"};
    if (static_cast<int>(zj.size()) != model_.latent_dim) {
        throw BadRequest{"z", "'z' has " + std::to_string(zj.size()) + " entries, model has D = " +
                                  std::to_string(model_.latent_dim)};
    }
    Eigen::VectorXd z(model_.latent_dim);
    for (int k = 0; k < model_.latent_dim; ++k) z(k) = number_at(zj[static_cast<std::size_t>(k)], "z");
    const auto s = decode(model_, z);
    return {200, json{{"grid", grid_json(model_.grid)}, {"vols", surface_json(s)}}.dump()};
}

HttpResponse Service::encode_request(const std::string& body) const {
    const json req = parse_body(body);
    std::vector<double> vols(model_.grid.size());
    for_each_cell(require(req, "vols"), model_.grid, "vols", [&](std::size_t k, const json& v, const std::string& f) {
        vols[k] = number_at(v, f);
        if (vols[k] <= 0.0) throw BadRequest{"vols", "'" + f + "' must be > 0"};
    });
    const auto code = encode(model_, SurfaceGrid(model_.grid, std::move(vols)));
    return {200, json{{"mu", vector_json(code.mu)}, {"log_sigma", vector_json(code.log_sigma)}}.dump()};
}

HttpResponse Service::extrapolate_request(const std::string& body) const {
    const json req = parse_body(body);
    PartialSurface p{model_.grid, std::vector<bool>(model_.grid.size(), false), {}};
    for_each_cell(require(req, "mask"), model_.grid, "mask", [&](std::size_t k, const json& v, const std::string& f) {
        if (!v.is_boolean()) throw BadRequest{"mask", "'" + f + "' must be true or false"};
        p.mask[k] = v.get<bool>();
    });
    const std::size_t known = count_true(p.mask);
    if (known == 0) throw BadRequest{"mask", "'mask' has no known points"};
    const json& vj = require(req, "values");
    if (vj.is_array() && !vj.empty() && vj[0].is_array()) {
        std::vector<double> full(model_.grid.size(), 0.0);
        for_each_cell(vj, model_.grid, "values", [&](std::size_t k, const json& v, const std::string& f) {
            if (p.mask[k]) full[k] = number_at(v, f);
        });
        for (std::size_t k = 0; k < full.size(); ++k) {
            if (p.mask[k]) p.values.push_back(full[k]);
        }
    } else {
        if (!vj.is_array() || vj.size() != known) {
            throw BadRequest{"values", "'values' must be a grid-shaped array or a list of " + std::to_string(known) +
                                           " known vols in row-major order"};
        }
        for (std::size_t k = 0; k < known; ++k) p.values.push_back(number_at(vj[k], "values"));
    }
    for (double v : p.values) {
        if (v <= 0.0) throw BadRequest{"values", "known vols must be > 0"};
    }
    ExtrapolationOptions opts;
    if (auto it = req.find("starts"); it != req.end()) {
        if (!it->is_number_integer() || it->get<int>() < 1) throw BadRequest{"starts", "'starts' must be a positive integer"};
        opts.starts = it->get<int>();
    }
    if (auto it = req.find("seed"); it != req.end()) {
        if (!it->is_number_unsigned()) throw BadRequest{"seed", "'seed' must be a non-negative integer"};
        opts.seed = it->get<std::uint64_t>();
    }
    const auto r = extrapolate(model_, p, opts);
    json j{{"z_hat", vector_json(r.z_hat)},
           {"grid", grid_json(model_.grid)},
           {"vols", surface_json(r.surface)},
           {"objective", r.objective},
           {"mae_known", r.mae_known},
           {"iterations", r.iterations},
           {"converged", r.converged}};
    return {200, j.dump()};
}

}  // namespace volenc

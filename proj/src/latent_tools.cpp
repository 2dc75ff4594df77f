#include "volenc/latent_tools.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace volenc {

namespace {

double ols_slope(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

EncodedCorpus encode_records(const VaeModel& model, std::span<const SurfaceRecord* const> records) {
    EncodedCorpus out;
    if (records.empty()) return out;
    if (!(records.front()->surface.grid() == model.grid)) {
        throw ValidationError("corpus grid does not match the model grid");
    }
    Eigen::MatrixXd mu, ls;
    encode_batch(model, surfaces_to_matrix(records), mu, ls);
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        out.push_back({records[i]->date, records[i]->symbol, records[i]->stress, {mu.col(c), ls.col(c), {}, {}}});
    }
    return out;
}

EncodedCorpus encode_corpus(const VaeModel& model, const Corpus& corpus) {
    if (!(corpus.grid() == model.grid)) throw ValidationError("corpus grid does not match the model grid");
    std::vector<const SurfaceRecord*> ptrs;
    ptrs.reserve(corpus.size());
    for (const auto& r : corpus.records()) ptrs.push_back(&r);
    return encode_records(model, ptrs);
}

Eigen::MatrixXd mu_matrix(const EncodedCorpus& enc) {
    if (enc.empty()) return {};
    Eigen::MatrixXd mu(enc.front().code.mu.size(), static_cast<Eigen::Index>(enc.size()));
    for (std::size_t i = 0; i < enc.size(); ++i) mu.col(static_cast<Eigen::Index>(i)) = enc[i].code.mu;
    return mu;
}

CorrelationReport latent_correlations(const Eigen::MatrixXd& mu) {
    if (mu.cols() < 3) throw ValidationError("latent correlations need at least 3 entries");
    const Eigen::Index d = mu.rows();
    const Eigen::MatrixXd c = mu.colwise() - mu.rowwise().mean();
    const Eigen::MatrixXd cov = c * c.transpose();
    CorrelationReport r;
    r.rho = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        // Relative test so a latent stuck at a large constant still counts as flat.
        const double scale = std::max(1.0, mu.row(i).cwiseAbs().maxCoeff());
        if (std::sqrt(cov(i, i) / static_cast<double>(mu.cols())) <= 1e-12 * scale) {
            r.zero_variance.push_back(static_cast<int>(i));
            r.warnings.push_back("latent Z" + std::to_string(i + 1) + " has zero variance; its correlations are reported as 0");
        }
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
            const bool flat = std::find(r.zero_variance.begin(), r.zero_variance.end(), i) != r.zero_variance.end() ||
                              std::find(r.zero_variance.begin(), r.zero_variance.end(), j) != r.zero_variance.end();
            const double v = flat ? 0.0 : cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
            r.rho(i, j) = r.rho(j, i) = v;
        }
    }
    return r;
}

CorrelationReport latent_correlations(const EncodedCorpus& enc) {
    if (enc.size() < 3) throw ValidationError("latent correlations need at least 3 entries");
    return latent_correlations(mu_matrix(enc));
}

double max_off_diagonal(const Eigen::MatrixXd& rho) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
        for (Eigen::Index j = 0; j < rho.cols(); ++j) {
            if (i != j) m = std::max(m, std::abs(rho(i, j)));
        }
    }
    return m;
}

std::string to_string(Role r) {
    switch (r) {
    case Role::level: return "level";
    case Role::skew: return "skew";
    case Role::term: return "term";
    }
    return "?";
}

std::array<double, 3> shape_statistics(const SurfaceGrid& s) {
    const auto& g = s.grid();
    std::vector<double> row(g.n_moneyness()), col(g.n_terms()), log_tau(g.n_terms());
    for (std::size_t i = 0; i < g.n_terms(); ++i) log_tau[i] = std::log(g.terms[i]);
    double skew = 0.0;
    for (std::size_t i = 0; i < g.n_terms(); ++i) {
        for (std::size_t j = 0; j < g.n_moneyness(); ++j) row[j] = s.at(i, j);
        skew -= ols_slope(g.moneyness, row);
    }
    double term = 0.0;
    for (std::size_t j = 0; j < g.n_moneyness(); ++j) {
        for (std::size_t i = 0; i < g.n_terms(); ++i) col[i] = s.at(i, j);
        term += ols_slope(log_tau, col);
    }
    return {s.mean(), skew / static_cast<double>(g.n_terms()), term / static_cast<double>(g.n_moneyness())};
}

std::vector<double> SweepConfig::values() const {
    if (steps < 2 || !(hi > lo)) throw ValidationError("sweep needs hi > lo and at least 2 steps");
    std::vector<double> v(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) v[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (steps - 1);
    return v;
}

int FactorMatch::role_of_latent(int latent) const {
    for (std::size_t r = 0; r < 3; ++r) {
        if (latent_for_role[r] == latent) return static_cast<int>(r);
    }
    return -1;
}

FactorMatch match_factors(const SurfaceDecoder& decoder, int latent_dim, const SweepConfig& cfg) {
    if (latent_dim != 3) {
        throw ValidationError("factor matching needs exactly 3 latents, model has " + std::to_string(latent_dim));
    }
    const auto values = cfg.values();
    FactorMatch m;
    std::vector<double> stat(values.size());
    for (int i = 0; i < 3; ++i) {
        std::vector<std::array<double, 3>> stats;
        stats.reserve(values.size());
        for (double v : values) {
            Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
            z(i) = v;
            stats.push_back(shape_statistics(decoder(z)));
        }
        for (int r = 0; r < 3; ++r) {
            for (std::size_t k = 0; k < values.size(); ++k) stat[k] = stats[k][static_cast<std::size_t>(r)];
            m.response(i, r) = ols_slope(values, stat);
        }
    }
    m.scores = m.response.cwiseAbs();
    for (int r = 0; r < 3; ++r) {
        const double top = m.scores.col(r).maxCoeff();
        if (top > 0.0) m.scores.col(r) /= top;
    }
    for (int r = 0; r < 3; ++r) {
        std::array<double, 3> c{m.scores(0, r), m.scores(1, r), m.scores(2, r)};
        std::sort(c.begin(), c.end(), std::greater<>());
        if (c[0] <= 0.0 || c[0] - c[1] < 0.1 * c[0]) {
            std::ostringstream os;
            os << "factor matching is degenerate for the " << to_string(static_cast<Role>(r))
               << " statistic; scores (rows Z1..Z3, cols level/skew/term):\n"
               << m.scores;
            throw DegenerateMatchError(os.str(), m.scores);
        }
    }
    std::array<int, 3> perm{0, 1, 2}, best{};
    double best_total = -1.0;
    do {
        const double total = m.scores(perm[0], 0) + m.scores(perm[1], 1) + m.scores(perm[2], 2);
        if (total > best_total) {
            best_total = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    m.latent_for_role = best;
    m.dominance_ratio = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 3; ++r) {
        const int i = best[static_cast<std::size_t>(r)];
        m.sign[static_cast<std::size_t>(r)] = m.response(i, r) < 0.0 ? -1 : 1;
        double other = 0.0;
        for (int k = 0; k < 3; ++k) {
            if (k != i) other = std::max(other, m.scores(k, r));
        }
        const double ratio = other > 0.0 ? m.scores(i, r) / other : std::numeric_limits<double>::infinity();
        m.dominance_ratio = std::min(m.dominance_ratio, ratio);
    }
    return m;
}

FactorMatch match_factors(const VaeModel& model, const SweepConfig& cfg) {
    return match_factors([&model](const Eigen::VectorXd& z) { return decode(model, z); }, model.latent_dim, cfg);
}

std::vector<SurfaceGrid> scenario_sweep(const VaeModel& model, const Eigen::VectorXd& base_z, int dim,
                                        std::span<const double> values) {
    if (base_z.size() != model.latent_dim) {
        throw ValidationError("base z has " + std::to_string(base_z.size()) + " entries, model has D = " +
                              std::to_string(model.latent_dim));
    }
    if (dim < 0 || dim >= model.latent_dim) {
        throw ValidationError("sweep dimension " + std::to_string(dim) + " is outside 0.." +
                              std::to_string(model.latent_dim - 1));
    }
    std::vector<SurfaceGrid> out;
    out.reserve(values.size());
    Eigen::VectorXd z = base_z;
    for (double v : values) {
        z(dim) = v;
        out.push_back(decode(model, z));
    }
    return out;
}

StressSummary stress_summary(const EncodedCorpus& enc) {
    StressSummary s;
    if (enc.empty()) return s;
    const auto d = enc.front().code.mu.size();
    s.mean_stress = Eigen::VectorXd::Zero(d);
    s.mean_calm = Eigen::VectorXd::Zero(d);
    for (const auto& e : enc) {
        if (e.stress) {
            s.mean_stress += e.code.mu;
            ++s.n_stress;
        } else {
            s.mean_calm += e.code.mu;
            ++s.n_calm;
        }
    }
    if (s.n_stress) s.mean_stress /= static_cast<double>(s.n_stress);
    if (s.n_calm) s.mean_calm /= static_cast<double>(s.n_calm);
    return s;
}

void save_encodings(const EncodedCorpus& enc, const std::filesystem::path& path) {
    auto out = open_csv(path);
    const Eigen::Index d = enc.empty() ? 0 : enc.front().code.mu.size();
    out << "date,symbol,stress";
    for (Eigen::Index k = 1; k <= d; ++k) out << ",mu_" << k;
    for (Eigen::Index k = 1; k <= d; ++k) out << ",log_sigma_" << k;
    out << '\n';
    for (const auto& e : enc) {
        out << e.date.to_string() << ',' << e.symbol << ',' << (e.stress ? 1 : 0);
        for (Eigen::Index k = 0; k < d; ++k) out << ',' << format_double(e.code.mu(k));
        for (Eigen::Index k = 0; k < d; ++k) out << ',' << format_double(e.code.log_sigma(k));
        out << '\n';
    }
}

void save_correlations(const Eigen::MatrixXd& rho, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "latent";
    for (Eigen::Index j = 0; j < rho.cols(); ++j) out << ",Z" << j + 1;
    out << '\n';
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
        out << 'Z' << i + 1;
        for (Eigen::Index j = 0; j < rho.cols(); ++j) out << ',' << format_double(rho(i, j));
        out << '\n';
    }
}

void save_sweep(const std::vector<SurfaceGrid>& surfaces, int dim, Date date, const std::filesystem::path& path) {
    std::vector<SurfaceRecord> records;
    records.reserve(surfaces.size());
    for (std::size_t k = 0; k < surfaces.size(); ++k) {
        char sym[32];
        std::snprintf(sym, sizeof sym, "Z%d_%02zu", dim + 1, k);
        records.push_back({date, sym, surfaces[k], false});
    }
    auto out = open_csv(path);
    write_corpus(out, records);
}

}  // namespace volenc

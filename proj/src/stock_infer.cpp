#include "volenc/stock_infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "volenc/error.hpp"
#include "volenc/latent_tools.hpp"

namespace volenc {

namespace {

Eigen::Index matrix_rank(const Eigen::MatrixXd& x) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    return qr.rank();
}

template <class T>
const T* find_dated(const std::vector<T>& series, Date d) {
    auto it = std::lower_bound(series.begin(), series.end(), d,
                               [](const T& p, Date v) { return p.date < v; });
    return it != series.end() && it->date == d ? &*it : nullptr;
}

}  // namespace

OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names) {
    const Eigen::Index n = x.rows(), p = x.cols();
    if (y.size() != n || static_cast<Eigen::Index>(names.size()) != p) {
        throw ValidationError("ols: design, target and names disagree in size");
    }
    if (n <= p) throw ValidationError("ols: need more observations than columns");
    const Eigen::Index rank = matrix_rank(x);
    if (rank < p) {
        // Name the last column whose removal keeps the rank: it adds nothing.
        for (Eigen::Index c = p; c-- > 0;) {
            Eigen::MatrixXd reduced(n, p - 1);
            for (Eigen::Index j = 0, k = 0; j < p; ++j) {
                if (j != c) reduced.col(k++) = x.col(j);
            }
            if (matrix_rank(reduced) == rank) {
                throw ValidationError("rank-deficient regression: column '" + names[static_cast<std::size_t>(c)] +
                                      "' is collinear with the others");
            }
        }
        throw ValidationError("rank-deficient regression");
    }
    OlsFit fit;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    fit.coef = qr.solve(y);
    fit.residuals = y - x * fit.coef;
    const double sigma2 = fit.residuals.squaredNorm() / static_cast<double>(n - p);
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
    fit.std_error = (sigma2 * xtx_inv.diagonal().array()).sqrt().matrix();
    return fit;
}

RegressionWindowModel fit_window(const LatentSeries& stock, const LatentSeries& index,
                                 const std::vector<DatedValue>& realized, Date end, std::size_t window) {
    if (window < 10) throw ValidationError("regression window must hold at least 10 observations");
    // Walk back from `end` collecting dates present in all three series.
    struct Row {
        const LatentPoint* s;
        const LatentPoint* i;
        double rv;
    };
    std::vector<Row> rows;
    auto it = std::lower_bound(stock.begin(), stock.end(), end,
                               [](const LatentPoint& p, Date v) { return p.date < v; });
    while (it != stock.begin() && rows.size() < window) {
        --it;
        const auto* ip = find_dated(index, it->date);
        const auto* rp = find_dated(realized, it->date);
        if (ip && rp) rows.push_back({&*it, ip, rp->value});
    }
    if (rows.size() < window) {
        throw ValidationError("only " + std::to_string(rows.size()) + " aligned observations before " +
                              end.to_string() + ", window needs " + std::to_string(window));
    }
    std::reverse(rows.begin(), rows.end());

    const auto n = static_cast<Eigen::Index>(window);
    const Eigen::Index d = rows.front().s->mu.size();
    RegressionWindowModel reg;
    reg.first_date = rows.front().s->date;
    reg.last_date = rows.back().s->date;
    reg.window = window;
    double sum = 0.0;
    for (const auto& r : rows) sum += r.rv;
    reg.rv_mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : rows) ss += (r.rv - reg.rv_mean) * (r.rv - reg.rv_mean);
    reg.rv_sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(reg.rv_sd > 0.0)) {
        throw ValidationError("rank-deficient regression: column 'realized_vol' is constant over the window");
    }
    for (Eigen::Index k = 0; k < d; ++k) {
        Eigen::MatrixXd x(n, 3);
        Eigen::VectorXd y(n);
        for (Eigen::Index t = 0; t < n; ++t) {
            const auto& r = rows[static_cast<std::size_t>(t)];
            x(t, 0) = 1.0;
            x(t, 1) = r.i->mu(k);
            x(t, 2) = (r.rv - reg.rv_mean) / reg.rv_sd;
            y(t) = r.s->mu(k);
        }
        const auto fit = ols_fit(x, y, {"intercept", "index_mu_" + std::to_string(k + 1), "realized_vol"});
        reg.coef.emplace_back(fit.coef);
        reg.std_error.emplace_back(fit.std_error);
    }
    return reg;
}

Eigen::VectorXd predict_latent(const RegressionWindowModel& reg, const Eigen::VectorXd& index_mu,
                               double realized, Date date) {
    if (!(reg.last_date < date)) {
        throw ValidationError("regression fitted through " + reg.last_date.to_string() +
                              " cannot predict " + date.to_string());
    }
    if (static_cast<std::size_t>(index_mu.size()) != reg.coef.size()) {
        throw ValidationError("index code has " + std::to_string(index_mu.size()) + " latents, regression has " +
                              std::to_string(reg.coef.size()));
    }
    const double rv_std = (realized - reg.rv_mean) / reg.rv_sd;
    Eigen::VectorXd z(index_mu.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        const auto& b = reg.coef[static_cast<std::size_t>(k)];
        z(k) = b(0) + b(1) * index_mu(k) + b(2) * rv_std;
    }
    return z;
}

SurfaceGrid predict_surface(const VaeModel& model, const RegressionWindowModel& reg,
                            const Eigen::VectorXd& index_mu, double realized, Date date) {
    return decode(model, predict_latent(reg, index_mu, realized, date));
}

InferenceTable evaluate_inference(const VaeModel& model, const Corpus& corpus, const PriceTable& prices,
                                  const InferenceConfig& cfg, const ThresholdTable& thresholds) {
    const auto enc = encode_corpus(model, corpus);
    std::map<std::string, LatentSeries> latents;
    for (const auto& e : enc) latents[e.symbol].push_back({e.date, e.code.mu});
    auto idx = latents.find(cfg.index_symbol);
    if (idx == latents.end()) throw ValidationError("corpus has no index symbol '" + cfg.index_symbol + "'");
    const LatentSeries& index = idx->second;

    InferenceTable table;
    for (const auto& [sym, series] : latents) {
        if (sym == cfg.index_symbol) continue;
        auto pit = prices.find(sym);
        if (pit == prices.end()) throw ValidationError("no prices for '" + sym + "'");
        const auto rv = realized_vol(pit->second, cfg.realized_window);

        InferenceRow row;
        row.symbol = sym;
        row.z_error.assign(static_cast<std::size_t>(model.latent_dim), 0.0);
        EvalReport sat;
        for (const auto& point : series) {
            if (point.date < corpus.split_date()) continue;
            const auto* ip = find_dated(index, point.date);
            const auto* rp = find_dated(rv, point.date);
            if (!ip || !rp) continue;
            const auto reg = fit_window(series, index, rv, point.date, cfg.window);
            const Eigen::VectorXd z = predict_latent(reg, ip->mu, rp->value, point.date);
            for (Eigen::Index k = 0; k < z.size(); ++k) {
                row.z_error[static_cast<std::size_t>(k)] += std::abs(z(k) - point.mu(k));
            }
            accumulate(sat, satisfaction(corpus.find(point.date, sym)->surface, decode(model, z), thresholds));
            ++row.predictions;
        }
        if (row.predictions == 0) throw ValidationError("no test dates to predict for '" + sym + "'");
        for (auto& e : row.z_error) e /= static_cast<double>(row.predictions);
        row.satisfaction = sat.rate;
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty()) throw ValidationError("corpus has no stocks besides the index");
    for (const auto& r : table.rows) table.mean_satisfaction += r.satisfaction;
    table.mean_satisfaction /= static_cast<double>(table.rows.size());
    return table;
}

void save_inference_table(const InferenceTable& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    const std::size_t d = t.rows.empty() ? 0 : t.rows.front().z_error.size();
    out << "symbol,predictions";
    for (std::size_t k = 1; k <= d; ++k) out << ",z" << k << "_error";
    out << ",satisfaction\n";
    for (const auto& r : t.rows) {
        out << r.symbol << ',' << r.predictions;
        for (double e : r.z_error) out << ',' << format_double(e);
        out << ',' << format_double(r.satisfaction) << '\n';
    }
}

}  // namespace volenc

#include "volenc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "volenc/error.hpp"

namespace volenc {

namespace {

constexpr double kMinVol = 1e-4;
constexpr double kTradingDays = 252.0;

// Independent noise stream per (seed, purpose, asset).
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t asset) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(asset)};
    return std::mt19937_64(seq);
}

double gauss(std::mt19937_64& rng) {
    return std::normal_distribution<double>{}(rng);
}

enum Stream : std::uint64_t { kLevel = 1, kSkew = 2, kTerm = 3, kIdio = 4, kPrice = 5, kObs = 6 };

}  // namespace

AssetSpec AssetSpec::index(std::string symbol) {
    AssetSpec a;
    a.symbol = std::move(symbol);
    return a;
}

std::vector<Date> business_days(Date start, std::size_t n) {
    std::vector<Date> out;
    out.reserve(n);
    Date d = start.is_weekend() ? start.next_business_day() : start;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(d);
        d = d.next_business_day();
    }
    return out;
}

SynthConfig SynthConfig::desk_scale(std::uint64_t seed, std::size_t n_days) {
    if (n_days < 25) throw ValidationError("desk-scale layout needs at least 25 days");
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.n_days = n_days;
    const auto days = business_days(cfg.start_date, cfg.n_days);
    cfg.split_date = days[n_days * 4 / 5];
    const std::size_t stress_start = n_days * 52 / 100;
    cfg.stress_first = days[stress_start];
    cfg.stress_last = days[stress_start + std::max<std::size_t>(1, n_days / 25) - 1];
    return cfg;
}

double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    return y > 30.0 ? y : std::log(std::expm1(y));
}

double skew_term_weight(double term_months) {
    return std::sqrt(12.0 / term_months);
}

SurfaceGrid factor_to_surface(const FactorState& f, const GridSpec& grid) {
    std::vector<double> vols(grid.size());
    for (std::size_t i = 0; i < grid.n_terms(); ++i) {
        const double tau = grid.terms[i];
        const double w = skew_term_weight(tau);
        const double log_term = std::log(tau / 12.0);
        for (std::size_t j = 0; j < grid.n_moneyness(); ++j) {
            const double x = f.level + f.skew * (1.0 - grid.moneyness[j]) * w + f.term * log_term;
            vols[grid.index(i, j)] = softplus(x);
        }
    }
    return SurfaceGrid(grid, std::move(vols));
}

std::vector<AssetSpec> default_stock_specs(const SynthConfig& cfg) {
    std::vector<AssetSpec> out;
    auto rng = make_stream(cfg.seed, 100, 0);
    std::uniform_real_distribution<double> beta_dist(0.85, 1.15);
    for (std::size_t i = 0; i < cfg.n_stocks; ++i) {
        AssetSpec a;
        std::ostringstream sym;
        sym << "STK" << (i + 1 < 10 ? "0" : "") << (i + 1);
        a.symbol = sym.str();
        // 2^3 factorial signs keep the intercepts of the three factors
        // orthogonal across each block of eight stocks.
        const double s_level = (i & 1) ? 1.0 : -1.0;
        const double s_skew = (i & 2) ? 1.0 : -1.0;
        const double s_term = (i & 4) ? 1.0 : -1.0;
        a.beta_level = beta_dist(rng);
        a.beta_skew = beta_dist(rng);
        a.beta_term = beta_dist(rng);
        // Stocks sit above the index in vol on average.
        a.alpha_level = (1.0 - a.beta_level) * cfg.level.mean + 0.15 + 0.10 * s_level;
        a.alpha_skew = (1.0 - a.beta_skew) * cfg.skew.mean + 0.25 * s_skew;
        a.alpha_term = (1.0 - a.beta_term) * cfg.term.mean + 0.04 * s_term;
        a.idio_scale = cfg.idio_scale;
        out.push_back(std::move(a));
    }
    return out;
}

SynthOutput generate_corpus(const SynthConfig& cfg) {
    return generate_corpus(cfg, default_stock_specs(cfg));
}

SynthOutput generate_corpus(const SynthConfig& cfg, const std::vector<AssetSpec>& stocks) {
    cfg.grid.validate();
    if (cfg.n_days < 2) throw ValidationError("n_days must be at least 2");
    if (stocks.size() != cfg.n_stocks) {
        throw ValidationError("expected " + std::to_string(cfg.n_stocks) + " stock specs, got " +
                              std::to_string(stocks.size()));
    }
    if (cfg.noise_sd < 0.0) throw ValidationError("noise_sd must be >= 0");
    const auto dates = business_days(cfg.start_date, cfg.n_days);
    if (cfg.stress_last < cfg.stress_first) {
        throw ValidationError("stress window ends before it starts");
    }
    if (cfg.stress_first < dates.front() || dates.back() < cfg.stress_last) {
        throw ValidationError("stress window " + cfg.stress_first.to_string() + ".." +
                              cfg.stress_last.to_string() + " is outside the generated dates " +
                              dates.front().to_string() + ".." + dates.back().to_string());
    }
    if (!(dates.front() < cfg.split_date) || dates.back() < cfg.split_date) {
        throw ValidationError("split date " + cfg.split_date.to_string() +
                              " must leave both train and test dates");
    }
    for (const auto& s : stocks) {
        if (s.symbol == cfg.index_symbol) throw ValidationError("stock symbol clashes with index");
        if (s.idio_scale < 0.0) throw ValidationError("idio_scale must be >= 0 for " + s.symbol);
    }

    const FactorDynamics* dyn[3] = {&cfg.level, &cfg.skew, &cfg.term};

    // Index factors: one independent stream per factor.
    std::vector<FactorState> index_path(cfg.n_days);
    {
        std::mt19937_64 streams[3] = {make_stream(cfg.seed, kLevel, 0), make_stream(cfg.seed, kSkew, 0),
                                      make_stream(cfg.seed, kTerm, 0)};
        double x[3] = {cfg.level.mean, cfg.skew.mean, cfg.term.mean};
        for (std::size_t d = 0; d < cfg.n_days; ++d) {
            for (int k = 0; k < 3; ++k) {
                x[k] += dyn[k]->reversion * (dyn[k]->mean - x[k]) + dyn[k]->innovation_sd * gauss(streams[k]);
            }
            const bool stressed = !(dates[d] < cfg.stress_first) && !(cfg.stress_last < dates[d]);
            index_path[d] = {x[0] + (stressed ? cfg.stress_level_shift : 0.0), x[1], x[2]};
        }
    }

    std::vector<AssetSpec> assets;
    assets.push_back(AssetSpec::index(cfg.index_symbol));
    assets.insert(assets.end(), stocks.begin(), stocks.end());

    PriceTable price_table;
    std::map<std::string, std::vector<FactorState>> factor_paths;
    std::vector<SurfaceRecord> records;
    records.reserve(assets.size() * cfg.n_days);

    for (std::size_t a = 0; a < assets.size(); ++a) {
        const auto& spec = assets[a];
        auto idio_rng = make_stream(cfg.seed, kIdio, a);
        auto price_rng = make_stream(cfg.seed, kPrice, a);
        auto obs_rng = make_stream(cfg.seed, kObs, a);
        std::vector<FactorState> path(cfg.n_days);
        std::vector<PricePoint> prices(cfg.n_days);
        double log_price = std::log(100.0);
        for (std::size_t d = 0; d < cfg.n_days; ++d) {
            const auto& ix = index_path[d];
            FactorState f{spec.alpha_level + spec.beta_level * ix.level,
                          spec.alpha_skew + spec.beta_skew * ix.skew,
                          spec.alpha_term + spec.beta_term * ix.term};
            if (spec.idio_scale > 0.0) {
                f.level += spec.idio_scale * cfg.level.innovation_sd * gauss(idio_rng);
                f.skew += spec.idio_scale * cfg.skew.innovation_sd * gauss(idio_rng);
                f.term += spec.idio_scale * cfg.term.innovation_sd * gauss(idio_rng);
            }
            path[d] = f;

            // Instantaneous price vol tracks the asset's vol level.
            const double sigma = softplus(f.level);
            if (d > 0) {
                const double dt = 1.0 / kTradingDays;
                log_price += -0.5 * sigma * sigma * dt + sigma * std::sqrt(dt) * gauss(price_rng);
            }
            prices[d] = {dates[d], std::exp(log_price)};

            auto clean = factor_to_surface(f, cfg.grid);
            std::vector<double> vols = clean.vols();
            if (cfg.noise_sd > 0.0) {
                for (double& v : vols) v = std::max(v + cfg.noise_sd * gauss(obs_rng), kMinVol);
            }
            const bool stressed = !(dates[d] < cfg.stress_first) && !(cfg.stress_last < dates[d]);
            records.push_back({dates[d], spec.symbol, SurfaceGrid(cfg.grid, std::move(vols)), stressed});
        }
        factor_paths[spec.symbol] = std::move(path);
        price_table[spec.symbol] = std::move(prices);
    }
    return SynthOutput{Corpus(std::move(records), cfg.split_date), std::move(price_table),
                       std::move(factor_paths), dates};
}

std::vector<DatedValue> realized_vol(const std::vector<PricePoint>& prices, std::size_t window) {
    if (window < 2) throw ValidationError("realized vol window must be at least 2");
    if (prices.size() <= window) {
        throw ValidationError("realized vol window " + std::to_string(window) +
                              " needs more than " + std::to_string(window) + " prices, got " +
                              std::to_string(prices.size()));
    }
    std::vector<double> rets(prices.size() - 1);
    for (std::size_t i = 1; i < prices.size(); ++i) {
        rets[i - 1] = std::log(prices[i].close / prices[i - 1].close);
    }
    std::vector<DatedValue> out;
    out.reserve(prices.size() - window);
    for (std::size_t end = window; end <= rets.size(); ++end) {
        // Returns rets[end - window .. end - 1], the last one ending at prices[end].
        double mean = 0.0;
        for (std::size_t k = end - window; k < end; ++k) mean += rets[k];
        mean /= static_cast<double>(window);
        double ss = 0.0;
        for (std::size_t k = end - window; k < end; ++k) ss += (rets[k] - mean) * (rets[k] - mean);
        const double sd = std::sqrt(ss / static_cast<double>(window - 1));
        out.push_back({prices[end].date, sd * std::sqrt(kTradingDays)});
    }
    return out;
}

}  // namespace volenc

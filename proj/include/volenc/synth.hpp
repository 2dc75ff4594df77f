#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "volenc/corpus.hpp"

namespace volenc {

/// The three planted drivers of a synthetic surface. All live in the
/// pre-softplus domain of factor_to_surface.
struct FactorState {
    double level = 0.0;
    double skew = 0.0;
    double term = 0.0;
};

/// A stock's factors are alpha + beta * index_factor + idiosyncratic noise,
/// component by component.
struct AssetSpec {
    std::string symbol;
    double beta_level = 1.0, beta_skew = 1.0, beta_term = 1.0;
    double alpha_level = 0.0, alpha_skew = 0.0, alpha_term = 0.0;
    double idio_scale = 0.0;

    static AssetSpec index(std::string symbol);
};

/// Mean-reverting step x' = x + reversion * (mean - x) + innovation_sd * eps.
struct FactorDynamics {
    double mean = 0.0;
    double reversion = 0.5;
    double innovation_sd = 0.1;
};

struct SynthConfig {
    std::uint64_t seed = 7;
    std::size_t n_stocks = 8;
    std::size_t n_days = 1000;
    Date start_date{2016, 10, 4};
    Date split_date;          // first test date
    Date stress_first;        // stress window, inclusive on both ends
    Date stress_last;
    double stress_level_shift = 0.8;
    double noise_sd = 0.001;  // per-point observation noise, vol units
    GridSpec grid = GridSpec::canonical();
    std::string index_symbol = "IDX";
    FactorDynamics level{-1.5, 0.5, 0.2};
    FactorDynamics skew{1.5, 0.5, 1.0};
    FactorDynamics term{0.05, 0.5, 0.08};
    double idio_scale = 0.1;  // idiosyncratic sd as a fraction of each factor's innovation sd

    /// 8 stocks + index over n_days business days from start_date. The test
    /// split starts at 80% of the days and the stress window covers 4% of
    /// them from the 52% mark: days 800 and 520..559 for the default length.
    static SynthConfig desk_scale(std::uint64_t seed = 7, std::size_t n_days = 1000);
};

/// `n` consecutive business days starting at `start` (or the next business
/// day if `start` falls on a weekend).
std::vector<Date> business_days(Date start, std::size_t n);

double softplus(double x);
double inverse_softplus(double y);

/// Weight applied to the moneyness tilt; positive and decreasing in term.
double skew_term_weight(double term_months);

/// vol(tau, M) = softplus(level + skew * (1 - M) * w(tau) + term * log(tau / 12)).
SurfaceGrid factor_to_surface(const FactorState& f, const GridSpec& grid);

/// Deterministic stock specs with a two-level factorial pattern in the
/// intercepts and seeded betas near one.
std::vector<AssetSpec> default_stock_specs(const SynthConfig& cfg);

struct SynthOutput {
    Corpus corpus;
    PriceTable prices;
    /// Per-symbol factor path, one entry per business day. For the index this
    /// is the stressed (effective) factor that the stocks load on.
    std::map<std::string, std::vector<FactorState>> factors;
    std::vector<Date> dates;
};

/// Builds the index plus `stocks`. Throws ValidationError when the stress
/// window or split date fall outside the generated dates, or when the stock
/// count differs from cfg.n_stocks.
SynthOutput generate_corpus(const SynthConfig& cfg, const std::vector<AssetSpec>& stocks);
SynthOutput generate_corpus(const SynthConfig& cfg);

struct DatedValue {
    Date date;
    double value = 0.0;
};

/// Trailing-window sample standard deviation (n - 1 denominator) of daily log
/// returns, annualised by sqrt(252). The first output is dated at
/// prices[window]. Requires prices.size() > window and window >= 2.
std::vector<DatedValue> realized_vol(const std::vector<PricePoint>& prices, std::size_t window);

}  // namespace volenc

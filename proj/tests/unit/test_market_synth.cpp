#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "volenc/error.hpp"
#include "volenc/synth.hpp"

using namespace volenc;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n, mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Simple-regression slope and its classical standard error.
std::pair<double, double> slope_and_se(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double b = sxy / sxx, a = my - b * mx;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sse += std::pow(y[i] - a - b * x[i], 2);
    return {b, std::sqrt(sse / (n - 2) / sxx)};
}

std::string corpus_text(const SynthOutput& out) {
    std::ostringstream os;
    write_corpus(os, out.corpus.records());
    return os.str();
}

}  // namespace

TEST_CASE("factor_to_surface shapes") {
    auto g = GridSpec::canonical();
    SUBCASE("flat when only level is set") {
        auto s = factor_to_surface({-1.2, 0, 0}, g);
        for (double v : s.vols()) CHECK(v == doctest::Approx(std::log1p(std::exp(-1.2))).epsilon(1e-14));
    }
    SUBCASE("positive term slope raises long tenors") {
        auto s = factor_to_surface({-1.5, 0, 0.2}, g);
        for (std::size_t j = 0; j < g.n_moneyness(); ++j) CHECK(s.at(7, j) > s.at(0, j));
    }
    SUBCASE("positive skew richens low strikes") {
        auto s = factor_to_surface({-1.5, 1.0, 0}, g);
        for (std::size_t i = 0; i < g.n_terms(); ++i) CHECK(s.at(i, 0) > s.at(i, 6));
    }
    SUBCASE("grid mean increasing in level") {
        double prev = -1;
        for (int k = 0; k < 100; ++k) {
            double m = factor_to_surface({-3.0 + 0.05 * k, 0.8, -0.1}, g).mean();
            CHECK(m > prev);
            prev = m;
        }
    }
    SUBCASE("skew weight positive and decreasing") {
        for (std::size_t i = 0; i + 1 < g.n_terms(); ++i) {
            CHECK(skew_term_weight(g.terms[i]) > skew_term_weight(g.terms[i + 1]));
            CHECK(skew_term_weight(g.terms[i + 1]) > 0);
        }
    }
    CHECK(inverse_softplus(softplus(0.37)) == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("business days skip weekends") {
    auto d = business_days(Date(2024, 5, 4), 6);
    CHECK(d.front() == Date(2024, 5, 6));
    CHECK(d.back() == Date(2024, 5, 13));
    for (auto x : d) CHECK_FALSE(x.is_weekend());
}

TEST_CASE("desk scale layout") {
    auto cfg = SynthConfig::desk_scale(7);
    auto dates = business_days(cfg.start_date, cfg.n_days);
    CHECK(cfg.n_stocks == 8);
    CHECK(cfg.split_date == dates[800]);
    CHECK(cfg.stress_first == dates[520]);
    CHECK(cfg.stress_last == dates[559]);
    CHECK_THROWS_AS(SynthConfig::desk_scale(7, 10), ValidationError);
}

TEST_CASE("index spec") {
    auto a = AssetSpec::index("IDX");
    CHECK(a.beta_level == 1.0);
    CHECK(a.beta_skew == 1.0);
    CHECK(a.beta_term == 1.0);
    CHECK(a.alpha_level == 0.0);
    CHECK(a.alpha_skew == 0.0);
    CHECK(a.alpha_term == 0.0);
    CHECK(a.idio_scale == 0.0);
}

TEST_CASE("desk scale corpus properties") {
    auto cfg = SynthConfig::desk_scale(7);
    auto out = generate_corpus(cfg);
    CHECK(out.corpus.size() == 9 * 1000);
    CHECK(out.corpus.symbols().size() == 9);
    CHECK(out.corpus.test().size() == 9 * 200);

    SUBCASE("stress raises the index mean vol") {
        double s = 0, c = 0;
        int ns = 0, nc = 0;
        for (const auto& r : out.corpus.records()) {
            if (r.symbol != "IDX") continue;
            if (r.stress) s += r.surface.mean(), ++ns;
            else c += r.surface.mean(), ++nc;
        }
        CHECK(ns == 40);
        CHECK(s / ns > c / nc);
    }
    SUBCASE("index factors independent") {
        std::vector<double> f[3];
        // Shift removed so the planted stress does not enter the comparison.
        const auto& path = out.factors.at("IDX");
        for (std::size_t d = 0; d < path.size(); ++d) {
            bool st = !(out.dates[d] < cfg.stress_first) && !(cfg.stress_last < out.dates[d]);
            f[0].push_back(path[d].level - (st ? cfg.stress_level_shift : 0.0));
            f[1].push_back(path[d].skew);
            f[2].push_back(path[d].term);
        }
        CHECK(std::abs(pearson(f[0], f[1])) <= 0.1);
        CHECK(std::abs(pearson(f[0], f[2])) <= 0.1);
        CHECK(std::abs(pearson(f[1], f[2])) <= 0.1);
    }
    SUBCASE("stock betas recovered") {
        auto specs = default_stock_specs(cfg);
        const auto& ix = out.factors.at("IDX");
        for (const auto& s : specs) {
            const auto& p = out.factors.at(s.symbol);
            std::vector<double> x[3], y[3];
            for (std::size_t d = 0; d < p.size(); ++d) {
                x[0].push_back(ix[d].level), y[0].push_back(p[d].level);
                x[1].push_back(ix[d].skew), y[1].push_back(p[d].skew);
                x[2].push_back(ix[d].term), y[2].push_back(p[d].term);
            }
            double beta[3] = {s.beta_level, s.beta_skew, s.beta_term};
            for (int k = 0; k < 3; ++k) {
                auto [b, se] = slope_and_se(x[k], y[k]);
                CAPTURE(s.symbol);
                CAPTURE(k);
                CHECK(std::abs(b - beta[k]) <= 3 * se);
            }
        }
    }
}

TEST_CASE("generation is deterministic") {
    auto cfg = SynthConfig::desk_scale(11, 200);
    auto a = generate_corpus(cfg), b = generate_corpus(cfg);
    CHECK(corpus_text(a) == corpus_text(b));
    auto cfg2 = SynthConfig::desk_scale(12, 200);
    CHECK(corpus_text(a) != corpus_text(generate_corpus(cfg2)));
}

TEST_CASE("index only corpus") {
    auto cfg = SynthConfig::desk_scale(3, 100);
    cfg.n_stocks = 0;
    auto out = generate_corpus(cfg);
    CHECK(out.corpus.symbols() == std::vector<std::string>{"IDX"});
    CHECK(out.corpus.size() == 100);
}

TEST_CASE("generator preconditions") {
    auto cfg = SynthConfig::desk_scale(3, 100);
    auto bad = cfg;
    bad.stress_last = Date(2040, 1, 1);
    CHECK_THROWS_AS(generate_corpus(bad), ValidationError);
    bad = cfg;
    bad.split_date = Date(2000, 1, 3);
    CHECK_THROWS_AS(generate_corpus(bad), ValidationError);
    bad = cfg;
    CHECK_THROWS_AS(generate_corpus(bad, {}), ValidationError);
}

TEST_CASE("realized vol") {
    std::vector<PricePoint> p;
    Date d(2020, 1, 2);
    for (int i = 0; i < 20; ++i, d = d.next_business_day()) p.push_back({d, 50.0});
    SUBCASE("constant prices") {
        for (auto& v : realized_vol(p, 5)) CHECK(v.value == 0.0);
        auto rv = realized_vol(p, 5);
        CHECK(rv.size() == 15);
        CHECK(rv.front().date == p[5].date);
    }
    SUBCASE("alternating returns") {
        const double x = 0.03;
        for (std::size_t i = 1; i < p.size(); i += 2) p[i].close = 50.0 * std::exp(x);
        // Returns alternate +x, -x: mean 0, n-1 sample sd of two is sqrt(2) |x|.
        for (auto& v : realized_vol(p, 2)) CHECK(v.value == doctest::Approx(std::sqrt(252.0 * 2.0) * x));
    }
    SUBCASE("window bounds") {
        std::vector<PricePoint> longer(252, p[0]);
        CHECK_THROWS_AS(realized_vol(longer, 252), ValidationError);
        CHECK_THROWS_AS(realized_vol(p, 1), ValidationError);
    }
}

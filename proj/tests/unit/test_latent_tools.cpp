#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "volenc/error.hpp"
#include "volenc/latent_tools.hpp"
#include "volenc/synth.hpp"

using namespace volenc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Synthetic map with a chosen wiring: latent i drives factor wiring[i] with sign signs[i].
SurfaceDecoder planted_decoder(std::array<int, 3> wiring, std::array<double, 3> signs = {1, 1, 1}) {
    return [=](const VectorXd& z) {
        double f[3] = {-1.5, 1.5, 0.05};
        const double scale[3] = {0.3, 0.6, 0.1};
        for (int i = 0; i < 3; ++i) f[wiring[i]] += signs[i] * scale[wiring[i]] * z[i];
        return factor_to_surface({f[0], f[1], f[2]}, GridSpec::canonical());
    };
}

EncodedCorpus entries_from_mu(const MatrixXd& mu) {
    EncodedCorpus e;
    for (Eigen::Index c = 0; c < mu.cols(); ++c)
        e.push_back({Date(2020, 1, 1), "S", false, {mu.col(c), VectorXd::Zero(mu.rows()), {}, {}}});
    return e;
}

}  // namespace

TEST_CASE("correlations") {
    SUBCASE("perfectly dependent latents") {
        MatrixXd mu(3, 10);
        for (int t = 0; t < 10; ++t) mu.col(t) << t * 0.3, 2 * t * 0.3, std::sin(t);
        auto r = latent_correlations(entries_from_mu(mu));
        CHECK(r.rho(0, 1) == doctest::Approx(1.0));
        CHECK(r.rho(1, 0) == doctest::Approx(1.0));
        CHECK(r.rho(2, 2) == 1.0);
        CHECK(r.warnings.empty());
        CHECK(max_off_diagonal(r.rho) == doctest::Approx(1.0));
    }
    SUBCASE("independent latents") {
        std::mt19937_64 rng(21);
        std::normal_distribution<double> n;
        MatrixXd mu(3, 10000);
        for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] = n(rng);
        auto r = latent_correlations(mu);
        CHECK(max_off_diagonal(r.rho) < 0.05);
    }
    SUBCASE("zero variance warns") {
        MatrixXd mu(2, 3);
        mu << 1, 1, 1, 0.5, 0.5, 0.5;
        auto r = latent_correlations(entries_from_mu(mu));
        CHECK(r.zero_variance == std::vector<int>{0, 1});
        CHECK(r.warnings.size() == 2);
        CHECK(r.rho(0, 1) == 0.0);
        CHECK(r.rho(0, 0) == 1.0);
    }
    CHECK_THROWS_AS(latent_correlations(MatrixXd::Ones(3, 2)), ValidationError);
}

TEST_CASE("shape statistics") {
    auto g = GridSpec::canonical();
    auto flat = shape_statistics(SurfaceGrid(g, std::vector<double>(56, 0.3)));
    CHECK(flat[0] == doctest::Approx(0.3));
    CHECK(flat[1] == doctest::Approx(0.0));
    CHECK(flat[2] == doctest::Approx(0.0));
    // vol = 0.2 + a (1 - M) + b log(tau): skew statistic a, term statistic b.
    std::vector<double> v(56);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 7; ++j)
            v[g.index(i, j)] = 0.2 + 0.15 * (1 - g.moneyness[j]) + 0.02 * std::log(g.terms[i]);
    auto s = shape_statistics(SurfaceGrid(g, v));
    CHECK(s[1] == doctest::Approx(0.15));
    CHECK(s[2] == doctest::Approx(0.02));
}

TEST_CASE("match factors on planted maps") {
    SUBCASE("identity wiring") {
        auto m = match_factors(planted_decoder({0, 1, 2}), 3);
        CHECK(m.latent_for_role == std::array<int, 3>{0, 1, 2});
        CHECK(m.sign == std::array<int, 3>{1, 1, 1});
        CHECK(m.dominance_ratio > 1.1);
        CHECK(m.role_of_latent(2) == 2);
    }
    SUBCASE("swapped latents") {
        auto m = match_factors(planted_decoder({1, 0, 2}), 3);
        CHECK(m.latent_for_role == std::array<int, 3>{1, 0, 2});
        CHECK(m.role_of_latent(0) == static_cast<int>(Role::skew));
    }
    SUBCASE("sign flip") {
        auto m = match_factors(planted_decoder({2, 0, 1}, {1, -1, 1}), 3);
        CHECK(m.latent_for_role == std::array<int, 3>{1, 2, 0});
        CHECK(m.sign == std::array<int, 3>{-1, 1, 1});
    }
    SUBCASE("degenerate") {
        SurfaceDecoder twin = [](const VectorXd& z) {
            return factor_to_surface({-1.5 + 0.3 * (z[0] + z[1]), 1.5 + 0.6 * z[2], 0.05}, GridSpec::canonical());
        };
        try {
            match_factors(twin, 3);
            FAIL("expected DegenerateMatchError");
        } catch (const DegenerateMatchError& e) {
            CHECK(e.scores()(0, 0) == doctest::Approx(e.scores()(1, 0)));
        }
    }
    CHECK_THROWS_AS(match_factors(planted_decoder({0, 1, 2}), 2), ValidationError);
}

TEST_CASE("encoding and sweeps on a fresh model") {
    auto cfg = SynthConfig::desk_scale(2, 60);
    cfg.n_stocks = 1;
    auto out = generate_corpus(cfg);
    VaeConfig vc;
    vc.seed = 3;
    auto model = VaeModel::create(cfg.grid, vc);
    // Non-zero head so codes differ between surfaces.
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 0.3);
    auto& head = model.encoder.mutable_layer(model.encoder.layers().size() - 1);
    for (Eigen::Index i = 0; i < head.weights.size(); ++i) head.weights.data()[i] = n(rng);

    auto enc = encode_corpus(model, out.corpus);
    REQUIRE(enc.size() == out.corpus.size());
    CHECK(enc[0].date == out.corpus.records()[0].date);
    CHECK(mu_matrix(enc).cols() == static_cast<Eigen::Index>(enc.size()));

    std::vector<const SurfaceRecord*> dup{&out.corpus.records()[0], &out.corpus.records()[0]};
    auto twice = encode_records(model, dup);
    CHECK(twice[0].code.mu == twice[1].code.mu);
    CHECK(encode_records(model, std::span(dup).first(1)).size() == 1);

    auto st = stress_summary(enc);
    CHECK(st.n_stress + st.n_calm == enc.size());
    CHECK(st.n_stress == 2 * 2);

    VectorXd base = VectorXd::Constant(3, 0.4);
    std::vector<double> one{0.4};
    auto single = scenario_sweep(model, base, 1, one);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == decode(model, base));
    CHECK(scenario_sweep(model, base, 0, std::vector<double>{}).empty());
    CHECK_THROWS_AS(scenario_sweep(model, base, 3, one), ValidationError);
    CHECK_THROWS_AS(scenario_sweep(model, VectorXd::Zero(2), 0, one), ValidationError);

    auto other = VaeModel::create(GridSpec{{3, 6}, {1.0}});
    CHECK_THROWS_AS(encode_corpus(other, out.corpus), ValidationError);

    auto dir = testutil::temp_dir("lt");
    save_encodings(enc, dir / "enc.csv");
    std::ifstream in(dir / "enc.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "date,symbol,stress,mu_1,mu_2,mu_3,log_sigma_1,log_sigma_2,log_sigma_3");

    SweepConfig sc{-1, 1, 5};
    auto vals = sc.values();
    CHECK(vals == std::vector<double>{-1, -0.5, 0, 0.5, 1});
    save_sweep(scenario_sweep(model, base, 0, vals), 0, Date(2021, 1, 4), dir / "sweep.csv");
    auto back = load_corpus(dir / "sweep.csv");
    CHECK(back.size() == 5);
    CHECK(back.symbols().front() == "Z1_00");
    std::filesystem::remove_all(dir);
}

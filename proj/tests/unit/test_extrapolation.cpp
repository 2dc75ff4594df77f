#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "volenc/error.hpp"
#include "volenc/synth.hpp"
#include "volenc/extrapolation.hpp"
#include "volenc/lbfgs.hpp"

using namespace volenc;
using Eigen::VectorXd;

TEST_CASE("lbfgs on Rosenbrock") {
    Objective rosen = [](const VectorXd& x, VectorXd& g) {
        const double a = 1 - x[0], b = x[1] - x[0] * x[0];
        g.resize(2);
        g[0] = -2 * a - 400 * x[0] * b;
        g[1] = 200 * b;
        return a * a + 100 * b * b;
    };
    VectorXd x0(2);
    x0 << -1.2, 1.0;
    auto r = lbfgs_minimize(rosen, x0);
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.value < 1e-12);

    LbfgsOptions few;
    few.max_iterations = 3;
    auto short_run = lbfgs_minimize(rosen, x0, few);
    CHECK_FALSE(short_run.converged);
    CHECK(short_run.iterations == 3);
    VectorXd g;
    CHECK(short_run.value < rosen(x0, g));
}

TEST_CASE("lbfgs on a quadratic") {
    Eigen::MatrixXd a(3, 3);
    a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
    VectorXd b(3);
    b << 1, -2, 0.5;
    Objective q = [&](const VectorXd& x, VectorXd& g) {
        g = a * x - b;
        return 0.5 * x.dot(a * x) - b.dot(x);
    };
    auto r = lbfgs_minimize(q, VectorXd::Zero(3));
    CHECK(r.converged);
    CHECK((r.x - a.ldlt().solve(b)).norm() < 1e-8);
    CHECK(r.gradient_norm <= 1e-8);

    Objective bad = [](const VectorXd&, VectorXd& g) {
        g = VectorXd::Zero(1);
        return std::nan("");
    };
    CHECK_THROWS_AS(lbfgs_minimize(bad, VectorXd::Zero(1)), ValidationError);
}

namespace {

VaeModel decoder_model(std::uint64_t seed) {
    VaeConfig c;
    c.seed = seed;
    auto m = VaeModel::create(GridSpec::canonical(), c);
    // Scale the last decoder layer into a realistic vol range.
    auto& out = m.decoder.mutable_layer(m.decoder.layers().size() - 1);
    out.weights *= 0.2;
    out.bias.setConstant(inverse_softplus(0.2));
    return m;
}

}  // namespace

TEST_CASE("objective gradient") {
    auto m = decoder_model(4);
    std::mt19937_64 rng(8);
    VectorXd zs = VectorXd::Random(3);
    auto partial = PartialSurface::from_surface(decode(m, zs), canonical_known_mask(m.grid));
    for (auto& v : partial.values) v *= 1.05;
    VectorXd z = VectorXd::Random(3), g;
    extrapolation_objective(m, partial, z, &g);
    auto f = [&](const VectorXd& x) { return extrapolation_objective(m, partial, x, nullptr); };
    CHECK(nn::check_gradient(f, z, g, 1e-6).max_rel_error < 1e-6);
    // Huber smoothing changes the value by at most delta / 2.
    double plain = 0;
    auto s = decode(m, z);
    std::size_t v = 0;
    for (std::size_t k = 0; k < 56; ++k)
        if (partial.mask[k]) plain += std::abs(s.vols()[k] - partial.values[v++]);
    plain /= 12;
    CHECK(std::abs(f(z) - plain) <= 0.5e-6 + 1e-15);
}

TEST_CASE("extrapolate invariants") {
    auto m = decoder_model(5);
    VectorXd zs(3);
    zs << 0.4, -0.7, 1.1;
    auto truth = decode(m, zs);
    auto mask = canonical_known_mask(m.grid);
    auto partial = PartialSurface::from_surface(truth, mask);
    ExtrapolationOptions opts;
    auto r = extrapolate(m, partial, opts);
    CHECK(r.surface == decode(m, r.z_hat));
    CHECK(r.objective <= extrapolation_objective(m, partial, zs, nullptr) + 1e-6);

    // Objective at the result is no worse than at any start.
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal;
    for (int s = 0; s < opts.starts; ++s) {
        VectorXd z0 = VectorXd::Zero(3);
        if (s > 0)
            for (int k = 0; k < 3; ++k) z0[k] = normal(rng);
        CHECK(r.objective <= extrapolation_objective(m, partial, z0, nullptr, opts.huber_delta));
    }

    auto again = extrapolate(m, partial, opts);
    CHECK(again.z_hat == r.z_hat);
    CHECK(again.surface == r.surface);
    CHECK(r.best_start >= 0);
    CHECK(r.best_start < opts.starts);

    auto one = opts;
    one.starts = 1;
    CHECK(extrapolate(m, partial, one).objective >= r.objective);
}

TEST_CASE("extrapolate preconditions") {
    auto m = decoder_model(6);
    auto s = decode(m, VectorXd::Zero(3));
    CHECK_THROWS_AS(extrapolate(m, PartialSurface::from_surface(s, std::vector<bool>(56, false))), ValidationError);
    CHECK_THROWS_AS(PartialSurface::from_surface(s, std::vector<bool>(3, true)), ValidationError);
    PartialSurface wrong{m.grid, canonical_known_mask(m.grid), {0.2}};
    CHECK_THROWS_AS(extrapolate(m, wrong), ValidationError);
    auto neg = PartialSurface::from_surface(s, canonical_known_mask(m.grid));
    neg.values[0] = -0.1;
    CHECK_THROWS_AS(extrapolate(m, neg), ValidationError);
    auto zero_starts = ExtrapolationOptions{};
    zero_starts.starts = 0;
    CHECK_THROWS_AS(extrapolate(m, PartialSurface::from_surface(s, canonical_known_mask(m.grid)), zero_starts),
                    ValidationError);
}

TEST_CASE("evaluate extrapolation table") {
    auto m = decoder_model(7);
    std::vector<SurfaceRecord> recs;
    Date d(2021, 6, 1);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (int k = 0; k < 4; ++k) {
        VectorXd z(3);
        z << n(rng), n(rng), n(rng);
        recs.push_back({d, k % 2 ? "B" : "A", decode(m, z), false});
        if (k % 2) d = d.next_business_day();
    }
    Corpus c(recs, Date(2021, 1, 1));
    auto test = c.test();
    ExtrapolationOptions opts;
    opts.starts = 3;
    auto t = evaluate_extrapolation(m, test, canonical_known_mask(m.grid), opts);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].symbol == "A");
    CHECK(t.rows[0].surfaces == 2);
    CHECK(t.overall.surfaces == 4);
    CHECK(t.overall.mae_known == doctest::Approx((t.rows[0].mae_known + t.rows[1].mae_known) / 2));
    CHECK(t.overall.satisfaction >= 0.0);
    CHECK(t.overall.satisfaction <= 1.0);

    auto all = evaluate_extrapolation(m, test, std::vector<bool>(56, true), opts);
    CHECK(std::isnan(all.overall.mae_unknown));

    auto dir = testutil::temp_dir("ex");
    save_extrapolation_table(t, dir / "t.csv");
    std::ifstream in(dir / "t.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "symbol,surfaces,mae_known,mae_unknown,satisfaction");
    int rows = 0;
    std::string last;
    while (std::getline(in, line)) {
        ++rows;
        last = line;
    }
    CHECK(rows == 3);
    CHECK(last.rfind("ALL,4,", 0) == 0);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(evaluate_extrapolation(m, {}, canonical_known_mask(m.grid)), ValidationError);
}

TEST_CASE("perfect and offset predictions score as expected") {
    auto g = GridSpec::canonical();
    SurfaceGrid truth(g, std::vector<double>(56, 0.22));
    auto mask = canonical_known_mask(g);
    auto same = mae_split(truth, truth, mask);
    CHECK(*same.inside == 0.0);
    CHECK(satisfaction(truth, truth).rate == 1.0);
    SurfaceGrid off(g, std::vector<double>(56, 0.27));
    CHECK(satisfaction(truth, off).rate == 0.0);
}

#include <doctest.h>

// Eigen-dependent headers before httplib (resolv.h defines _res).
#include "test_util.hpp"
#include "volenc/cli.hpp"
#include "volenc/service.hpp"
#include "volenc/synth.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

using namespace volenc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "volenc");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {rc, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

VaeModel service_model() {
    VaeConfig c;
    c.seed = 4;
    auto m = VaeModel::create(GridSpec::canonical(), c);
    auto& out = m.decoder.mutable_layer(m.decoder.layers().size() - 1);
    out.weights *= 0.2;
    out.bias.setConstant(inverse_softplus(0.2));
    return m;
}

json grid_rows(const SurfaceGrid& s) {
    json rows = json::array();
    for (std::size_t i = 0; i < s.grid().n_terms(); ++i) {
        json r = json::array();
        for (std::size_t j = 0; j < s.grid().n_moneyness(); ++j) r.push_back(s.at(i, j));
        rows.push_back(r);
    }
    return rows;
}

json mask_rows(const std::vector<bool>& mask, const GridSpec& g) {
    json rows = json::array();
    for (std::size_t i = 0; i < g.n_terms(); ++i) {
        json r = json::array();
        for (std::size_t j = 0; j < g.n_moneyness(); ++j) r.push_back(static_cast<bool>(mask[g.index(i, j)]));
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("service routes") {
    auto model = service_model();
    Service svc(model);

    SUBCASE("meta") {
        auto r = svc.handle("GET", "/model/meta", "");
        CHECK(r.status == 200);
        auto j = json::parse(r.body);
        CHECK(j["D"] == 3);
        CHECK(j["grid"]["terms"].size() == 8);
        CHECK(j["lambda_cov"] == 0.1);
        CHECK(j["version"] == kCheckpointVersion);
    }
    SUBCASE("decode") {
        auto a = svc.handle("POST", "/decode", R"({"z": [0, 0, 0]})");
        auto b = svc.handle("POST", "/decode", R"({"z": [0, 0, 0]})");
        CHECK(a.status == 200);
        CHECK(a.body == b.body);
        auto j = json::parse(a.body);
        REQUIRE(j["vols"].size() == 8);
        REQUIRE(j["vols"][0].size() == 7);
        auto s = decode(model, Eigen::VectorXd::Zero(3));
        // Exact at the JSON text level.
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t k = 0; k < 7; ++k) CHECK(j["vols"][i][k].get<double>() == s.at(i, k));
    }
    SUBCASE("decode errors") {
        auto r = svc.handle("POST", "/decode", R"({"z": [0, 0, 0, 0]})");
        CHECK(r.status == 400);
        CHECK(json::parse(r.body)["field"] == "z");
        CHECK(svc.handle("POST", "/decode", "{bad").status == 400);
        CHECK(svc.handle("POST", "/decode", R"({"x": 1})").status == 400);
        CHECK(svc.handle("POST", "/decode", R"({"z": [0, "a", 0]})").status == 400);
        CHECK(svc.handle("GET", "/nothing", "").status == 404);
        CHECK(svc.handle("GET", "/decode", "").status == 404);
    }
    SUBCASE("encode") {
        auto s = decode(model, Eigen::VectorXd::Constant(3, 0.5));
        json req{{"vols", grid_rows(s)}};
        auto r = svc.handle("POST", "/encode", req.dump());
        CHECK(r.status == 200);
        auto j = json::parse(r.body);
        auto code = encode(model, s);
        CHECK(j["mu"].size() == 3);
        CHECK(j["mu"][1].get<double>() == code.mu[1]);
        CHECK(j["log_sigma"][2].get<double>() == code.log_sigma[2]);
        req["vols"][3][2] = -0.1;
        auto bad = svc.handle("POST", "/encode", req.dump());
        CHECK(bad.status == 400);
        CHECK(json::parse(bad.body)["field"] == "vols");
        req["vols"].erase(0);
        CHECK(svc.handle("POST", "/encode", req.dump()).status == 400);
    }
    SUBCASE("extrapolate") {
        Eigen::VectorXd zs(3);
        zs << 0.3, -0.2, 0.1;
        auto truth = decode(model, zs);
        auto mask = canonical_known_mask(model.grid);
        json values = grid_rows(truth);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t k = 0; k < 7; ++k)
                if (!mask[model.grid.index(i, k)]) values[i][k] = nullptr;
        json req{{"mask", mask_rows(mask, model.grid)}, {"values", values}, {"starts", 3}};
        auto r = svc.handle("POST", "/extrapolate", req.dump());
        REQUIRE(r.status == 200);
        auto j = json::parse(r.body);
        ExtrapolationOptions o;
        o.starts = 3;
        auto direct = extrapolate(model, PartialSurface::from_surface(truth, mask), o);
        CHECK(j["z_hat"][0].get<double>() == direct.z_hat[0]);
        CHECK(j["objective"].get<double>() == direct.objective);
        CHECK(j["vols"][7][6].get<double>() == direct.surface.at(7, 6));

        json flat = json::array();
        for (std::size_t k = 0; k < 56; ++k)
            if (mask[k]) flat.push_back(truth.vols()[k]);
        req["values"] = flat;
        CHECK(svc.handle("POST", "/extrapolate", req.dump()).body == r.body);

        req["values"] = json::array({0.2});
        CHECK(json::parse(svc.handle("POST", "/extrapolate", req.dump()).body)["field"] == "values");
        req["mask"] = mask_rows(std::vector<bool>(56, false), model.grid);
        CHECK(json::parse(svc.handle("POST", "/extrapolate", req.dump()).body)["field"] == "mask");
    }
    SUBCASE("thresholds and diagnostics") {
        auto t = json::parse(svc.handle("GET", "/thresholds", "").body);
        CHECK(t["values"][0][1].get<double>() == 0.0183);
        auto d = svc.handle("GET", "/diagnostics", "");
        CHECK(d.status == 200);
        CHECK(json::parse(d.body).contains("roles"));
    }
    SUBCASE("requests leave the model unchanged") {
        auto before = model_to_json(svc.model());
        svc.handle("POST", "/decode", R"({"z": [1, 2, 3]})");
        svc.handle("POST", "/extrapolate", R"({"mask": 1})");
        CHECK(model_to_json(svc.model()) == before);
    }
}

TEST_CASE("http server with CORS") {
    Service svc(service_model());
    httplib::Server server;
    bind_routes(server, svc);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto meta = client.Get("/model/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);
    CHECK(meta->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(json::parse(meta->body)["D"] == 3);

    auto dec = client.Post("/decode", R"({"z": [0, 0, 0]})", "application/json");
    REQUIRE(dec);
    CHECK(dec->status == 200);
    CHECK(dec->body == svc.handle("POST", "/decode", R"({"z": [0, 0, 0]})").body);
    auto bad = client.Post("/decode", R"({"z": [0]})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto pre = client.Options("/decode");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

    // Concurrent decodes return identical bodies.
    std::vector<std::thread> pool;
    std::vector<std::string> bodies(8);
    for (int i = 0; i < 8; ++i)
        pool.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            auto r = c.Post("/decode", R"({"z": [0.5, -1, 2]})", "application/json");
            if (r) bodies[static_cast<std::size_t>(i)] = r->body;
        });
    for (auto& t : pool) t.join();
    for (const auto& b : bodies) CHECK(b == bodies[0]);
    CHECK_FALSE(bodies[0].empty());

    server.stop();
    th.join();
}

TEST_CASE("command line workflow") {
    auto dir = testutil::temp_dir("cli");
    auto p = [&](const std::string& f) { return (dir / f).string(); };

    SUBCASE("argument errors") {
        CHECK(cli({}).code == 1);
        CHECK(cli({"--bogus"}).code == 1);
        CHECK(cli({"train", "--corpus", p("missing.csv"), "--out", p("m.json")}).code == 1);
        CHECK(cli({"synth-data", "--out", p("nodir/c.csv")}).code == 1);
        CHECK(cli({"--help"}).code == 0);
        auto v = cli({"--version"});
        CHECK(v.code == 0);
        CHECK_FALSE(v.out.empty());
    }

    SUBCASE("end to end") {
        auto a = cli({"synth-data", "--seed", "3", "--n-days", "150", "--n-stocks", "2", "--out", p("c.csv")});
        REQUIRE(a.code == 0);
        auto b = cli({"synth-data", "--seed", "3", "--n-days", "150", "--n-stocks", "2", "--out", p("c2.csv")});
        REQUIRE(b.code == 0);
        CHECK(slurp(p("c.csv")) == slurp(p("c2.csv")));
        CHECK(fs::exists(p("c.prices.csv")));
        auto man = json::parse(slurp(p("c.csv.manifest.json")));
        CHECK(man["command"] == "synth-data");
        CHECK(man["seeds"].size() >= 1);
        CHECK(man.contains("wall_clock_seconds"));
        CHECK(man.contains("code_version"));

        auto t = cli({"train", "--corpus", p("c.csv"), "--epochs", "2", "--batch-size", "32", "--out", p("m.json")});
        REQUIRE(t.code == 0);
        CHECK(fs::exists(p("m.history.csv")));
        CHECK(fs::exists(p("m.json.manifest.json")));
        auto hist = slurp(p("m.history.csv"));
        CHECK(std::count(hist.begin(), hist.end(), '\n') == 3);

        CHECK(cli({"encode", "--model", p("m.json"), "--corpus", p("c.csv"), "--out", p("enc.csv")}).code == 0);
        fs::create_directories(dir / "diag");
        CHECK(cli({"diagnose", "--model", p("m.json"), "--corpus", p("c.csv"), "--out-dir", p("diag")}).code == 0);
        CHECK(fs::exists(dir / "diag" / "diagnostics.json"));
        CHECK(fs::exists(dir / "diag" / "encodings.csv"));
        CHECK(cli({"sweep", "--model", p("m.json"), "--dim", "2", "--steps", "5", "--out", p("sweep.csv")}).code == 0);
        CHECK(load_corpus(p("sweep.csv")).size() == 5);
        CHECK(cli({"sweep", "--model", p("m.json"), "--dim", "4", "--out", p("sweep.csv")}).code == 1);

        auto x = cli({"extrapolate", "--model", p("m.json"), "--corpus", p("c.csv"), "--starts", "2", "--out", p("ext.csv")});
        CHECK(x.code == 0);
        auto table = slurp(p("ext.csv"));
        CHECK(table.rfind("symbol,surfaces,mae_known,mae_unknown,satisfaction\n", 0) == 0);
        CHECK(table.find("\nALL,") != std::string::npos);
        CHECK(cli({"extrapolate", "--model", p("m.json"), "--corpus", p("c.csv"), "--known-terms", "5", "--out",
                   p("ext.csv")}).code == 1);

        CHECK(cli({"infer-stock", "--model", p("m.json"), "--corpus", p("c.csv"), "--prices", p("c.prices.csv"),
                   "--window", "20", "--rv-window", "20", "--out", p("inf.csv")}).code == 0);
        CHECK(slurp(p("inf.csv")).rfind("symbol,predictions,z1_error", 0) == 0);

        auto e = cli({"evaluate", "--truth", p("c.csv"), "--pred", p("c.csv"), "--known-terms", "3,6,9,12",
                      "--known-moneyness", "0.95,1.00,1.05", "--out", p("eval.csv")});
        CHECK(e.code == 0);
        CHECK(e.out.find("satisfaction 1 ") != std::string::npos);

        // Model from the environment.
        ::setenv("VOLENC_MODEL", p("m.json").c_str(), 1);
        CHECK(cli({"encode", "--corpus", p("c.csv"), "--out", p("enc2.csv")}).code == 0);
        CHECK(slurp(p("enc.csv")) == slurp(p("enc2.csv")));
        ::unsetenv("VOLENC_MODEL");
        CHECK(cli({"encode", "--corpus", p("c.csv"), "--out", p("enc3.csv")}).code == 1);

        // Grid mismatch is a validation error.
        std::ofstream(p("tiny.csv")) << "date,symbol,term_months,moneyness,implied_vol,stress\n"
                                        "2021-01-04,A,3,1,0.2,0\n2021-01-05,A,3,1,0.2,0\n";
        auto mm = cli({"encode", "--model", p("m.json"), "--corpus", p("tiny.csv"), "--out", p("enc4.csv")});
        CHECK(mm.code == 1);
        CHECK(mm.err.find("grid") != std::string::npos);

        // Corrupt checkpoint.
        std::ofstream(p("bad.json")) << "{}";
        CHECK(cli({"encode", "--model", p("bad.json"), "--corpus", p("c.csv"), "--out", p("enc5.csv")}).code == 1);

        // A taken port is a runtime failure.
        httplib::Server blocker;
        const int port = blocker.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        auto s = cli({"serve", "--model", p("m.json"), "--port", std::to_string(port)});
        CHECK(s.code == 2);
    }
    fs::remove_all(dir);
}

#include "volenc/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "volenc/corpus.hpp"
#include "volenc/error.hpp"
#include "volenc/evaluation.hpp"
#include "volenc/extrapolation.hpp"
#include "volenc/latent_tools.hpp"
#include "volenc/service.hpp"
#include "volenc/stock_infer.hpp"
#include "volenc/synth.hpp"
#include "volenc/vae.hpp"

#ifndef VOLENC_VERSION
#define VOLENC_VERSION "unknown"
#endif

namespace volenc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void require_writable(const fs::path& path) {
    const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    if (!fs::is_directory(dir)) {
        throw ValidationError("output directory '" + dir.string() + "' does not exist");
    }
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
    fs::path p = path;
    p.replace_extension(suffix);
    return p;
}

// Collected while a command runs; written next to the primary output.
struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    json seeds = json::object();
    json inputs = json::object();
    json outputs = json::object();

    void write(const fs::path& primary, double seconds, const std::string& started) const {
        json j{{"command", command},
               {"argv", argv},
               {"config", config},
               {"seeds", seeds},
               {"inputs", inputs},
               {"outputs", outputs},
               {"code_version", VOLENC_VERSION},
               {"started_at", started},
               {"wall_clock_seconds", seconds}};
        std::ofstream out(primary.string() + ".manifest.json", std::ios::binary);
        if (!out) throw Error("cannot write manifest for '" + primary.string() + "'");
        out << j.dump(2) << '\n';
    }
};

std::optional<Date> parse_optional_date(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return Date::parse(s);
}

ThresholdTable thresholds_from(const std::string& path) {
    return path.empty() ? ThresholdTable::canonical() : load_thresholds(path);
}

void check_model_grid(const VaeModel& model, const Corpus& corpus) {
    if (!(model.grid == corpus.grid())) {
        throw ValidationError("corpus grid (" + std::to_string(corpus.grid().n_terms()) + " terms x " +
                              std::to_string(corpus.grid().n_moneyness()) +
                              " moneyness) does not match the model grid; retrain on this grid or pass the matching corpus");
    }
}

struct SynthOpts {
    std::uint64_t seed = 7;
    std::size_t n_stocks = 8;
    std::size_t n_days = 1000;
    double stress_shift = 0.8;
    double noise_sd = 0.001;
    std::string out, prices;
};

struct TrainOpts {
    std::string corpus, out, history, split;
    int epochs = 40, batch_size = 64, latent_dim = 3;
    double lr = 2e-3, lambda_kl = 1e-4, lambda_cov = 0.1;
    std::string cov_penalty = "absolute";
    std::uint64_t seed = 1;
};

struct ModelCorpusOpts {
    std::string model, corpus, out, split, thresholds;
};

struct SweepOpts {
    std::string model, out, date = "2000-01-03";
    int dim = 1;
    double lo = -2.0, hi = 2.0;
    int steps = 21;
    std::vector<double> base, values;
};

struct ExtrapOpts : ModelCorpusOpts {
    std::vector<double> terms{3, 6, 9, 12}, moneyness{0.95, 1.00, 1.05};
    int starts = 8;
    std::uint64_t seed = 1;
    bool all_records = false;
};

struct InferOpts : ModelCorpusOpts {
    std::string prices, index = "IDX";
    std::size_t window = 60, rv_window = 252;
};

struct EvalOpts {
    std::string truth, pred, out, thresholds;
    std::vector<double> terms, moneyness;
};

struct ServeOpts {
    std::string model, host = "127.0.0.1", thresholds;
    int port = 8080;
};

int cmd_synth(const SynthOpts& o, Manifest& m, std::ostream& out) {
    require_writable(o.out);
    const fs::path prices = o.prices.empty() ? sibling(o.out, ".prices.csv") : fs::path(o.prices);
    require_writable(prices);
    SynthConfig cfg = SynthConfig::desk_scale(o.seed, o.n_days);
    cfg.n_stocks = o.n_stocks;
    cfg.stress_level_shift = o.stress_shift;
    cfg.noise_sd = o.noise_sd;
    const auto data = generate_corpus(cfg);
    save_corpus(data.corpus, o.out);
    save_prices(data.prices, prices);
    m.config = {{"n_stocks", o.n_stocks}, {"n_days", o.n_days}, {"stress_level_shift", o.stress_shift},
                {"noise_sd", o.noise_sd}, {"split_date", cfg.split_date.to_string()},
                {"stress_first", cfg.stress_first.to_string()}, {"stress_last", cfg.stress_last.to_string()}};
    m.seeds = {{"synth", o.seed}};
    m.outputs = {{"corpus", o.out}, {"prices", prices.string()}};
    out << "wrote " << data.corpus.size() << " surfaces to " << o.out << " and prices to " << prices.string() << '\n';
    return 0;
}

int cmd_train(const TrainOpts& o, Manifest& m, std::ostream& out) {
    require_writable(o.out);
    const fs::path history = o.history.empty() ? sibling(o.out, ".history.csv") : fs::path(o.history);
    require_writable(history);
    if (o.epochs < 1) throw ValidationError("--epochs must be >= 1");
    if (o.batch_size < 2) throw ValidationError("--batch-size must be >= 2");
    if (o.latent_dim < 1) throw ValidationError("--latent-dim must be >= 1");
    VaeConfig vc;
    vc.latent_dim = o.latent_dim;
    vc.lambda_kl = o.lambda_kl;
    vc.lambda_cov = o.lambda_cov;
    vc.cov_penalty = cov_penalty_from_string(o.cov_penalty);
    vc.seed = o.seed;
    const Corpus corpus = load_corpus(o.corpus, parse_optional_date(o.split));
    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch_size;
    tc.learning_rate = o.lr;
    tc.seed = o.seed;
    const auto res = train(VaeModel::create(corpus.grid(), vc), corpus, tc);
    save_model(res.model, o.out);
    std::ofstream h(history, std::ios::binary);
    if (!h) throw Error("cannot write '" + history.string() + "'");
    h << "epoch,recon,kl,cov,total,mean_sigma\n";
    for (const auto& e : res.history) {
        h << e.epoch << ',' << format_double(e.loss.recon) << ',' << format_double(e.loss.kl) << ','
          << format_double(e.loss.cov) << ',' << format_double(e.loss.total) << ',' << format_double(e.mean_sigma)
          << '\n';
    }
    m.config = {{"epochs", o.epochs}, {"batch_size", o.batch_size}, {"learning_rate", o.lr},
                {"latent_dim", o.latent_dim}, {"lambda_kl", o.lambda_kl}, {"lambda_cov", o.lambda_cov},
                {"cov_penalty", o.cov_penalty}, {"split_date", corpus.split_date().to_string()}};
    m.seeds = {{"model", o.seed}, {"train", o.seed}};
    m.inputs = {{"corpus", o.corpus}};
    m.outputs = {{"model", o.out}, {"history", history.string()}};
    const auto& last = res.history.back().loss;
    out << "trained " << o.epochs << " epochs on " << corpus.train().size() << " surfaces: recon "
        << last.recon << ", kl " << last.kl << ", cov " << last.cov << '\n';
    return 0;
}

int cmd_encode(const ModelCorpusOpts& o, Manifest& m, std::ostream& out) {
    require_writable(o.out);
    const auto model = load_model(o.model);
    const Corpus corpus = load_corpus(o.corpus, parse_optional_date(o.split));
    check_model_grid(model, corpus);
    const auto enc = encode_corpus(model, corpus);
    save_encodings(enc, o.out);
    m.inputs = {{"model", o.model}, {"corpus", o.corpus}};
    m.outputs = {{"encodings", o.out}};
    out << "encoded " << enc.size() << " surfaces to " << o.out << '\n';
    return 0;
}

int cmd_diagnose(const ModelCorpusOpts& o, Manifest& m, std::ostream& out) {
    const fs::path dir = o.out;
    if (!fs::is_directory(dir)) throw ValidationError("output directory '" + dir.string() + "' does not exist");
    const auto model = load_model(o.model);
    const Corpus corpus = load_corpus(o.corpus, parse_optional_date(o.split));
    check_model_grid(model, corpus);
    const auto test = encode_records(model, corpus.test());
    const auto all = encode_corpus(model, corpus);
    json report;
    if (test.size() >= 3) {
        const auto corr = latent_correlations(test);
        save_correlations(corr.rho, dir / "correlations.csv");
        report["max_abs_offdiag_correlation"] = max_off_diagonal(corr.rho);
        report["warnings"] = corr.warnings;
        for (const auto& w : corr.warnings) out << "warning: " << w << '\n';
        out << "held-out max |rho| = " << max_off_diagonal(corr.rho) << '\n';
    }
    if (model.latent_dim == 3) {
        try {
            const auto fm = match_factors(model);
            json roles = json::object();
            for (Role r : kRoles) {
                const auto i = static_cast<std::size_t>(r);
                roles[to_string(r)] = {{"latent", fm.latent_for_role[i] + 1}, {"sign", fm.sign[i]}};
                out << to_string(r) << " -> Z" << fm.latent_for_role[i] + 1 << (fm.sign[i] > 0 ? " (+)" : " (-)")
                    << '\n';
            }
            report["factor_match"] = {{"roles", roles}, {"dominance_ratio", fm.dominance_ratio}};
            out << "dominance ratio " << fm.dominance_ratio << '\n';
        } catch (const DegenerateMatchError& e) {
            report["factor_match"] = {{"error", e.what()}};
            out << "factor matching failed: " << e.what() << '\n';
        }
    }
    const auto ss = stress_summary(all);
    report["stress"] = {{"n_stress", ss.n_stress}, {"n_calm", ss.n_calm}};
    if (ss.n_stress && ss.n_calm) {
        report["stress"]["mean_mu_stress"] = std::vector<double>(ss.mean_stress.data(), ss.mean_stress.data() + ss.mean_stress.size());
        report["stress"]["mean_mu_calm"] = std::vector<double>(ss.mean_calm.data(), ss.mean_calm.data() + ss.mean_calm.size());
    }
    save_encodings(all, dir / "encodings.csv");
    {
        std::ofstream f(dir / "diagnostics.json", std::ios::binary);
        f << report.dump(2) << '\n';
    }
    m.inputs = {{"model", o.model}, {"corpus", o.corpus}};
    m.outputs = {{"diagnostics", (dir / "diagnostics.json").string()},
                 {"correlations", (dir / "correlations.csv").string()},
                 {"encodings", (dir / "encodings.csv").string()}};
    return 0;
}

int cmd_sweep(const SweepOpts& o, Manifest& m, std::ostream& out) {
    require_writable(o.out);
    const auto model = load_model(o.model);
    if (o.dim < 1 || o.dim > model.latent_dim) {
        throw ValidationError("--dim must be in 1.." + std::to_string(model.latent_dim));
    }
    Eigen::VectorXd base = Eigen::VectorXd::Zero(model.latent_dim);
    if (!o.base.empty()) {
        if (static_cast<int>(o.base.size()) != model.latent_dim) {
            throw ValidationError("--base needs " + std::to_string(model.latent_dim) + " values");
        }
        base = Eigen::Map<const Eigen::VectorXd>(o.base.data(), model.latent_dim);
    }
    const std::vector<double> values = o.values.empty() ? SweepConfig{o.lo, o.hi, o.steps}.values() : o.values;
    const auto surfaces = scenario_sweep(model, base, o.dim - 1, values);
    save_sweep(surfaces, o.dim - 1, Date::parse(o.date), o.out);
    m.config = {{"dim", o.dim}, {"values", values}, {"base", std::vector<double>(base.data(), base.data() + base.size())}};
    m.inputs = {{"model", o.model}};
    m.outputs = {{"sweep", o.out}};
    out << "wrote " << surfaces.size() << " surfaces to " << o.out << '\n';
    return 0;
}

int cmd_extrapolate(const ExtrapOpts& o, Manifest& m, std::ostream& out) {
    require_writable(o.out);
    if (o.starts < 1) throw ValidationError("--starts must be >= 1");
    const auto thresholds = thresholds_from(o.thresholds);
    const auto model = load_model(o.model);
    const Corpus corpus = load_corpus(o.corpus, parse_optional_date(o.split));
    check_model_grid(model, corpus);
    const auto mask = subset_mask(model.grid, o.terms, o.moneyness);
    ExtrapolationOptions eo;
    eo.starts = o.starts;
    eo.seed = o.seed;
    std::vector<const SurfaceRecord*> records;
    if (o.all_records) {
        for (const auto& r : corpus.records()) records.push_back(&r);
    } else {
        records = corpus.test();
    }
    const auto table = evaluate_extrapolation(model, records, mask, eo, thresholds);
    save_extrapolation_table(table, o.out);
    m.config = {{"known_terms", o.terms}, {"known_moneyness", o.moneyness}, {"starts", o.starts},
                {"records", o.all_records ? "all" : "test"}, {"split_date", corpus.split_date().to_string()},
                {"thresholds", o.thresholds}};
    m.seeds = {{"extrapolation", o.seed}};
    m.inputs = {{"model", o.model}, {"corpus", o.corpus}};
    m.outputs = {{"table", o.out}};
    out << "known MAE " << table.overall.mae_known << ", unknown MAE " << table.overall.mae_unknown
        << ", satisfaction " << table.overall.satisfaction << " over " << table.overall.surfaces << " surfaces\n";
    return 0;
}

int cmd_infer(const InferOpts& o, Manifest& m, std::ostream& out) {
    require_writable(o.out);
    const auto thresholds = thresholds_from(o.thresholds);
    const auto model = load_model(o.model);
    const Corpus corpus = load_corpus(o.corpus, parse_optional_date(o.split));
    check_model_grid(model, corpus);
    const auto prices = load_prices(o.prices);
    InferenceConfig ic;
    ic.window = o.window;
    ic.realized_window = o.rv_window;
    ic.index_symbol = o.index;
    const auto table = evaluate_inference(model, corpus, prices, ic, thresholds);
    save_inference_table(table, o.out);
    m.config = {{"window", o.window}, {"realized_window", o.rv_window}, {"index", o.index},
                {"split_date", corpus.split_date().to_string()}, {"thresholds", o.thresholds}};
    m.inputs = {{"model", o.model}, {"corpus", o.corpus}, {"prices", o.prices}};
    m.outputs = {{"table", o.out}};
    out << "mean satisfaction " << table.mean_satisfaction << " over " << table.rows.size() << " stocks\n";
    return 0;
}

int cmd_evaluate(const EvalOpts& o, Manifest& m, std::ostream& out) {
    require_writable(o.out);
    if (o.terms.empty() != o.moneyness.empty()) {
        throw ValidationError("--known-terms and --known-moneyness must be given together");
    }
    const auto thresholds = thresholds_from(o.thresholds);
    const Corpus truth = load_corpus(o.truth);
    const Corpus pred = load_corpus(o.pred);
    if (!(truth.grid() == pred.grid())) throw ValidationError("truth and prediction corpora use different grids");
    std::optional<std::vector<bool>> mask;
    if (!o.terms.empty()) mask = subset_mask(truth.grid(), o.terms, o.moneyness);
    struct Acc {
        EvalReport rep;
        std::size_t n = 0;
        double known = 0.0, unknown = 0.0;
    };
    std::map<std::string, Acc> per;
    std::size_t matched = 0;
    for (const auto& t : truth.records()) {
        const auto* p = pred.find(t.date, t.symbol);
        if (!p) continue;
        ++matched;
        for (Acc* a : {&per[t.symbol], &per["ALL"]}) {
            accumulate(a->rep, satisfaction(t.surface, p->surface, thresholds));
            ++a->n;
            if (mask) {
                const auto s = mae_split(t.surface, p->surface, *mask);
                a->known += s.inside.value_or(0.0);
                a->unknown += s.outside.value_or(0.0);
            }
        }
    }
    if (matched == 0) throw ValidationError("no (date, symbol) pairs are shared by the two corpora");
    std::ofstream f(o.out, std::ios::binary);
    f << "symbol,surfaces,mae,satisfaction" << (mask ? ",mae_known,mae_unknown" : "") << '\n';
    auto write = [&](const std::string& sym, const Acc& a) {
        f << sym << ',' << a.n << ',' << format_double(a.rep.mae) << ',' << format_double(a.rep.rate);
        if (mask) {
            f << ',' << format_double(a.known / static_cast<double>(a.n)) << ','
              << format_double(a.unknown / static_cast<double>(a.n));
        }
        f << '\n';
    };
    for (const auto& [sym, a] : per) {
        if (sym != "ALL") write(sym, a);
    }
    write("ALL", per["ALL"]);
    m.inputs = {{"truth", o.truth}, {"pred", o.pred}};
    m.outputs = {{"table", o.out}};
    m.config = {{"thresholds", o.thresholds}, {"known_terms", o.terms}, {"known_moneyness", o.moneyness}};
    out << "satisfaction " << per["ALL"].rep.rate << " over " << matched << " surfaces\n";
    return 0;
}

int cmd_serve(const ServeOpts& o, std::ostream& out) {
    if (o.port < 0 || o.port > 65535) throw ValidationError("--port must be in 0..65535");
    Service service(load_model(o.model), thresholds_from(o.thresholds));
    out << "serving " << o.model << " on http://" << o.host << ':' << o.port << std::endl;
    serve_http(service, o.host, o.port);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Implied-volatility surface encoder toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", VOLENC_VERSION);

    SynthOpts so;
    auto* synth = app.add_subcommand("synth-data", "Generate a synthetic index + stocks corpus and prices");
    synth->add_option("--seed", so.seed, "Generator seed")->capture_default_str();
    synth->add_option("--n-stocks", so.n_stocks, "Number of stocks besides the index")->capture_default_str();
    synth->add_option("--n-days", so.n_days, "Business days to generate")->capture_default_str()->check(CLI::Range(25, 100000));
    synth->add_option("--stress-shift", so.stress_shift, "Index level-factor shift inside the stress window")->capture_default_str();
    synth->add_option("--noise-sd", so.noise_sd, "Per-point observation noise (vol units)")->capture_default_str()->check(CLI::NonNegativeNumber);
    synth->add_option("--out", so.out, "Corpus CSV to write")->required();
    synth->add_option("--prices", so.prices, "Price CSV to write (default: <out>.prices.csv)");

    TrainOpts to;
    auto* trn = app.add_subcommand("train", "Train a (PCA-)VAE on the corpus training split");
    trn->add_option("--corpus", to.corpus, "Corpus CSV")->required()->check(CLI::ExistingFile);
    trn->add_option("--out", to.out, "Checkpoint to write")->required();
    trn->add_option("--history", to.history, "Loss-history CSV (default: <out>.history.csv)");
    trn->add_option("--split-date", to.split, "First test date (default: last 20% of dates)");
    trn->add_option("--epochs", to.epochs)->capture_default_str();
    trn->add_option("--batch-size", to.batch_size)->capture_default_str();
    trn->add_option("--lr", to.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    trn->add_option("--latent-dim", to.latent_dim)->capture_default_str();
    trn->add_option("--lambda-kl", to.lambda_kl)->capture_default_str()->check(CLI::NonNegativeNumber);
    trn->add_option("--lambda-cov", to.lambda_cov, "0 trains the classic VAE")->capture_default_str()->check(CLI::NonNegativeNumber);
    trn->add_option("--cov-penalty", to.cov_penalty, "absolute, squared or signed")
        ->capture_default_str()
        ->check(CLI::IsMember({"absolute", "squared", "signed"}));
    trn->add_option("--seed", to.seed)->capture_default_str();

    auto add_model = [](CLI::App* sub, std::string& target) {
        sub->add_option("--model", target, "Checkpoint (default: $VOLENC_MODEL)")
            ->envname("VOLENC_MODEL")
            ->required()
            ->check(CLI::ExistingFile);
    };
    auto add_corpus = [](CLI::App* sub, ModelCorpusOpts& o) {
        sub->add_option("--corpus", o.corpus, "Corpus CSV")->required()->check(CLI::ExistingFile);
        sub->add_option("--split-date", o.split, "First test date (default: last 20% of dates)");
    };

    ModelCorpusOpts eo;
    auto* enc = app.add_subcommand("encode", "Encode every corpus surface to (mu, log sigma)");
    add_model(enc, eo.model);
    add_corpus(enc, eo);
    enc->add_option("--out", eo.out, "Encodings CSV")->required();

    ModelCorpusOpts dop;
    auto* diag = app.add_subcommand("diagnose", "Latent correlations, factor roles and stress summary");
    add_model(diag, dop.model);
    add_corpus(diag, dop);
    diag->add_option("--out-dir", dop.out, "Existing directory for the reports")->required();

    SweepOpts swo;
    auto* sweep = app.add_subcommand("sweep", "Decode a one-latent sweep around a base code");
    add_model(sweep, swo.model);
    sweep->add_option("--dim", swo.dim, "Latent to sweep, 1-based")->capture_default_str();
    sweep->add_option("--lo", swo.lo)->capture_default_str();
    sweep->add_option("--hi", swo.hi)->capture_default_str();
    sweep->add_option("--steps", swo.steps)->capture_default_str();
    sweep->add_option("--base", swo.base, "Base code, comma separated (default: zeros)")->delimiter(',');
    sweep->add_option("--values", swo.values, "Explicit sweep values, overriding lo/hi/steps")->delimiter(',');
    sweep->add_option("--date", swo.date, "Date stamped on the output records")->capture_default_str();
    sweep->add_option("--out", swo.out, "Corpus-format CSV")->required();

    ExtrapOpts xo;
    auto* ext = app.add_subcommand("extrapolate", "Complete test surfaces from a known subset");
    add_model(ext, xo.model);
    add_corpus(ext, xo);
    ext->add_option("--known-terms", xo.terms)->delimiter(',')->capture_default_str();
    ext->add_option("--known-moneyness", xo.moneyness)->delimiter(',')->capture_default_str();
    ext->add_option("--starts", xo.starts)->capture_default_str();
    ext->add_option("--seed", xo.seed)->capture_default_str();
    ext->add_flag("--all-records", xo.all_records, "Use every record instead of the test split");
    ext->add_option("--thresholds", xo.thresholds, "3x3 threshold CSV override")->check(CLI::ExistingFile);
    ext->add_option("--out", xo.out, "Per-symbol table CSV")->required();

    InferOpts io;
    auto* inf = app.add_subcommand("infer-stock", "Walk-forward stock surface inference from the index");
    add_model(inf, io.model);
    add_corpus(inf, io);
    inf->add_option("--prices", io.prices, "Price CSV")->required()->check(CLI::ExistingFile);
    inf->add_option("--window", io.window, "Regression window (trading days)")->capture_default_str();
    inf->add_option("--rv-window", io.rv_window, "Realised-vol window (trading days)")->capture_default_str();
    inf->add_option("--index", io.index, "Index symbol")->capture_default_str();
    inf->add_option("--thresholds", io.thresholds, "3x3 threshold CSV override")->check(CLI::ExistingFile);
    inf->add_option("--out", io.out, "Per-stock table CSV")->required();

    EvalOpts vo;
    auto* ev = app.add_subcommand("evaluate", "Score predicted surfaces against true ones");
    ev->add_option("--truth", vo.truth, "Corpus CSV of true surfaces")->required()->check(CLI::ExistingFile);
    ev->add_option("--pred", vo.pred, "Corpus CSV of predicted surfaces")->required()->check(CLI::ExistingFile);
    ev->add_option("--known-terms", vo.terms, "With --known-moneyness, report split MAEs")->delimiter(',');
    ev->add_option("--known-moneyness", vo.moneyness)->delimiter(',');
    ev->add_option("--thresholds", vo.thresholds, "3x3 threshold CSV override")->check(CLI::ExistingFile);
    ev->add_option("--out", vo.out, "Per-symbol table CSV")->required();

    ServeOpts sv;
    auto* srv = app.add_subcommand("serve", "Serve the model over HTTP/JSON");
    add_model(srv, sv.model);
    srv->add_option("--host", sv.host)->capture_default_str();
    srv->add_option("--port", sv.port)->capture_default_str();
    srv->add_option("--thresholds", sv.thresholds, "3x3 threshold CSV override")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << VOLENC_VERSION << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    Manifest m;
    m.argv.assign(argv, argv + argc);
    const std::string started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&](const std::string& primary) {
        m.write(primary, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), started);
    };
    try {
        auto* sub = app.get_subcommands().front();
        m.command = sub->get_name();
        int rc = 0;
        if (sub == synth) {
            rc = cmd_synth(so, m, out);
            finish(so.out);
        } else if (sub == trn) {
            rc = cmd_train(to, m, out);
            finish(to.out);
        } else if (sub == enc) {
            rc = cmd_encode(eo, m, out);
            finish(eo.out);
        } else if (sub == diag) {
            rc = cmd_diagnose(dop, m, out);
            finish((fs::path(dop.out) / "diagnostics.json").string());
        } else if (sub == sweep) {
            rc = cmd_sweep(swo, m, out);
            finish(swo.out);
        } else if (sub == ext) {
            rc = cmd_extrapolate(xo, m, out);
            finish(xo.out);
        } else if (sub == inf) {
            rc = cmd_infer(io, m, out);
            finish(io.out);
        } else if (sub == ev) {
            rc = cmd_evaluate(vo, m, out);
            finish(vo.out);
        } else if (sub == srv) {
            rc = cmd_serve(sv, out);
        }
        return rc;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace volenc

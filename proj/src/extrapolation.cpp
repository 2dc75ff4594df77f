#include "volenc/extrapolation.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>

#include "volenc/error.hpp"

namespace volenc {

PartialSurface PartialSurface::from_surface(const SurfaceGrid& s, const std::vector<bool>& mask) {
    if (mask.size() != s.vols().size()) {
        throw ValidationError("mask has " + std::to_string(mask.size()) + " entries, grid has " +
                              std::to_string(s.vols().size()));
    }
    PartialSurface p{s.grid(), mask, {}};
    for (std::size_t k = 0; k < mask.size(); ++k) {
        if (mask[k]) p.values.push_back(s.vols()[k]);
    }
    return p;
}

void PartialSurface::validate() const {
    if (mask.size() != grid.size()) {
        throw ValidationError("mask has " + std::to_string(mask.size()) + " entries, grid has " +
                              std::to_string(grid.size()));
    }
    const std::size_t n = count_true(mask);
    if (n == 0) throw ValidationError("partial surface has no known points");
    if (values.size() != n) {
        throw ValidationError("partial surface has " + std::to_string(values.size()) + " values for " +
                              std::to_string(n) + " known points");
    }
    for (double v : values) {
        if (!std::isfinite(v) || v <= 0.0) throw ValidationError("known vols must be finite and > 0");
    }
}

double extrapolation_objective(const VaeModel& model, const PartialSurface& partial, const Eigen::VectorXd& z,
                               Eigen::VectorXd* grad, double huber_delta) {
    const auto cache = nn::forward(model.decoder, Eigen::MatrixXd(z));
    const auto& out = cache.output;
    const double inv_n = 1.0 / static_cast<double>(partial.values.size());
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(out.rows(), 1);
    double f = 0.0;
    std::size_t v = 0;
    for (std::size_t k = 0; k < partial.mask.size(); ++k) {
        if (!partial.mask[k]) continue;
        const double r = out(static_cast<Eigen::Index>(k), 0) - partial.values[v++];
        const double a = std::abs(r);
        if (a <= huber_delta) {
            f += 0.5 * r * r / huber_delta;
            upstream(static_cast<Eigen::Index>(k), 0) = r / huber_delta * inv_n;
        } else {
            f += a - 0.5 * huber_delta;
            upstream(static_cast<Eigen::Index>(k), 0) = (r > 0.0 ? 1.0 : -1.0) * inv_n;
        }
    }
    if (grad) *grad = nn::backward(model.decoder, upstream, cache).input.col(0);
    return f * inv_n;
}

ExtrapolationResult extrapolate(const VaeModel& model, const PartialSurface& partial,
                                const ExtrapolationOptions& opts) {
    partial.validate();
    if (!(partial.grid == model.grid)) throw ValidationError("partial surface grid does not match the model grid");
    if (opts.starts < 1) throw ValidationError("extrapolation needs at least one start");

    const Objective f = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
        return extrapolation_objective(model, partial, z, &g, opts.huber_delta);
    };
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal;
    std::optional<LbfgsResult> best;
    int best_start = 0;
    for (int s = 0; s < opts.starts; ++s) {
        Eigen::VectorXd z0 = Eigen::VectorXd::Zero(model.latent_dim);
        if (s > 0) {
            for (Eigen::Index k = 0; k < z0.size(); ++k) z0(k) = normal(rng);
        }
        LbfgsResult r;
        try {
            r = lbfgs_minimize(f, z0, opts.lbfgs);
        } catch (const ValidationError&) {
            continue;  // non-finite at this start
        }
        if (!best || r.value < best->value) {
            best = std::move(r);
            best_start = s;
        }
    }
    if (!best) throw Error("extrapolation objective is not finite at any start");

    ExtrapolationResult res{best->x, decode(model, best->x), best->value, 0.0, best->iterations, best->converged,
                            best_start};
    std::size_t v = 0;
    for (std::size_t k = 0; k < partial.mask.size(); ++k) {
        if (partial.mask[k]) res.mae_known += std::abs(res.surface.vols()[k] - partial.values[v++]);
    }
    res.mae_known /= static_cast<double>(partial.values.size());
    return res;
}

ExtrapolationTable evaluate_extrapolation(const VaeModel& model, std::span<const SurfaceRecord* const> records,
                                          const std::vector<bool>& mask, const ExtrapolationOptions& opts,
                                          const ThresholdTable& thresholds) {
    if (records.empty()) throw ValidationError("no surfaces to extrapolate");
    struct Acc {
        std::size_t n = 0;
        double known = 0.0, unknown = 0.0;
        EvalReport sat;
    };
    std::map<std::string, Acc> per_symbol;
    Acc all;
    const bool has_unknown = count_true(mask) < mask.size();
    for (const auto* rec : records) {
        const auto res = extrapolate(model, PartialSurface::from_surface(rec->surface, mask), opts);
        const auto split = mae_split(rec->surface, res.surface, mask);
        const auto rep = satisfaction(rec->surface, res.surface, thresholds);
        for (Acc* a : {&per_symbol[rec->symbol], &all}) {
            ++a->n;
            a->known += split.inside.value_or(0.0);
            a->unknown += split.outside.value_or(0.0);
            accumulate(a->sat, rep);
        }
    }
    auto row = [&](const std::string& sym, const Acc& a) {
        const double n = static_cast<double>(a.n);
        return ExtrapolationRow{sym, a.n, a.known / n, has_unknown ? a.unknown / n : std::nan(""), a.sat.rate};
    };
    ExtrapolationTable t;
    for (const auto& [sym, a] : per_symbol) t.rows.push_back(row(sym, a));
    t.overall = row("ALL", all);
    return t;
}

void save_extrapolation_table(const ExtrapolationTable& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << "symbol,surfaces,mae_known,mae_unknown,satisfaction\n";
    auto write = [&](const ExtrapolationRow& r) {
        out << r.symbol << ',' << r.surfaces << ',' << format_double(r.mae_known) << ','
            << (std::isnan(r.mae_unknown) ? std::string() : format_double(r.mae_unknown)) << ','
            << format_double(r.satisfaction) << '\n';
    };
    for (const auto& r : t.rows) write(r);
    write(t.overall);
}

}  // namespace volenc

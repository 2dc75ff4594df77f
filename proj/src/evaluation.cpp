#include "volenc/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "volenc/error.hpp"

namespace volenc {

namespace {

std::size_t term_bucket(double tau) { return tau <= 3.0 ? 0 : (tau <= 9.0 ? 1 : 2); }
std::size_t moneyness_bucket(double m) { return m <= 0.9 ? 0 : (m <= 1.05 ? 1 : 2); }

void require_same_grid(const SurfaceGrid& a, const SurfaceGrid& b) {
    if (!(a.grid() == b.grid())) throw ValidationError("surfaces are on different grids");
}

}  // namespace

ThresholdTable ThresholdTable::canonical() {
    ThresholdTable t;
    t.values = {{{0.0149, 0.0183, 0.0169}, {0.0088, 0.0118, 0.0105}, {0.0090, 0.0098, 0.0109}}};
    return t;
}

double ThresholdTable::threshold_for(double term_months, double moneyness) const {
    if (!(term_months > 0.0) || !(moneyness > 0.0)) {
        throw ValidationError("threshold lookup needs positive term and moneyness");
    }
    return values[term_bucket(term_months)][moneyness_bucket(moneyness)];
}

double threshold_for(double term_months, double moneyness) {
    static const ThresholdTable table = ThresholdTable::canonical();
    return table.threshold_for(term_months, moneyness);
}

ThresholdTable load_thresholds(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open threshold file '" + path.string() + "'");
    ThresholdTable t;
    std::size_t row = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (row == 3) throw SchemaError("threshold file has more than 3 rows");
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col == 3) throw SchemaError("threshold row " + std::to_string(row + 1) + " has more than 3 values");
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || !std::isfinite(v) || v <= 0.0) {
                throw SchemaError("threshold row " + std::to_string(row + 1) + ": bad value '" + cell + "'");
            }
            t.values[row][col++] = v;
        }
        if (col != 3) throw SchemaError("threshold row " + std::to_string(row + 1) + " needs 3 values");
        ++row;
    }
    if (row != 3) throw SchemaError("threshold file needs 3 rows, found " + std::to_string(row));
    return t;
}

EvalReport satisfaction(const SurfaceGrid& truth, const SurfaceGrid& pred, const ThresholdTable& table) {
    require_same_grid(truth, pred);
    const auto& g = truth.grid();
    EvalReport r;
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < g.n_terms(); ++i) {
        for (std::size_t j = 0; j < g.n_moneyness(); ++j) {
            const double err = std::abs(truth.at(i, j) - pred.at(i, j));
            abs_sum += err;
            if (err < table.threshold_for(g.terms[i], g.moneyness[j])) ++r.satisfactory;
            ++r.points;
        }
    }
    r.rate = static_cast<double>(r.satisfactory) / static_cast<double>(r.points);
    r.mae = abs_sum / static_cast<double>(r.points);
    return r;
}

void accumulate(EvalReport& total, const EvalReport& part) {
    const std::size_t n = total.points + part.points;
    if (n == 0) return;
    total.mae = (total.mae * static_cast<double>(total.points) + part.mae * static_cast<double>(part.points)) /
                static_cast<double>(n);
    total.points = n;
    total.satisfactory += part.satisfactory;
    total.rate = static_cast<double>(total.satisfactory) / static_cast<double>(n);
}

MaeSplit mae_split(const SurfaceGrid& truth, const SurfaceGrid& pred, const std::vector<bool>& mask) {
    require_same_grid(truth, pred);
    if (mask.size() != truth.vols().size()) {
        throw ValidationError("mask has " + std::to_string(mask.size()) + " entries, grid has " +
                              std::to_string(truth.vols().size()));
    }
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t k = 0; k < mask.size(); ++k) {
        const double err = std::abs(truth.vols()[k] - pred.vols()[k]);
        if (mask[k]) {
            in_sum += err;
            ++n_in;
        } else {
            out_sum += err;
            ++n_out;
        }
    }
    MaeSplit s;
    if (n_in) s.inside = in_sum / static_cast<double>(n_in);
    if (n_out) s.outside = out_sum / static_cast<double>(n_out);
    return s;
}

}  // namespace volenc

#include "volenc/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include "volenc/error.hpp"

namespace volenc {

namespace {

constexpr std::string_view kCorpusHeader = "date,symbol,term_months,moneyness,implied_vol,stress";
constexpr std::string_view kPriceHeader = "date,symbol,close";

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view text, std::size_t line_no, const char* column) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        std::ostringstream os;
        os << "line " << line_no << ": column '" << column << "' is not a number: '" << text << "'";
        throw SchemaError(os.str());
    }
    return v;
}

struct RawPoint {
    double term;
    double moneyness;
    double vol;
    bool stress;
    std::size_t line;
};

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

Corpus::Corpus(std::vector<SurfaceRecord> records, Date split_date)
    : records_(std::move(records)), split_date_(split_date) {
    if (records_.empty()) throw ValidationError("corpus has no records");
    std::sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) {
        return std::tie(a.date, a.symbol) < std::tie(b.date, b.symbol);
    });
    const GridSpec& g = records_.front().surface.grid();
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (!(r.surface.grid() == g)) {
            throw ValidationError("record " + r.date.to_string() + "," + r.symbol +
                                  " uses a different grid");
        }
        if (!index_.emplace(std::make_pair(r.date, r.symbol), i).second) {
            throw ValidationError("duplicate record " + r.date.to_string() + "," + r.symbol);
        }
    }
}

std::vector<const SurfaceRecord*> Corpus::train() const {
    std::vector<const SurfaceRecord*> out;
    for (const auto& r : records_) {
        if (r.date < split_date_) out.push_back(&r);
    }
    return out;
}

std::vector<const SurfaceRecord*> Corpus::test() const {
    std::vector<const SurfaceRecord*> out;
    for (const auto& r : records_) {
        if (!(r.date < split_date_)) out.push_back(&r);
    }
    return out;
}

std::vector<std::string> Corpus::symbols() const {
    std::set<std::string> s;
    for (const auto& r : records_) s.insert(r.symbol);
    return {s.begin(), s.end()};
}

std::vector<Date> Corpus::dates() const {
    std::vector<Date> d;
    for (const auto& r : records_) {
        if (d.empty() || d.back() != r.date) d.push_back(r.date);
    }
    return d;
}

const SurfaceRecord* Corpus::find(Date date, const std::string& symbol) const {
    auto it = index_.find({date, symbol});
    return it == index_.end() ? nullptr : &records_[it->second];
}

Date default_split_date(const std::vector<Date>& dates) {
    if (dates.empty()) throw ValidationError("no dates to split");
    const std::size_t k = dates.size() - dates.size() / 5;
    return dates[std::min(k, dates.size() - 1)];
}

Corpus read_corpus(std::istream& in, std::optional<Date> split_date,
                   std::optional<GridSpec> expected_grid) {
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != kCorpusHeader) {
        throw SchemaError("corpus header must be '" + std::string(kCorpusHeader) + "'");
    }
    std::map<std::pair<Date, std::string>, std::vector<RawPoint>> groups;
    std::set<double> terms, money;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = strip_cr(line);
        if (text.empty()) continue;
        const auto f = split_fields(text);
        if (f.size() != 6) {
            throw SchemaError("line " + std::to_string(line_no) + ": expected 6 fields");
        }
        const Date date = Date::parse(f[0]);
        if (f[1].empty()) throw SchemaError("line " + std::to_string(line_no) + ": empty symbol");
        RawPoint p{parse_double(f[2], line_no, "term_months"), parse_double(f[3], line_no, "moneyness"),
                   parse_double(f[4], line_no, "implied_vol"), false, line_no};
        if (f[5] == "1") {
            p.stress = true;
        } else if (f[5] != "0") {
            throw SchemaError("line " + std::to_string(line_no) + ": stress must be 0 or 1");
        }
        if (!std::isfinite(p.vol) || p.vol <= 0.0) {
            std::ostringstream os;
            os << "line " << line_no << ": implied_vol " << format_double(p.vol)
               << " must be finite and > 0";
            throw ValidationError(os.str());
        }
        terms.insert(p.term);
        money.insert(p.moneyness);
        groups[{date, std::string(f[1])}].push_back(p);
    }
    if (groups.empty()) throw SchemaError("corpus has no data rows");

    GridSpec grid = expected_grid ? *expected_grid
                                  : GridSpec{{terms.begin(), terms.end()}, {money.begin(), money.end()}};
    grid.validate();

    std::vector<SurfaceRecord> records;
    records.reserve(groups.size());
    for (auto& [key, points] : groups) {
        std::vector<double> vols(grid.size(), 0.0);
        std::vector<bool> seen(grid.size(), false);
        const bool stress = points.front().stress;
        for (const auto& p : points) {
            std::size_t ti = 0, mi = 0;
            try {
                ti = grid.term_index(p.term);
                mi = grid.moneyness_index(p.moneyness);
            } catch (const ValidationError& e) {
                throw SchemaError("line " + std::to_string(p.line) + ": " + e.what());
            }
            const auto k = grid.index(ti, mi);
            if (seen[k]) {
                throw SchemaError("duplicate grid point for " + key.first.to_string() + "," +
                                  key.second + " term " + format_double(p.term) + " moneyness " +
                                  format_double(p.moneyness));
            }
            if (p.stress != stress) {
                throw SchemaError("inconsistent stress flag for " + key.first.to_string() + "," +
                                  key.second);
            }
            seen[k] = true;
            vols[k] = p.vol;
        }
        for (std::size_t k = 0; k < grid.size(); ++k) {
            if (!seen[k]) {
                throw SchemaError("missing grid point for " + key.first.to_string() + "," + key.second +
                                  " term " + format_double(grid.terms[k / grid.n_moneyness()]) +
                                  " moneyness " + format_double(grid.moneyness[k % grid.n_moneyness()]));
            }
        }
        records.push_back({key.first, key.second, SurfaceGrid(grid, std::move(vols)), stress});
    }

    Date split;
    if (split_date) {
        split = *split_date;
    } else {
        std::vector<Date> dates;
        for (const auto& [key, _] : groups) {
            if (dates.empty() || dates.back() != key.first) dates.push_back(key.first);
        }
        split = default_split_date(dates);
    }
    return Corpus(std::move(records), split);
}

Corpus load_corpus(const std::filesystem::path& path, std::optional<Date> split_date,
                   std::optional<GridSpec> expected_grid) {
    auto in = open_input(path);
    return read_corpus(in, split_date, std::move(expected_grid));
}

void write_corpus(std::ostream& out, const std::vector<SurfaceRecord>& records) {
    out << kCorpusHeader << '\n';
    for (const auto& r : records) {
        const auto& g = r.surface.grid();
        const std::string prefix = r.date.to_string() + "," + r.symbol + ",";
        for (std::size_t i = 0; i < g.n_terms(); ++i) {
            for (std::size_t j = 0; j < g.n_moneyness(); ++j) {
                out << prefix << format_double(g.terms[i]) << ',' << format_double(g.moneyness[j])
                    << ',' << format_double(r.surface.at(i, j)) << ',' << (r.stress ? '1' : '0')
                    << '\n';
            }
        }
    }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    auto out = open_output(path);
    write_corpus(out, corpus.records());
}

PriceTable load_prices(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != kPriceHeader) {
        throw SchemaError("price header must be '" + std::string(kPriceHeader) + "'");
    }
    PriceTable table;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = strip_cr(line);
        if (text.empty()) continue;
        const auto f = split_fields(text);
        if (f.size() != 3) {
            throw SchemaError("line " + std::to_string(line_no) + ": expected 3 fields");
        }
        const double close = parse_double(f[2], line_no, "close");
        if (!(close > 0.0) || !std::isfinite(close)) {
            throw ValidationError("line " + std::to_string(line_no) + ": close must be > 0");
        }
        table[std::string(f[1])].push_back({Date::parse(f[0]), close});
    }
    for (auto& [sym, series] : table) {
        std::sort(series.begin(), series.end(),
                  [](const auto& a, const auto& b) { return a.date < b.date; });
        for (std::size_t i = 1; i < series.size(); ++i) {
            if (series[i].date == series[i - 1].date) {
                throw SchemaError("duplicate price for " + sym + " on " + series[i].date.to_string());
            }
        }
    }
    return table;
}

void save_prices(const PriceTable& prices, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << kPriceHeader << '\n';
    // Date-major order so the file reads like a daily feed.
    std::vector<std::tuple<Date, std::string, double>> rows;
    for (const auto& [sym, series] : prices) {
        for (const auto& p : series) rows.emplace_back(p.date, sym, p.close);
    }
    std::sort(rows.begin(), rows.end());
    for (const auto& [d, sym, close] : rows) {
        out << d.to_string() << ',' << sym << ',' << format_double(close) << '\n';
    }
}

}  // namespace volenc

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "volenc/date.hpp"
#include "volenc/grid.hpp"

namespace volenc {

struct SurfaceRecord {
    Date date;
    std::string symbol;
    SurfaceGrid surface;
    bool stress = false;
};

/// Dated, symbol-tagged surfaces sharing one grid. Records are kept sorted by
/// (date, symbol) and that pair is unique. Immutable once built.
class Corpus {
public:
    /// Throws ValidationError on duplicate (date, symbol), mixed grids or an
    /// empty record set.
    Corpus(std::vector<SurfaceRecord> records, Date split_date);

    const std::vector<SurfaceRecord>& records() const { return records_; }
    const GridSpec& grid() const { return records_.front().surface.grid(); }
    Date split_date() const { return split_date_; }
    std::size_t size() const { return records_.size(); }

    /// Records dated strictly before the split date.
    std::vector<const SurfaceRecord*> train() const;
    /// Records dated on or after the split date.
    std::vector<const SurfaceRecord*> test() const;

    std::vector<std::string> symbols() const;
    std::vector<Date> dates() const;
    const SurfaceRecord* find(Date date, const std::string& symbol) const;

private:
    std::vector<SurfaceRecord> records_;
    Date split_date_;
    std::map<std::pair<Date, std::string>, std::size_t> index_;
};

/// Start of the last fifth of the distinct dates: the default train/test
/// boundary when none is given.
Date default_split_date(const std::vector<Date>& sorted_unique_dates);

/// Reads the long-form corpus CSV
/// `date,symbol,term_months,moneyness,implied_vol,stress`.
/// The grid is the union of the term and moneyness values in the file unless
/// `expected_grid` is given. Every (date, symbol) must cover every grid point.
Corpus load_corpus(const std::filesystem::path& path, std::optional<Date> split_date = {},
                   std::optional<GridSpec> expected_grid = {});
Corpus read_corpus(std::istream& in, std::optional<Date> split_date = {},
                   std::optional<GridSpec> expected_grid = {});

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
void write_corpus(std::ostream& out, const std::vector<SurfaceRecord>& records);

/// Close prices keyed by symbol, each series sorted by date.
struct PricePoint {
    Date date;
    double close = 0.0;
};
using PriceTable = std::map<std::string, std::vector<PricePoint>>;

PriceTable load_prices(const std::filesystem::path& path);
void save_prices(const PriceTable& prices, const std::filesystem::path& path);

/// Shortest round-trip decimal text for a double.
std::string format_double(double value);

}  // namespace volenc

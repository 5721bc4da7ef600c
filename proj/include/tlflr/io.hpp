#pragma once

// File formats: curve CSV (id,response,<grid points...>), stock price CSV
// (ticker,day,price,month) and the stock-to-curve transform.

#include "tlflr/funcore.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tlflr {

/// Header: id,response,t_0,...,t_{G-1}; one observation per row. The grid
/// points must be uniform on [0, 1] within 1e-9.
FunctionalDataset read_curves_csv(std::istream& in, std::string label = {});
FunctionalDataset load_curves_csv(const std::filesystem::path& path);

/// Writes shortest round-trip decimal representations, so reading the file
/// back reproduces every value bit for bit.
void write_curves_csv(std::ostream& out, const FunctionalDataset& data);
void save_curves_csv(const std::filesystem::path& path, const FunctionalDataset& data);

struct StockSeries {
    std::vector<double> first_month;  // ordered by trading day
    std::vector<double> second_month;
};

/// ticker -> prices, from rows ticker,day,price,month with month in {1, 2}.
std::map<std::string, StockSeries> read_stock_csv(std::istream& in);

/// X(t) = (v(t) - v(t_0)) / v(t_0) with trading days mapped linearly onto
/// [0, 1] and interpolated onto `grid`; Y = (v'(t_T) - v'(t_0)) / v'(t_0).
std::pair<GridFunction, double> stock_transform(std::span<const double> first_month,
                                                std::span<const double> second_month, const Grid& grid);

/// One curve per ticker (sorted by ticker).
FunctionalDataset stock_dataset(const std::map<std::string, StockSeries>& stocks, const Grid& grid,
                                std::string label = {});

/// Either format, detected from the header: stock files start with `ticker`.
FunctionalDataset load_sector(const std::filesystem::path& path, const Grid& grid);

/// Shortest decimal that parses back to the same double.
std::string format_double(double value);

} // namespace tlflr

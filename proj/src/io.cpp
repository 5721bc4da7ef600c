#include "tlflr/io.hpp"

#include "tlflr/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace tlflr {

namespace {

constexpr double kGridTolerance = 1e-9;

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return fields;
}

double parse_number(std::string_view field, std::size_t row, std::size_t column)
{
    double value = 0.0;
    if (!field.empty() && field.front() == '+')
        field.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value))
        throw ParseError("non-numeric cell '" + std::string(field) + "'", row, column);
    return value;
}

bool next_line(std::istream& in, std::string& line, std::size_t& row)
{
    while (std::getline(in, line)) {
        ++row;
        if (!trim(line).empty())
            return true;
    }
    return false;
}

std::ifstream open_input(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    return in;
}

} // namespace

std::string format_double(double value)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{})
        throw InvariantViolation("format_double: conversion failed");
    return {buf, ptr};
}

FunctionalDataset read_curves_csv(std::istream& in, std::string label)
{
    std::string line;
    std::size_t row = 0;
    if (!next_line(in, line, row))
        throw ParseError("empty file, expected a header row", 1, 1);

    const auto header = split_fields(line);
    if (header.size() < 4 || header[0] != "id" || header[1] != "response")
        throw ParseError("header must be id,response followed by at least 2 grid points", row, 1);
    const std::size_t G = header.size() - 2;
    const Grid grid(G);
    for (std::size_t j = 0; j < G; ++j) {
        const double t = parse_number(header[j + 2], row, j + 3);
        if (std::abs(t - grid.point(j)) > kGridTolerance)
            throw ParseError("grid is not uniform on [0, 1]", row, j + 3);
    }

    std::vector<double> values;
    std::vector<double> responses;
    while (next_line(in, line, row)) {
        const auto fields = split_fields(line);
        if (fields.size() != G + 2)
            throw ParseError("expected " + std::to_string(G + 2) + " cells, found " + std::to_string(fields.size()),
                             row, fields.size());
        responses.push_back(parse_number(fields[1], row, 2));
        for (std::size_t j = 0; j < G; ++j)
            values.push_back(parse_number(fields[j + 2], row, j + 3));
    }
    if (responses.empty())
        throw DomainError("curve file has a header but no observations");

    const auto n = static_cast<Eigen::Index>(responses.size());
    Eigen::MatrixXd curves = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), n, static_cast<Eigen::Index>(G));
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(responses.data(), n);
    return {grid, std::move(curves), std::move(y), std::move(label)};
}

FunctionalDataset load_curves_csv(const std::filesystem::path& path)
{
    auto in = open_input(path);
    return read_curves_csv(in, path.stem().string());
}

void write_curves_csv(std::ostream& out, const FunctionalDataset& data)
{
    const Grid& grid = data.grid();
    const Eigen::VectorXd t = grid.points();
    out << "id,response";
    for (Eigen::Index j = 0; j < t.size(); ++j)
        out << ',' << format_double(t(j));
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << (i + 1) << ',' << format_double(data.response(i));
        for (Eigen::Index j = 0; j < data.curves().cols(); ++j)
            out << ',' << format_double(data.curves()(static_cast<Eigen::Index>(i), j));
        out << '\n';
    }
}

void save_curves_csv(const std::filesystem::path& path, const FunctionalDataset& data)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    write_curves_csv(out, data);
    if (!out)
        throw DataError("write failed for '" + path.string() + "'");
}

std::map<std::string, StockSeries> read_stock_csv(std::istream& in)
{
    std::string line;
    std::size_t row = 0;
    if (!next_line(in, line, row))
        throw ParseError("empty file, expected a header row", 1, 1);
    const auto header = split_fields(line);
    if (header.size() != 4 || header[0] != "ticker" || header[1] != "day" || header[2] != "price"
        || header[3] != "month")
        throw ParseError("header must be ticker,day,price,month", row, 1);

    std::map<std::string, std::vector<std::pair<double, double>>> first, second;
    while (next_line(in, line, row)) {
        const auto fields = split_fields(line);
        if (fields.size() != 4)
            throw ParseError("expected 4 cells, found " + std::to_string(fields.size()), row, fields.size());
        if (fields[0].empty())
            throw ParseError("empty ticker", row, 1);
        const double day = parse_number(fields[1], row, 2);
        const double price = parse_number(fields[2], row, 3);
        const double month = parse_number(fields[3], row, 4);
        auto& bucket = month == 1.0 ? first : month == 2.0 ? second : throw ParseError("month must be 1 or 2", row, 4);
        bucket[std::string(fields[0])].emplace_back(day, price);
    }

    std::map<std::string, StockSeries> out;
    auto ordered = [](std::vector<std::pair<double, double>> v) {
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<double> prices;
        prices.reserve(v.size());
        for (const auto& [day, price] : v)
            prices.push_back(price);
        return prices;
    };
    for (auto& [ticker, v] : first)
        out[ticker].first_month = ordered(std::move(v));
    for (auto& [ticker, v] : second)
        out[ticker].second_month = ordered(std::move(v));
    return out;
}

std::pair<GridFunction, double> stock_transform(std::span<const double> first_month,
                                                std::span<const double> second_month, const Grid& grid)
{
    if (first_month.empty() || second_month.empty())
        throw DomainError("stock_transform: both months need at least one price");
    const double v0 = first_month.front();
    const double w0 = second_month.front();
    if (v0 == 0.0 || w0 == 0.0)
        throw DomainError("stock_transform: initial price is zero");

    Eigen::VectorXd x(static_cast<Eigen::Index>(grid.size()));
    const std::size_t days = first_month.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double price = v0;
        if (days > 1) {
            const double pos = grid.point(i) * static_cast<double>(days - 1);
            auto lo = static_cast<std::size_t>(std::floor(pos));
            if (lo >= days - 1)
                lo = days - 2;
            const double frac = pos - static_cast<double>(lo);
            price = (1.0 - frac) * first_month[lo] + frac * first_month[lo + 1];
        }
        x(static_cast<Eigen::Index>(i)) = (price - v0) / v0;
    }
    const double y = (second_month.back() - w0) / w0;
    return {GridFunction(grid, std::move(x)), y};
}

FunctionalDataset stock_dataset(const std::map<std::string, StockSeries>& stocks, const Grid& grid, std::string label)
{
    std::vector<std::pair<GridFunction, double>> rows;
    for (const auto& [ticker, series] : stocks) {
        try {
            rows.push_back(stock_transform(series.first_month, series.second_month, grid));
        } catch (const DomainError& e) {
            throw DataError("ticker " + ticker + ": " + e.what());
        }
    }
    if (rows.empty())
        throw DomainError("stock file has no tickers");
    Eigen::MatrixXd curves(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(grid.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        curves.row(static_cast<Eigen::Index>(i)) = rows[i].first.values().transpose();
        y(static_cast<Eigen::Index>(i)) = rows[i].second;
    }
    return {grid, std::move(curves), std::move(y), std::move(label)};
}

FunctionalDataset load_sector(const std::filesystem::path& path, const Grid& grid)
{
    auto in = open_input(path);
    std::string first_line;
    std::getline(in, first_line);
    in.clear();
    in.seekg(0);
    if (trim(first_line).starts_with("ticker"))
        return stock_dataset(read_stock_csv(in), grid, path.stem().string());

    FunctionalDataset data = read_curves_csv(in, path.stem().string());
    if (!(data.grid() == grid)) {
        // Resample onto the common grid.
        Eigen::MatrixXd curves(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(grid.size()));
        for (std::size_t i = 0; i < data.size(); ++i)
            curves.row(static_cast<Eigen::Index>(i)) = data.curve(i).resample(grid).values().transpose();
        return {grid, std::move(curves), data.responses(), data.label()};
    }
    return data;
}

} // namespace tlflr

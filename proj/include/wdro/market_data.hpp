#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wdro/error.hpp"

namespace wdro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Daily adjusted closes, one row per date. Dates are ISO-8601 strings,
/// so lexicographic order is calendar order.
struct PriceSeries {
    std::vector<std::string> dates;
    std::vector<std::string> tickers;
    Matrix prices;                 // T x n, strictly positive
    std::size_t dropped_rows = 0;  // rows removed by the complete-case policy

    std::size_t length() const { return static_cast<std::size_t>(prices.rows()); }
    std::size_t assets() const { return static_cast<std::size_t>(prices.cols()); }
};

/// Simple returns; row i is the observation R_i. `dates[i]` is the date
/// at the end of the return period.
class ReturnsMatrix {
public:
    ReturnsMatrix() = default;

    ReturnsMatrix(Matrix returns, std::vector<std::string> tickers,
                  std::vector<std::string> dates = {})
        : returns_(std::move(returns)), tickers_(std::move(tickers)), dates_(std::move(dates)) {
        if (returns_.rows() < 1 || returns_.cols() < 1)
            throw ArgumentError("ReturnsMatrix needs at least one row and one column");
        if (tickers_.empty()) {
            for (Eigen::Index j = 0; j < returns_.cols(); ++j)
                tickers_.push_back("A" + std::to_string(j + 1));
        }
        if (static_cast<Eigen::Index>(tickers_.size()) != returns_.cols())
            throw ArgumentError("ticker count does not match return columns");
        if (dates_.empty()) {
            for (Eigen::Index i = 0; i < returns_.rows(); ++i)
                dates_.push_back(std::to_string(i + 1));
        }
        if (static_cast<Eigen::Index>(dates_.size()) != returns_.rows())
            throw ArgumentError("date count does not match return rows");
        if ((returns_.array() <= -1.0).any())
            throw ArgumentError("simple returns must exceed -1");
    }

    explicit ReturnsMatrix(Matrix returns) : ReturnsMatrix(std::move(returns), {}, {}) {}

    std::size_t samples() const { return static_cast<std::size_t>(returns_.rows()); }
    std::size_t assets() const { return static_cast<std::size_t>(returns_.cols()); }

    const Matrix& values() const { return returns_; }
    const std::vector<std::string>& tickers() const { return tickers_; }
    const std::vector<std::string>& dates() const { return dates_; }

    auto row(std::size_t i) const { return returns_.row(static_cast<Eigen::Index>(i)); }

    /// Empirical mean return per asset.
    Vector mean() const { return returns_.colwise().mean().transpose(); }

    /// Population (1/N) covariance.
    Matrix covariance() const {
        const Matrix centered = returns_.rowwise() - returns_.colwise().mean();
        return (centered.transpose() * centered) / static_cast<double>(returns_.rows());
    }

    /// Rows [first, first + count).
    ReturnsMatrix slice(std::size_t first, std::size_t count) const {
        if (first + count > samples() || count == 0)
            throw ArgumentError("slice out of range");
        const auto f = static_cast<Eigen::Index>(first);
        const auto c = static_cast<Eigen::Index>(count);
        return ReturnsMatrix(returns_.middleRows(f, c), tickers_,
                             {dates_.begin() + f, dates_.begin() + f + c});
    }

private:
    Matrix returns_;
    std::vector<std::string> tickers_;
    std::vector<std::string> dates_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool is_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (s[i] < '0' || s[i] > '9') return false;
    return true;
}

}  // namespace detail

/// Parse `date,T1,...,Tn` CSV. Rows with a missing, non-numeric-empty or
/// non-positive price are dropped and counted; malformed rows (wrong field
/// count, bad date, unparsable number) raise DataError with the line number.
inline PriceSeries parse_prices(std::istream& in) {
    PriceSeries out;
    std::string line;
    long line_no = 0;
    bool have_header = false;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
            line.erase(0, 3);
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (!have_header) {
            if (fields.size() < 2 || detail::trim(fields[0]) != "date")
                throw DataError("header must be `date,<ticker1>,...`", line_no);
            for (std::size_t j = 1; j < fields.size(); ++j)
                out.tickers.emplace_back(detail::trim(fields[j]));
            have_header = true;
            continue;
        }
        if (fields.size() != out.tickers.size() + 1)
            throw DataError("expected " + std::to_string(out.tickers.size() + 1) + " fields, got " +
                                std::to_string(fields.size()),
                            line_no);
        const std::string date(detail::trim(fields[0]));
        if (!detail::is_iso_date(date)) throw DataError("invalid ISO-8601 date '" + date + "'", line_no);
        if (!out.dates.empty() && date <= out.dates.back())
            throw DataError("dates must be strictly increasing", line_no);

        std::vector<double> values(out.tickers.size());
        bool usable = true;
        for (std::size_t j = 0; j < values.size(); ++j) {
            const auto cell = detail::trim(fields[j + 1]);
            if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "null") {
                usable = false;
                continue;
            }
            if (!detail::parse_double(cell, values[j]))
                throw DataError("cannot parse price '" + std::string(cell) + "'", line_no);
            if (!(values[j] > 0.0)) usable = false;
        }
        if (!usable) {
            ++out.dropped_rows;
            continue;
        }
        out.dates.push_back(date);
        rows.push_back(std::move(values));
    }
    if (rows.size() < 3)
        throw InsufficientDataError("need at least 3 usable price rows, found " + std::to_string(rows.size()));
    out.prices.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.tickers.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < out.tickers.size(); ++j)
            out.prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
}

inline PriceSeries load_prices(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open price file '" + path + "'");
    return parse_prices(in);
}

/// returns[t][j] = p[t+1][j] / p[t][j] - 1.
inline ReturnsMatrix compute_returns(const PriceSeries& p) {
    if (p.length() < 2) throw InsufficientDataError("need at least 2 prices to form a return");
    const auto T = p.prices.rows();
    Matrix r = (p.prices.bottomRows(T - 1).array() / p.prices.topRows(T - 1).array()) - 1.0;
    return ReturnsMatrix(std::move(r), p.tickers, {p.dates.begin() + 1, p.dates.end()});
}

/// In-sample / out-of-sample partition at `in_sample_len`.
inline std::pair<ReturnsMatrix, ReturnsMatrix> split(const ReturnsMatrix& r, std::size_t in_sample_len) {
    if (in_sample_len == 0 || in_sample_len >= r.samples())
        throw ArgumentError("in_sample_len must lie in (0, " + std::to_string(r.samples()) + ")");
    return {r.slice(0, in_sample_len), r.slice(in_sample_len, r.samples() - in_sample_len)};
}

/// Same CSV shape as the price input with returns in place of prices.
inline void write_returns_csv(std::ostream& out, const ReturnsMatrix& r) {
    out << "date";
    for (const auto& t : r.tickers()) out << ',' << t;
    out << '\n';
    std::ostringstream cell;
    for (std::size_t i = 0; i < r.samples(); ++i) {
        out << r.dates()[i];
        for (std::size_t j = 0; j < r.assets(); ++j) {
            cell.str("");
            cell << std::setprecision(17) << r.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            out << ',' << cell.str();
        }
        out << '\n';
    }
}

}  // namespace wdro

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "paano/error.hpp"

namespace paano {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// N x d observations in time order, with optional per-step labels (1 = anomaly)
// and an optional split point: rows [1, split_point] are training data.
struct TimeSeries {
    RowMatrix values;
    std::optional<std::vector<std::uint8_t>> labels;
    std::optional<std::size_t> split_point;

    std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t channels() const { return static_cast<std::size_t>(values.cols()); }
};

// One score per time step; higher means more anomalous.
struct ScoreSeries {
    std::vector<double> scores;
};

namespace detail {

inline std::vector<std::string_view> split_cells(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t begin = 0;
    while (true) {
        const auto comma = line.find(',', begin);
        if (comma == std::string_view::npos) {
            cells.push_back(line.substr(begin));
            break;
        }
        cells.push_back(line.substr(begin, comma - begin));
        begin = comma + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Parses a full cell as a double; returns nullopt on any trailing garbage.
inline std::optional<double> parse_real(std::string_view cell) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    if (cell.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
    return value;
}

inline std::string location(const std::string& path, std::size_t row, std::size_t col) {
    std::ostringstream os;
    os << path << ": row " << row << ", column " << col;
    return os.str();
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

inline std::uint8_t parse_label(std::string_view cell, const std::string& where) {
    const auto v = parse_real(cell);
    if (!v || !(*v == 0.0 || *v == 1.0)) {
        throw DataError("non-binary label '" + std::string(trim(cell)) + "' at " + where);
    }
    return *v == 1.0 ? 1 : 0;
}

}  // namespace detail

// True when the first non-empty line contains a cell that is not a number.
inline bool detect_header(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) return false;
    for (auto cell : detail::split_cells(lines.front())) {
        if (!detail::parse_real(cell)) return true;
    }
    return false;
}

// Loads a comma-separated numeric file. A trailing column whose header is the
// literal "label" becomes the label vector; every other column is a channel.
inline TimeSeries load_csv(const std::string& path, bool has_header) {
    const auto lines = detail::read_lines(path);
    std::size_t first = 0;
    bool label_column = false;
    std::size_t columns = 0;

    if (has_header) {
        if (lines.empty()) throw DataError(path + ": missing header row");
        const auto header = detail::split_cells(lines.front());
        columns = header.size();
        label_column = detail::trim(header.back()) == "label";
        first = 1;
    }
    if (lines.size() <= first) throw DataError(path + ": no data rows");
    if (!has_header) columns = detail::split_cells(lines[first]).size();

    const std::size_t channels = columns - (label_column ? 1 : 0);
    if (channels == 0) throw DataError(path + ": no data columns");

    const std::size_t rows = lines.size() - first;
    TimeSeries series;
    series.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(channels));
    std::vector<std::uint8_t> labels;
    if (label_column) labels.reserve(rows);

    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t file_row = first + r + 1;
        const auto cells = detail::split_cells(lines[first + r]);
        if (cells.size() != columns) {
            std::ostringstream os;
            os << path << ": row " << file_row << " has " << cells.size() << " columns, expected "
               << columns;
            throw DataError(os.str());
        }
        for (std::size_t c = 0; c < channels; ++c) {
            const auto v = detail::parse_real(cells[c]);
            if (!v) {
                throw DataError("non-numeric cell '" + std::string(detail::trim(cells[c])) + "' at " +
                                detail::location(path, file_row, c + 1));
            }
            if (!std::isfinite(*v)) {
                throw DataError("non-finite value at " + detail::location(path, file_row, c + 1));
            }
            series.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
        }
        if (label_column) {
            labels.push_back(detail::parse_label(cells[channels], detail::location(path, file_row, columns)));
        }
    }
    if (label_column) series.labels = std::move(labels);
    return series;
}

inline TimeSeries load_csv(const std::string& path) { return load_csv(path, detect_header(path)); }

// Reads a label file: either a headed CSV with a "label" column, or a single
// unheaded column of 0/1 values.
inline std::vector<std::uint8_t> load_labels(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw DataError(path + ": empty label file");
    std::size_t first = 0;
    std::size_t column = 0;
    const auto header = detail::split_cells(lines.front());
    bool headed = false;
    for (auto cell : header) headed = headed || !detail::parse_real(cell);
    if (headed) {
        bool found = false;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (detail::trim(header[c]) == "label") {
                column = c;
                found = true;
            }
        }
        if (!found) throw DataError(path + ": header has no 'label' column");
        first = 1;
    } else if (header.size() != 1) {
        throw DataError(path + ": unheaded label file must have exactly one column");
    }
    std::vector<std::uint8_t> labels;
    labels.reserve(lines.size() - first);
    for (std::size_t r = first; r < lines.size(); ++r) {
        const auto cells = detail::split_cells(lines[r]);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << path << ": row " << r + 1 << " has " << cells.size() << " columns, expected "
               << header.size();
            throw DataError(os.str());
        }
        labels.push_back(detail::parse_label(cells[column], detail::location(path, r + 1, column + 1)));
    }
    return labels;
}

// Splits at split_point. Labels, when present, are carried to the evaluation
// part only.
inline std::pair<TimeSeries, TimeSeries> split(const TimeSeries& series) {
    if (!series.split_point) throw DataError("split requested but the series has no split point");
    const std::size_t n = series.length();
    const std::size_t cut = *series.split_point;
    if (cut < 1 || cut > n) {
        throw DataError("split point " + std::to_string(cut) + " outside [1, " + std::to_string(n) + "]");
    }
    if (cut == n) throw DataError("split point equals series length; evaluation part is empty");

    TimeSeries train;
    train.values = series.values.topRows(static_cast<Eigen::Index>(cut));
    TimeSeries eval;
    eval.values = series.values.bottomRows(static_cast<Eigen::Index>(n - cut));
    if (series.labels) {
        eval.labels = std::vector<std::uint8_t>(series.labels->begin() + static_cast<std::ptrdiff_t>(cut),
                                                series.labels->end());
    }
    return {std::move(train), std::move(eval)};
}

// Renders a score with at least 9 significant digits and at least 9 decimals.
inline std::string format_score(double v) {
    int decimals = 9;
    if (v != 0.0 && std::isfinite(v)) {
        const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(v))));
        decimals = std::max(9, 8 - magnitude);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline void write_scores(const ScoreSeries& scores, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "t,score\n";
    for (std::size_t t = 0; t < scores.scores.size(); ++t) {
        out << (t + 1) << ',' << format_score(scores.scores[t]) << '\n';
    }
    out.flush();
    if (!out) throw IoError("write failure on '" + path + "'");
}

// Reads a "t,score" file written by write_scores (or any CSV whose last
// column holds the scores).
inline ScoreSeries read_scores(const std::string& path) {
    const auto lines = detail::read_lines(path);
    ScoreSeries out;
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto cells = detail::split_cells(lines[r]);
        const auto v = detail::parse_real(cells.back());
        if (!v) {
            if (r == 0) continue;
            throw DataError("non-numeric score at " + detail::location(path, r + 1, cells.size()));
        }
        if (!std::isfinite(*v)) throw DataError("non-finite score at " + detail::location(path, r + 1, cells.size()));
        out.scores.push_back(*v);
    }
    return out;
}

}  // namespace paano

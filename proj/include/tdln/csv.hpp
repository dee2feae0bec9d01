// Series CSV format: header `label,c0,...,c{d-1}` (or `c0,...` when
// unlabeled), one time step per row, UTF-8, LF, no quoting. Values are
// written with shortest round-trip precision, so write -> read is lossless
// and byte-stable. Parse errors carry file and 1-based line number.
#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tdln/matrix.hpp"
#include "tdln/preprocess.hpp"

namespace tdln {

struct CsvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

[[noreturn]] inline void csv_fail(const std::string& source, std::size_t line,
                                  const std::string& what) {
    throw CsvError(source + ":" + std::to_string(line) + ": " + what);
}

inline void split_fields(const std::string& line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.emplace_back(line.data() + start, line.size() - start);
            return;
        }
        out.emplace_back(line.data() + start, comma - start);
        start = comma + 1;
    }
}

inline double parse_double_field(std::string_view field, const std::string& source,
                                 std::size_t line) {
    double value = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        csv_fail(source, line, "bad numeric field '" + std::string(field) + "'");
    if (!std::isfinite(value))
        csv_fail(source, line, "non-finite value '" + std::string(field) + "'");
    return value;
}

inline long parse_int_field(std::string_view field, const std::string& source,
                            std::size_t line) {
    long value = 0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        csv_fail(source, line, "bad integer field '" + std::string(field) + "'");
    return value;
}

inline void append_double(std::string& out, double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, res.ptr);
}

}  // namespace detail

inline void write_series_csv(std::ostream& os, const RawSeries& series) {
    std::string line = "label";
    for (std::size_t c = 0; c < series.values.cols(); ++c) line += ",c" + std::to_string(c);
    line += "\n";
    os << line;
    for (std::size_t r = 0; r < series.values.rows(); ++r) {
        line = std::to_string(series.labels[r]);
        for (std::size_t c = 0; c < series.values.cols(); ++c) {
            line += ',';
            detail::append_double(line, series.values(r, c));
        }
        line += '\n';
        os << line;
    }
}

inline void write_series_csv(const std::string& path, const RawSeries& series) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CsvError("cannot open '" + path + "' for writing");
    write_series_csv(os, series);
    if (!os) throw CsvError("write to '" + path + "' failed");
}

struct LoadedSeries {
    RawSeries series;  // unlabeled files load with labels all 0, class_count 1
    bool labeled = false;
};

// Accepts both labeled and unlabeled headers.
inline LoadedSeries read_series_csv(std::istream& is, const std::string& source) {
    std::string line;
    if (!std::getline(is, line)) detail::csv_fail(source, 1, "empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string_view> fields;
    detail::split_fields(line, fields);
    const bool labeled = !fields.empty() && fields[0] == "label";
    const std::size_t channel_count = labeled ? fields.size() - 1 : fields.size();
    if (channel_count == 0) detail::csv_fail(source, 1, "header has no channel columns");
    for (std::size_t c = 0; c < channel_count; ++c) {
        const std::string expect = "c" + std::to_string(c);
        if (fields[c + (labeled ? 1 : 0)] != expect)
            detail::csv_fail(source, 1, "expected header column '" + expect + "'");
    }

    LoadedSeries out;
    out.labeled = labeled;
    std::vector<Vector> rows;
    std::vector<int> labels;
    std::size_t line_no = 1;
    int max_label = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        detail::split_fields(line, fields);
        if (fields.size() != channel_count + (labeled ? 1 : 0))
            detail::csv_fail(source, line_no,
                             "expected " + std::to_string(channel_count + (labeled ? 1 : 0)) +
                                 " fields, got " + std::to_string(fields.size()));
        int label = 0;
        if (labeled) {
            const long raw = detail::parse_int_field(fields[0], source, line_no);
            if (raw < 0) detail::csv_fail(source, line_no, "negative label");
            label = static_cast<int>(raw);
        }
        Vector row(channel_count);
        for (std::size_t c = 0; c < channel_count; ++c)
            row[c] = detail::parse_double_field(fields[c + (labeled ? 1 : 0)], source, line_no);
        rows.push_back(std::move(row));
        labels.push_back(label);
        if (label > max_label) max_label = label;
    }
    if (rows.empty()) detail::csv_fail(source, line_no, "no data rows");

    out.series.values = Matrix(rows.size(), channel_count);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < channel_count; ++c) out.series.values(r, c) = rows[r][c];
    out.series.labels = std::move(labels);
    out.series.class_count = max_label + 1;
    return out;
}

inline LoadedSeries read_series_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CsvError("cannot open '" + path + "'");
    return read_series_csv(is, path);
}

struct DropResult {
    RawSeries series;
    std::vector<int> old_to_new;  // -1 for dropped classes
};

// Removes all rows of the given classes and renumbers the survivors densely,
// preserving order. Class 0 cannot be dropped.
inline DropResult drop_classes(const RawSeries& input, const std::vector<int>& drop) {
    for (int d : drop) {
        if (d == 0) throw std::invalid_argument("drop_classes: class 0 cannot be dropped");
        if (d < 0 || d >= input.class_count)
            throw std::invalid_argument("drop_classes: class " + std::to_string(d) +
                                        " out of range");
    }
    std::vector<char> dropped(static_cast<std::size_t>(input.class_count), 0);
    for (int d : drop) dropped[static_cast<std::size_t>(d)] = 1;

    DropResult out;
    out.old_to_new.assign(static_cast<std::size_t>(input.class_count), -1);
    int next = 0;
    for (int c = 0; c < input.class_count; ++c)
        if (!dropped[static_cast<std::size_t>(c)]) out.old_to_new[static_cast<std::size_t>(c)] = next++;

    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < input.values.rows(); ++r)
        if (!dropped[static_cast<std::size_t>(input.labels[r])]) keep.push_back(r);
    if (keep.empty()) throw std::invalid_argument("drop_classes: nothing left after drop");

    out.series.values = Matrix(keep.size(), input.values.cols());
    out.series.labels.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        for (std::size_t c = 0; c < input.values.cols(); ++c)
            out.series.values(i, c) = input.values(keep[i], c);
        out.series.labels[i] = out.old_to_new[static_cast<std::size_t>(input.labels[keep[i]])];
    }
    out.series.class_count = next;
    return out;
}

inline std::string format_drop_mapping(const std::vector<int>& old_to_new) {
    std::string out = "old_label -> new_label\n";
    for (std::size_t c = 0; c < old_to_new.size(); ++c) {
        out += std::to_string(c);
        out += old_to_new[c] < 0 ? " -> dropped\n" : " -> " + std::to_string(old_to_new[c]) + "\n";
    }
    return out;
}

}  // namespace tdln

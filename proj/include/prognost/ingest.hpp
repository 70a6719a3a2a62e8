// SPDX-License-Identifier: Apache-2.0
//
// Ingestion of run-to-failure snapshot directories (one ASCII file per
// recording burst, timestamp in the filename) and generic delimited series.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "prognost/errors.hpp"
#include "prognost/io.hpp"
#include "prognost/parallel.hpp"
#include "prognost/text.hpp"

namespace prognost {

struct SeriesPoint {
    double timestamp = 0.0;
    double value = 0.0;

    bool operator==(const SeriesPoint&) const = default;
};

/// One scalar per snapshot (or CSV row), strictly increasing in time.
/// A NaN value marks a missing observation until `fill_missing` runs.
struct SnapshotSeries {
    std::vector<SeriesPoint> points;
    std::string source_label;
    std::size_t channel = 0;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }

    std::vector<double> values() const
    {
        std::vector<double> out;
        out.reserve(points.size());
        for (const auto& p : points) {
            out.push_back(p.value);
        }
        return out;
    }

    bool all_finite() const
    {
        return std::all_of(points.begin(), points.end(),
                           [](const SeriesPoint& p) { return std::isfinite(p.value); });
    }
};

/// Throws validation error unless timestamps strictly increase and values are finite or NaN.
inline void validate_series(const SnapshotSeries& series)
{
    for (std::size_t i = 0; i < series.points.size(); ++i) {
        const auto& p = series.points[i];
        if (!std::isfinite(p.timestamp)) {
            fail(ErrorKind::validation, "non-finite timestamp at point " + std::to_string(i));
        }
        if (std::isinf(p.value)) {
            fail(ErrorKind::validation, "infinite value at point " + std::to_string(i));
        }
        if (i > 0 && !(series.points[i - 1].timestamp < p.timestamp)) {
            fail(ErrorKind::validation,
                 "timestamps not strictly increasing at point " + std::to_string(i) + " (" +
                     text::format_double(series.points[i - 1].timestamp) + " then " +
                     text::format_double(p.timestamp) + ")");
        }
    }
}

// ---------------------------------------------------------------------------
// Snapshot directory scan
// ---------------------------------------------------------------------------

struct SnapshotFileRef {
    std::filesystem::path path;
    std::int64_t timestamp = 0; ///< seconds since epoch, UTC

    bool operator==(const SnapshotFileRef&) const = default;
};

struct ScanResult {
    std::vector<SnapshotFileRef> files;
    std::vector<std::string> skipped;
};

/// Parses `yyyy.MM.dd.HH.mm.ss` into UTC seconds; anything else yields nothing.
inline std::optional<std::int64_t> parse_snapshot_timestamp(std::string_view name)
{
    const auto fields = text::split_on(name, '.');
    if (fields.size() != 6) {
        return std::nullopt;
    }
    static constexpr std::size_t widths[6] = {4, 2, 2, 2, 2, 2};
    long long v[6] = {};
    for (std::size_t i = 0; i < 6; ++i) {
        if (fields[i].size() != widths[i] ||
            !std::all_of(fields[i].begin(), fields[i].end(),
                         [](char c) { return c >= '0' && c <= '9'; })) {
            return std::nullopt;
        }
        v[i] = *text::parse_int(fields[i]);
    }
    using namespace std::chrono;
    const year_month_day date{year{static_cast<int>(v[0])}, month{static_cast<unsigned>(v[1])},
                              day{static_cast<unsigned>(v[2])}};
    if (!date.ok() || v[3] > 23 || v[4] > 59 || v[5] > 59) {
        return std::nullopt;
    }
    const auto days = sys_days(date).time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + v[3] * 3600 + v[4] * 60 + v[5];
}

/// Lists snapshot files in `dir`, sorted by the timestamp encoded in each name.
/// Entries whose names do not parse are reported in `skipped`.
inline ScanResult scan_ims_directory(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::directory_iterator it(dir, ec);
    if (ec) {
        fail(ErrorKind::io, "cannot read directory '" + dir.string() + "': " + ec.message());
    }
    ScanResult result;
    for (const auto& entry : it) {
        const std::string name = entry.path().filename().string();
        const auto ts = parse_snapshot_timestamp(name);
        if (!ts || !entry.is_regular_file()) {
            result.skipped.push_back(name);
            continue;
        }
        result.files.push_back({entry.path(), *ts});
    }
    if (result.files.empty()) {
        fail(ErrorKind::empty_dataset, "no snapshot files named yyyy.MM.dd.HH.mm.ss in '" +
                                           dir.string() + "'");
    }
    std::sort(result.files.begin(), result.files.end(),
              [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < result.files.size(); ++i) {
        if (result.files[i].timestamp == result.files[i - 1].timestamp) {
            fail(ErrorKind::validation, "duplicate snapshot timestamp: '" +
                                            result.files[i - 1].path.filename().string() +
                                            "' and '" + result.files[i].path.filename().string() +
                                            "'");
        }
    }
    std::sort(result.skipped.begin(), result.skipped.end());
    return result;
}

// ---------------------------------------------------------------------------
// Snapshot file parsing
// ---------------------------------------------------------------------------

inline constexpr std::size_t kExpectedSnapshotRows = 20480;

/// Row-major rows x channels block of raw acceleration samples.
struct SnapshotMatrix {
    std::size_t rows = 0;
    std::size_t channels = 0;
    std::vector<double> samples;
    std::vector<std::string> warnings;

    double at(std::size_t row, std::size_t channel) const { return samples[row * channels + channel]; }
};

inline SnapshotMatrix parse_ims_file(std::string_view content, std::size_t expected_channels)
{
    if (expected_channels == 0) {
        fail(ErrorKind::config, "expected channel count must be positive");
    }
    SnapshotMatrix m;
    m.channels = expected_channels;
    m.samples.reserve(kExpectedSnapshotRows * expected_channels);
    text::LineReader reader(content);
    std::string_view line;
    while (reader.next(line)) {
        const auto tokens = text::split_whitespace(line);
        if (tokens.empty()) {
            continue;
        }
        const auto line_no = std::to_string(reader.line_number());
        if (tokens.size() != expected_channels) {
            fail(ErrorKind::parse, "line " + line_no + ": expected " +
                                       std::to_string(expected_channels) + " columns, found " +
                                       std::to_string(tokens.size()));
        }
        for (const auto tok : tokens) {
            const auto v = text::parse_double(tok);
            if (!v || !std::isfinite(*v)) {
                fail(ErrorKind::parse, "line " + line_no + ": non-numeric token '" +
                                           std::string(tok) + "'");
            }
            m.samples.push_back(*v);
        }
        ++m.rows;
    }
    if (m.rows != kExpectedSnapshotRows) {
        m.warnings.push_back("snapshot has " + std::to_string(m.rows) + " rows, expected " +
                             std::to_string(kExpectedSnapshotRows));
    }
    return m;
}

/// Tab-separated, one row per line, shortest round-trip decimals.
inline std::string serialize_ims_matrix(const SnapshotMatrix& m)
{
    std::string out;
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.channels; ++c) {
            if (c > 0) {
                out += '\t';
            }
            out += text::format_double(m.at(r, c));
        }
        out += '\n';
    }
    return out;
}

enum class Aggregation { rms, mean_abs, peak };

inline std::optional<Aggregation> parse_aggregation(std::string_view s)
{
    if (s == "rms") return Aggregation::rms;
    if (s == "mean_abs") return Aggregation::mean_abs;
    if (s == "peak") return Aggregation::peak;
    return std::nullopt;
}

/// Reduces one channel of a snapshot to a single trend value.
inline double aggregate_snapshot(const SnapshotMatrix& m, std::size_t channel, Aggregation method)
{
    if (m.rows == 0) {
        fail(ErrorKind::domain, "cannot aggregate an empty snapshot");
    }
    if (channel >= m.channels) {
        fail(ErrorKind::index, "channel " + std::to_string(channel) + " out of range (snapshot has " +
                                   std::to_string(m.channels) + " channels)");
    }
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double x = m.at(r, channel);
        switch (method) {
        case Aggregation::rms: acc += x * x; break;
        case Aggregation::mean_abs: acc += std::abs(x); break;
        case Aggregation::peak: acc = std::max(acc, std::abs(x)); break;
        }
    }
    const double n = static_cast<double>(m.rows);
    switch (method) {
    case Aggregation::rms: return std::sqrt(acc / n);
    case Aggregation::mean_abs: return acc / n;
    case Aggregation::peak: return acc;
    }
    return acc;
}

struct ImsLoadResult {
    SnapshotSeries series;
    ScanResult scan;
    std::vector<std::string> warnings;
};

/// Scans, parses (in parallel) and aggregates a snapshot directory.
/// Output order is the timestamp order regardless of worker count.
inline ImsLoadResult load_ims_series(const std::filesystem::path& dir, std::size_t expected_channels,
                                     std::size_t channel, Aggregation method)
{
    if (channel >= expected_channels) {
        fail(ErrorKind::config, "channel " + std::to_string(channel) + " out of range for " +
                                    std::to_string(expected_channels) + " channels");
    }
    ImsLoadResult result;
    result.scan = scan_ims_directory(dir);
    const auto& files = result.scan.files;
    std::vector<double> values(files.size());
    std::vector<std::vector<std::string>> warnings(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        try {
            const auto matrix = parse_ims_file(io::read_file(files[i].path), expected_channels);
            values[i] = aggregate_snapshot(matrix, channel, method);
            warnings[i] = matrix.warnings;
        } catch (const Error& e) {
            throw Error(e.kind(), files[i].path.filename().string() + ": " + e.what());
        }
    });
    result.series.source_label = dir.filename().empty() ? dir.parent_path().filename().string()
                                                        : dir.filename().string();
    result.series.channel = channel;
    result.series.points.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        result.series.points.push_back({static_cast<double>(files[i].timestamp), values[i]});
        for (auto& w : warnings[i]) {
            result.warnings.push_back(files[i].path.filename().string() + ": " + w);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Delimited series import / canonical export
// ---------------------------------------------------------------------------

namespace detail {

inline char detect_delimiter(std::string_view first_line)
{
    for (char c : {',', ';', '\t'}) {
        if (first_line.find(c) != std::string_view::npos) {
            return c;
        }
    }
    return ',';
}

inline bool is_missing_token(std::string_view tok)
{
    return tok.empty() || tok == "NA" || tok == "na" || tok == "NaN" || tok == "nan" || tok == "NAN";
}

} // namespace detail

/// Parses delimited text into a series. A header line is detected when the
/// first line's value cell is not numeric (an empty cell counts as missing,
/// not as a header). Without a timestamp column, timestamps are 0, 1, 2, ...
inline SnapshotSeries parse_csv_series(std::string_view content, std::size_t value_column,
                                       std::optional<std::size_t> timestamp_column = std::nullopt,
                                       std::string source_label = {})
{
    SnapshotSeries series;
    series.source_label = std::move(source_label);
    series.channel = value_column;

    text::LineReader reader(content);
    std::string_view line;
    char delim = ',';
    bool first = true;
    std::size_t row = 0;
    while (reader.next(line)) {
        if (first && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
            line.remove_prefix(3);
        }
        if (text::trim(line).empty()) {
            continue;
        }
        const auto line_no = std::to_string(reader.line_number());
        if (first) {
            delim = detail::detect_delimiter(line);
        }
        const auto cells = text::split_on(line, delim);
        const std::size_t needed = std::max(value_column, timestamp_column.value_or(0)) + 1;
        if (first) {
            first = false;
            const auto cell = value_column < cells.size() ? text::trim(cells[value_column])
                                                          : std::string_view{};
            if (!detail::is_missing_token(cell) && !text::parse_double(cell)) {
                continue; // header
            }
        }
        if (cells.size() < needed) {
            fail(ErrorKind::parse, "row " + line_no + ": expected at least " + std::to_string(needed) +
                                       " columns, found " + std::to_string(cells.size()));
        }
        const auto vcell = text::trim(cells[value_column]);
        double value = std::nan("");
        if (!detail::is_missing_token(vcell)) {
            const auto v = text::parse_double(vcell);
            if (!v || std::isinf(*v)) {
                fail(ErrorKind::parse,
                     "row " + line_no + ": non-numeric value '" + std::string(vcell) + "'");
            }
            value = *v;
        }
        double ts = static_cast<double>(row);
        if (timestamp_column) {
            const auto tcell = text::trim(cells[*timestamp_column]);
            const auto t = text::parse_double(tcell);
            if (!t || !std::isfinite(*t)) {
                fail(ErrorKind::parse,
                     "row " + line_no + ": non-numeric timestamp '" + std::string(tcell) + "'");
            }
            ts = *t;
            if (!series.points.empty() && !(series.points.back().timestamp < ts)) {
                fail(ErrorKind::validation, "row " + line_no + ": timestamp " +
                                                text::format_double(ts) +
                                                " does not increase over previous " +
                                                text::format_double(series.points.back().timestamp));
            }
        }
        series.points.push_back({ts, value});
        ++row;
    }
    return series;
}

inline SnapshotSeries load_csv_series(const std::filesystem::path& path, std::size_t value_column,
                                      std::optional<std::size_t> timestamp_column = std::nullopt)
{
    return parse_csv_series(io::read_file(path), value_column, timestamp_column,
                            path.filename().string());
}

/// Canonical export: header `timestamp,value`, shortest round-trip decimals.
inline std::string series_to_csv(const SnapshotSeries& series)
{
    std::string out = "timestamp,value\n";
    for (const auto& p : series.points) {
        out += text::format_double(p.timestamp);
        out += ',';
        out += text::format_double(p.value);
        out += '\n';
    }
    return out;
}

/// Reads a file written by `series_to_csv`.
inline SnapshotSeries read_series_csv(const std::filesystem::path& path)
{
    return load_csv_series(path, 1, 0);
}

} // namespace prognost

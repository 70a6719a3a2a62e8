// SPDX-License-Identifier: Apache-2.0
//
// Cleaning, min-max scaling, sliding windows and the chronological split.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prognost/errors.hpp"
#include "prognost/ingest.hpp"
#include "prognost/text.hpp"

namespace prognost {

// ---------------------------------------------------------------------------
// Outliers
// ---------------------------------------------------------------------------

struct OutlierDefaults {
    static constexpr std::size_t window = 11;
    static constexpr double k = 5.0;
};

struct OutlierResult {
    SnapshotSeries series;
    std::vector<std::size_t> replaced;
};

namespace detail {

/// Median of `v`; reorders `v`. Even sizes average the two middle elements.
inline double median_inplace(std::vector<double>& v)
{
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (n % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

/// One rolling median/MAD pass over `values`, reading only the input.
inline std::vector<std::size_t> outlier_pass(const std::vector<double>& values, std::size_t window,
                                             double k, std::vector<double>& out)
{
    const std::size_t n = values.size();
    const std::size_t half = window / 2;
    out = values;
    std::vector<std::size_t> replaced;
    std::vector<double> buf;
    std::vector<double> dev;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        buf.assign(values.begin() + static_cast<std::ptrdiff_t>(lo),
                   values.begin() + static_cast<std::ptrdiff_t>(hi));
        const double m = median_inplace(buf);
        dev.clear();
        for (std::size_t j = lo; j < hi; ++j) {
            dev.push_back(std::abs(values[j] - m));
        }
        const double d = median_inplace(dev);
        if (std::abs(values[i] - m) > k * d) {
            out[i] = m;
            replaced.push_back(i);
        }
    }
    return replaced;
}

} // namespace detail

/// Replaces points deviating from the centered rolling median by more than
/// k times the rolling median absolute deviation (edges use the truncated
/// window). Passes repeat until nothing changes, so the result is a fixed
/// point of the filter. Indices of every replaced point are returned sorted.
inline OutlierResult remove_outliers(const SnapshotSeries& series,
                                     std::size_t window = OutlierDefaults::window,
                                     double k = OutlierDefaults::k)
{
    if (window < 3 || window % 2 == 0) {
        fail(ErrorKind::config, "outlier window must be odd and >= 3, got " + std::to_string(window));
    }
    if (!(k > 0.0) || !std::isfinite(k)) {
        fail(ErrorKind::config, "outlier k must be positive, got " + text::format_double(k));
    }
    if (!series.all_finite()) {
        fail(ErrorKind::validation, "outlier removal needs a series without missing values");
    }
    OutlierResult result{series, {}};
    if (series.size() < 3) {
        return result;
    }
    std::vector<double> current = series.values();
    std::vector<double> next;
    std::vector<bool> touched(current.size(), false);
    for (std::size_t pass = 0; pass < current.size(); ++pass) {
        const auto replaced = detail::outlier_pass(current, window, k, next);
        if (replaced.empty()) {
            break;
        }
        for (auto i : replaced) {
            touched[i] = true;
        }
        current.swap(next);
    }
    for (std::size_t i = 0; i < current.size(); ++i) {
        result.series.points[i].value = current[i];
        if (touched[i]) {
            result.replaced.push_back(i);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Missing values
// ---------------------------------------------------------------------------

/// Drops leading/trailing NaN points and linearly interpolates (in time)
/// interior NaN runs no longer than `max_gap`.
inline SnapshotSeries fill_missing(const SnapshotSeries& series, std::size_t max_gap)
{
    const auto& pts = series.points;
    std::size_t first = 0;
    while (first < pts.size() && std::isnan(pts[first].value)) {
        ++first;
    }
    std::size_t last = pts.size();
    while (last > first && std::isnan(pts[last - 1].value)) {
        --last;
    }
    SnapshotSeries out;
    out.source_label = series.source_label;
    out.channel = series.channel;
    out.points.assign(pts.begin() + static_cast<std::ptrdiff_t>(first),
                      pts.begin() + static_cast<std::ptrdiff_t>(last));
    auto& p = out.points;
    for (std::size_t i = 0; i < p.size();) {
        if (!std::isnan(p[i].value)) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (std::isnan(p[end].value)) {
            ++end;
        }
        const std::size_t run = end - i;
        if (run > max_gap) {
            fail(ErrorKind::gap_too_large,
                 "run of " + std::to_string(run) + " missing values starting at index " +
                     std::to_string(first + i) + " (timestamp " + text::format_double(p[i].timestamp) +
                     ") exceeds max gap " + std::to_string(max_gap) +
                     "; split the series at this point");
        }
        const auto& a = p[i - 1];
        const auto& b = p[end];
        for (std::size_t j = i; j < end; ++j) {
            const double t = (p[j].timestamp - a.timestamp) / (b.timestamp - a.timestamp);
            p[j].value = a.value + t * (b.value - a.value);
        }
        i = end;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Min-max scaling
// ---------------------------------------------------------------------------

struct MinMaxScaler {
    double min = 0.0;
    double max = 1.0;

    double forward(double x) const noexcept { return (x - min) / (max - min); }
    double inverse(double y) const noexcept { return y * (max - min) + min; }

    bool operator==(const MinMaxScaler&) const = default;
};

enum class ScaleDirection { forward, inverse };

struct ScaledValues {
    std::vector<double> values;
    /// Inputs outside the fit range (forward) or outside [0, 1] (inverse);
    /// these are extrapolated linearly.
    std::size_t out_of_range = 0;
};

inline void validate_scaler(const MinMaxScaler& s)
{
    if (!std::isfinite(s.min) || !std::isfinite(s.max) || !(s.max > s.min)) {
        fail(ErrorKind::constant_series, "invalid scaler range [" + text::format_double(s.min) + ", " +
                                             text::format_double(s.max) + "]");
    }
}

inline MinMaxScaler fit_minmax(std::span<const double> values)
{
    if (values.empty()) {
        fail(ErrorKind::insufficient_data, "cannot fit a scaler to an empty series");
    }
    MinMaxScaler s{values[0], values[0]};
    for (double v : values) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::validation, "cannot fit a scaler to non-finite values");
        }
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    if (s.max == s.min) {
        fail(ErrorKind::constant_series,
             "constant series (all values " + text::format_double(s.min) + "): min-max range is zero");
    }
    return s;
}

inline MinMaxScaler fit_minmax(const SnapshotSeries& series)
{
    const auto v = series.values();
    return fit_minmax(std::span<const double>(v));
}

inline ScaledValues apply_scaler(const MinMaxScaler& scaler, std::span<const double> values,
                                 ScaleDirection direction)
{
    validate_scaler(scaler);
    ScaledValues out;
    out.values.reserve(values.size());
    for (double v : values) {
        if (direction == ScaleDirection::forward) {
            if (v < scaler.min || v > scaler.max) {
                ++out.out_of_range;
            }
            out.values.push_back(scaler.forward(v));
        } else {
            if (v < 0.0 || v > 1.0) {
                ++out.out_of_range;
            }
            out.values.push_back(scaler.inverse(v));
        }
    }
    return out;
}

inline SnapshotSeries scale_series(const SnapshotSeries& series, const MinMaxScaler& scaler)
{
    validate_scaler(scaler);
    SnapshotSeries out = series;
    for (auto& p : out.points) {
        p.value = scaler.forward(p.value);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Windows and split
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultWindow = 5;
inline constexpr double kDefaultTrainRatio = 0.7;

/// Stride-1 sliding windows: window i is series[i, i+W), target i is series[i+W].
struct WindowedDataset {
    std::size_t window_length = 0;
    std::vector<std::vector<double>> windows;
    std::vector<double> targets;
    std::vector<std::size_t> origin_indices; ///< series index of each target
    std::vector<double> timestamps;          ///< timestamp of each target

    std::size_t size() const noexcept { return targets.size(); }
    bool empty() const noexcept { return targets.empty(); }

    WindowedDataset slice(std::size_t begin, std::size_t end) const
    {
        WindowedDataset out;
        out.window_length = window_length;
        const auto b = static_cast<std::ptrdiff_t>(begin);
        const auto e = static_cast<std::ptrdiff_t>(end);
        out.windows.assign(windows.begin() + b, windows.begin() + e);
        out.targets.assign(targets.begin() + b, targets.begin() + e);
        out.origin_indices.assign(origin_indices.begin() + b, origin_indices.begin() + e);
        out.timestamps.assign(timestamps.begin() + b, timestamps.begin() + e);
        return out;
    }
};

inline WindowedDataset make_windows(const SnapshotSeries& series, std::size_t window_length)
{
    if (window_length == 0) {
        fail(ErrorKind::config, "window length must be >= 1");
    }
    const std::size_t n = series.size();
    if (n <= window_length) {
        fail(ErrorKind::insufficient_data, "series of length " + std::to_string(n) +
                                               " is too short for window length " +
                                               std::to_string(window_length));
    }
    if (!series.all_finite()) {
        fail(ErrorKind::validation, "windowing needs a series without missing values");
    }
    WindowedDataset ds;
    ds.window_length = window_length;
    const std::size_t count = n - window_length;
    ds.windows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> w(window_length);
        for (std::size_t j = 0; j < window_length; ++j) {
            w[j] = series.points[i + j].value;
        }
        ds.windows.push_back(std::move(w));
        ds.targets.push_back(series.points[i + window_length].value);
        ds.origin_indices.push_back(i + window_length);
        ds.timestamps.push_back(series.points[i + window_length].timestamp);
    }
    return ds;
}

/// floor(ratio * total), robust to the representation error of decimal ratios.
inline std::size_t train_count(std::size_t total, double ratio)
{
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 1e-9));
}

struct SplitDataset {
    WindowedDataset train;
    WindowedDataset test;
    double ratio = kDefaultTrainRatio;
};

/// Chronological split, no shuffling: the first floor(ratio*N) windows train.
inline SplitDataset split_train_test(const WindowedDataset& ds, double ratio = kDefaultTrainRatio)
{
    if (!(ratio > 0.0 && ratio < 1.0)) {
        fail(ErrorKind::config, "split ratio must lie in (0, 1), got " + text::format_double(ratio));
    }
    if (ds.empty()) {
        fail(ErrorKind::insufficient_data, "cannot split an empty dataset");
    }
    const std::size_t n_train = train_count(ds.size(), ratio);
    if (n_train == 0 || n_train == ds.size()) {
        fail(ErrorKind::insufficient_data, "split of " + std::to_string(ds.size()) +
                                               " windows at ratio " + text::format_double(ratio) +
                                               " leaves one side empty");
    }
    return {ds.slice(0, n_train), ds.slice(n_train, ds.size()), ratio};
}

// ---------------------------------------------------------------------------
// CSV payloads
// ---------------------------------------------------------------------------

inline std::string indexed_values_to_csv(std::span<const double> values)
{
    std::string out = "index,value\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += text::format_double(values[i]);
        out += '\n';
    }
    return out;
}

inline std::string windows_to_csv(const WindowedDataset& ds)
{
    std::string out;
    for (std::size_t j = 1; j <= ds.window_length; ++j) {
        out += 'w';
        out += std::to_string(j);
        out += ',';
    }
    out += "target\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.windows[i]) {
            out += text::format_double(v);
            out += ',';
        }
        out += text::format_double(ds.targets[i]);
        out += '\n';
    }
    return out;
}

} // namespace prognost

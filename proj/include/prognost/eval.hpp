// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prognost/errors.hpp"
#include "prognost/model.hpp"
#include "prognost/parallel.hpp"
#include "prognost/preprocess.hpp"
#include "prognost/text.hpp"

namespace prognost {

enum class Space { scaled, original };

inline std::string_view to_string(Space s) noexcept
{
    return s == Space::scaled ? "scaled" : "original";
}

inline std::optional<Space> parse_space(std::string_view s)
{
    if (s == "scaled") return Space::scaled;
    if (s == "original") return Space::original;
    return std::nullopt;
}

/// Targets with |y| below this are left out of MAPE.
inline constexpr double kMapeFloor = 1e-8;

struct MetricsReport {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> nmae; ///< mae / range(actual); empty when the range is zero
    std::optional<double> mape; ///< fraction; empty when every target is excluded
    std::size_t n = 0;
    std::size_t mape_excluded = 0;
    Space space = Space::scaled;

    double require_nmae() const
    {
        if (!nmae) fail(ErrorKind::undefined_metric, "nmae undefined: actual values have zero range");
        return *nmae;
    }

    double require_mape() const
    {
        if (!mape) fail(ErrorKind::undefined_metric, "mape undefined: every actual value is near zero");
        return *mape;
    }
};

inline MetricsReport compute_metrics(std::span<const double> actual, std::span<const double> predicted,
                                     Space space = Space::scaled)
{
    if (actual.size() != predicted.size()) {
        fail(ErrorKind::dimension, "metrics: " + std::to_string(actual.size()) + " actual vs " +
                                       std::to_string(predicted.size()) + " predicted values");
    }
    if (actual.empty()) {
        fail(ErrorKind::dimension, "metrics over an empty set");
    }
    MetricsReport r;
    r.n = actual.size();
    r.space = space;
    double sq = 0.0;
    double abs_sum = 0.0;
    double pct_sum = 0.0;
    std::size_t pct_n = 0;
    double lo = actual[0];
    double hi = actual[0];
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double e = actual[i] - predicted[i];
        sq += e * e;
        abs_sum += std::abs(e);
        lo = std::min(lo, actual[i]);
        hi = std::max(hi, actual[i]);
        if (std::abs(actual[i]) >= kMapeFloor) {
            pct_sum += std::abs(e) / std::abs(actual[i]);
            ++pct_n;
        }
    }
    const double n = static_cast<double>(r.n);
    r.rmse = std::sqrt(sq / n);
    r.mae = abs_sum / n;
    if (hi > lo) {
        r.nmae = r.mae / (hi - lo);
    }
    r.mape_excluded = r.n - pct_n;
    if (pct_n > 0) {
        r.mape = pct_sum / static_cast<double>(pct_n);
    }
    // Power-mean inequality; the slack absorbs rounding when all |e| are equal.
    if (!(r.rmse >= r.mae * (1.0 - 1e-12)) && std::isfinite(r.rmse)) {
        fail(ErrorKind::numeric, "metrics invariant violated: rmse " + text::format_double(r.rmse) +
                                     " < mae " + text::format_double(r.mae));
    }
    return r;
}

inline std::string metrics_csv_header()
{
    return "dataset,space,n,rmse,mae,nmae,mape,mape_excluded\n";
}

inline std::string metrics_csv_row(std::string_view dataset, const MetricsReport& r)
{
    auto opt = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string("nan"); };
    return std::string(dataset) + "," + std::string(to_string(r.space)) + "," + std::to_string(r.n) +
           "," + text::format_double(r.rmse) + "," + text::format_double(r.mae) + "," + opt(r.nmae) +
           "," + opt(r.mape) + "," + std::to_string(r.mape_excluded) + "\n";
}

enum class SplitTag { train, test };

struct TraceRow {
    std::size_t origin_index = 0;
    double timestamp = 0.0;
    double actual = 0.0;
    double predicted = 0.0;
    SplitTag split = SplitTag::test;
};

struct PredictionTrace {
    std::vector<TraceRow> rows;

    std::vector<double> actual() const
    {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r.actual);
        return v;
    }

    std::vector<double> predicted() const
    {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r.predicted);
        return v;
    }
};

/// Teacher-forced one-step-ahead predictions: each target is predicted from
/// the true preceding W values. `ds` is expected in scaled space; original
/// space maps both columns back through `scaler`.
inline PredictionTrace one_step_predictions(const ModelParams& m, const WindowedDataset& ds,
                                            const std::optional<MinMaxScaler>& scaler, Space space,
                                            SplitTag tag = SplitTag::test)
{
    if (space == Space::original && !scaler) {
        fail(ErrorKind::config, "original-space predictions need a scaler (none stored with the model)");
    }
    m.validate();
    for (const auto& w : ds.windows) {
        if (w.size() != ds.window_length) {
            fail(ErrorKind::dimension, "window of length " + std::to_string(w.size()) +
                                           " in a dataset declared with length " +
                                           std::to_string(ds.window_length));
        }
    }
    PredictionTrace trace;
    trace.rows.resize(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        TraceRow row{ds.origin_indices[i], ds.timestamps[i], ds.targets[i], predict(m, ds.windows[i]), tag};
        if (space == Space::original) {
            row.actual = scaler->inverse(row.actual);
            row.predicted = scaler->inverse(row.predicted);
        }
        trace.rows[i] = row;
    });
    return trace;
}

/// Persistence forecaster ŷ_i = y_{i-1}: the last value of each window.
inline std::vector<double> persistence_predictions(const WindowedDataset& ds)
{
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& w : ds.windows) {
        out.push_back(w.back());
    }
    return out;
}

inline std::string trace_to_csv(const PredictionTrace& trace)
{
    std::string out = "origin_index,timestamp,actual,predicted,split\n";
    for (const auto& r : trace.rows) {
        out += std::to_string(r.origin_index) + "," + text::format_double(r.timestamp) + "," +
               text::format_double(r.actual) + "," + text::format_double(r.predicted) + "," +
               (r.split == SplitTag::train ? "train" : "test") + "\n";
    }
    return out;
}

} // namespace prognost

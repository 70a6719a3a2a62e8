// SPDX-License-Identifier: Apache-2.0
//
// Glue shared by the CLI and the acceptance suite: scale, window and split a
// cleaned series the same way for training and evaluation.
#pragma once

#include <optional>
#include <string>

#include "prognost/errors.hpp"
#include "prognost/ingest.hpp"
#include "prognost/preprocess.hpp"

namespace prognost {

struct PreparedData {
    MinMaxScaler scaler;
    SnapshotSeries scaled;
    WindowedDataset windows;
    SplitDataset split;
};

/// Fits the scaler on the training portion only (every value that appears in
/// a training window or target) unless one is supplied, then scales the whole
/// series, windows it and splits chronologically.
inline PreparedData prepare_dataset(const SnapshotSeries& series, std::size_t window, double ratio,
                                    std::optional<MinMaxScaler> scaler = std::nullopt)
{
    validate_series(series);
    if (!series.all_finite()) {
        fail(ErrorKind::validation, "series contains missing values; run preprocess first");
    }
    if (series.size() <= window) {
        fail(ErrorKind::insufficient_data, "series of length " + std::to_string(series.size()) +
                                               " is too short for window length " +
                                               std::to_string(window));
    }
    const std::size_t total = series.size() - window;
    const std::size_t n_train = train_count(total, ratio);
    PreparedData out;
    if (scaler) {
        validate_scaler(*scaler);
        out.scaler = *scaler;
    } else {
        const auto values = series.values();
        const std::size_t fit_end = std::min(values.size(), n_train + window);
        if (fit_end == 0) {
            fail(ErrorKind::insufficient_data, "training portion is empty");
        }
        out.scaler = fit_minmax(std::span<const double>(values.data(), fit_end));
    }
    out.scaled = scale_series(series, out.scaler);
    out.windows = make_windows(out.scaled, window);
    out.split = split_train_test(out.windows, ratio);
    return out;
}

} // namespace prognost

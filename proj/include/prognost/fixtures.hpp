// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic series for tests and offline CI.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string_view>

#include "prognost/errors.hpp"
#include "prognost/ingest.hpp"
#include "prognost/model.hpp"

namespace prognost {

enum class FixtureKind { sine, degradation };

inline std::optional<FixtureKind> parse_fixture_kind(std::string_view s)
{
    if (s == "sine") return FixtureKind::sine;
    if (s == "degradation") return FixtureKind::degradation;
    return std::nullopt;
}

inline constexpr double kSinePeriod = 40.0;

/// sine: sin(2πi/40), noiseless. degradation: a flat healthy phase with small
/// seeded noise, then exponential growth over the last 30% of the run, in the
/// style of a snapshot-rms run-to-failure trend. Timestamps are 600 s apart.
inline SnapshotSeries make_fixture(FixtureKind kind, std::size_t n, std::uint64_t seed = 1)
{
    if (n == 0) {
        fail(ErrorKind::config, "fixture length must be positive");
    }
    SnapshotSeries s;
    s.source_label = kind == FixtureKind::sine ? "sine" : "degradation";
    s.points.reserve(n);
    std::mt19937_64 rng(seed);
    const double onset = 0.7 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i);
        if (kind == FixtureKind::sine) {
            s.points.push_back({x, std::sin(2.0 * std::numbers::pi * x / kSinePeriod)});
        } else {
            const double noise = 0.004 * (2.0 * detail::unit_uniform(rng) - 1.0);
            double v = 0.08 + 0.01 * std::sin(2.0 * std::numbers::pi * x / 144.0) + noise;
            if (x > onset) {
                const double u = (x - onset) / (static_cast<double>(n) - onset);
                v += 0.02 * (std::exp(4.0 * u) - 1.0);
            }
            s.points.push_back({600.0 * x, v});
        }
    }
    return s;
}

} // namespace prognost

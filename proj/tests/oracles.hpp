// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations for the test suites. Nothing here calls
// into the library's numeric paths; inputs are plain vectors and scalars.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

inline double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

/// Weights of one LSTM layer as nested vectors: W[g][row][col], V[g][row][col], b[g][row]
/// with gates ordered i, f, o, c.
struct Layer {
    std::vector<std::vector<std::vector<double>>> W, V;
    std::vector<std::vector<double>> b;
};

struct CellOut {
    std::vector<double> h, c;
};

/// Scalar-by-scalar evaluation of the cell equations.
inline CellOut cell(const Layer& p, const std::vector<double>& x, const std::vector<double>& h_prev,
                    const std::vector<double>& c_prev)
{
    const std::size_t hid = p.b[0].size();
    CellOut out{std::vector<double>(hid), std::vector<double>(hid)};
    for (std::size_t j = 0; j < hid; ++j) {
        double pre[4];
        for (std::size_t g = 0; g < 4; ++g) {
            double a = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) a += p.W[g][j][k] * x[k];
            for (std::size_t k = 0; k < hid; ++k) a += p.V[g][j][k] * h_prev[k];
            pre[g] = a + p.b[g][j];
        }
        const double i = sigmoid(pre[0]);
        const double f = sigmoid(pre[1]);
        const double o = sigmoid(pre[2]);
        const double cand = std::tanh(pre[3]);
        out.c[j] = f * c_prev[j] + i * cand;
        out.h[j] = o * std::tanh(out.c[j]);
    }
    return out;
}

/// Unrolled stack over a scalar window from zero state; linear (or σ) head.
inline double window_output(const std::vector<Layer>& layers, const std::vector<double>& head,
                            const std::vector<double>& window, bool sigmoid_head)
{
    std::vector<std::vector<double>> h, c;
    for (const auto& l : layers) {
        h.emplace_back(l.b[0].size(), 0.0);
        c.emplace_back(l.b[0].size(), 0.0);
    }
    for (double v : window) {
        std::vector<double> x{v};
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto r = cell(layers[l], x, h[l], c[l]);
            h[l] = r.h;
            c[l] = r.c;
            x = r.h;
        }
    }
    double z = 0.0;
    for (std::size_t k = 0; k < head.size(); ++k) z += head[k] * h.back()[k];
    return sigmoid_head ? sigmoid(z) : z;
}

/// Metrics by plain loops, accumulating in long double.
struct Metrics {
    double rmse, mae, nmae, mape;
    std::size_t mape_terms;
};

inline Metrics metrics(const std::vector<double>& y, const std::vector<double>& yhat)
{
    long double sq = 0, ab = 0, pct = 0;
    std::size_t terms = 0;
    double lo = y[0], hi = y[0];
    for (std::size_t i = 0; i < y.size(); ++i) {
        const long double e = static_cast<long double>(y[i]) - yhat[i];
        sq += e * e;
        ab += e < 0 ? -e : e;
        if (y[i] < lo) lo = y[i];
        if (y[i] > hi) hi = y[i];
        if (std::fabs(y[i]) >= 1e-8) {
            pct += (e < 0 ? -e : e) / std::fabs(static_cast<long double>(y[i]));
            ++terms;
        }
    }
    const long double n = static_cast<long double>(y.size());
    Metrics m{};
    m.rmse = static_cast<double>(std::sqrt(sq / n));
    m.mae = static_cast<double>(ab / n);
    m.nmae = static_cast<double>(ab / n / (static_cast<long double>(hi) - lo));
    m.mape = terms ? static_cast<double>(pct / terms) : std::nan("");
    m.mape_terms = terms;
    return m;
}

/// Median by full sort.
inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// One rolling median/MAD pass with truncated edge windows; returns flagged indices.
inline std::vector<std::size_t> rolling_mad_flags(const std::vector<double>& x, std::size_t window, double k)
{
    std::vector<std::size_t> flagged;
    const std::size_t half = window / 2;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(x.size() - 1, i + half);
        std::vector<double> w(x.begin() + static_cast<long>(lo), x.begin() + static_cast<long>(hi) + 1);
        const double m = median(w);
        for (auto& v : w) v = std::fabs(v - m);
        const double d = median(w);
        if (std::fabs(x[i] - m) > k * d) flagged.push_back(i);
    }
    return flagged;
}

/// Two-pass root mean square: sum in long double, then scale.
inline double rms(const std::vector<double>& v)
{
    long double s = 0;
    for (double x : v) s += static_cast<long double>(x) * x;
    return static_cast<double>(std::sqrt(s / v.size()));
}

inline std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi)
{
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

} // namespace oracle

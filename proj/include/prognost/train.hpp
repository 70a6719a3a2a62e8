// SPDX-License-Identifier: Apache-2.0
//
// Loss, backpropagation through time, Adam, the epoch loop and a
// central-difference gradient checker.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "prognost/errors.hpp"
#include "prognost/model.hpp"
#include "prognost/parallel.hpp"
#include "prognost/preprocess.hpp"
#include "prognost/text.hpp"

namespace prognost {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::vector<std::size_t> hidden_dims{128, 64};
    double learning_rate = 0.001;
    std::size_t batch_size = 50;
    std::size_t epochs = 100;
    std::size_t window = kDefaultWindow;
    LossMode loss_mode = LossMode::mse;
    std::uint64_t seed = 42;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0; ///< global gradient max-norm; 0 disables clipping
    double train_ratio = kDefaultTrainRatio;

    ModelShape shape() const { return {1, hidden_dims, loss_mode}; }

    void validate() const
    {
        auto bad = [](const std::string& msg) { fail(ErrorKind::config, msg); };
        if (hidden_dims.empty()) bad("hidden_dims must name at least one layer");
        for (auto d : hidden_dims) {
            if (d == 0) bad("hidden_dims entries must be positive");
        }
        // learning_rate == 0 is permitted: training is then an identity on parameters.
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be >= 0");
        if (!(beta1 > 0.0 && beta1 < 1.0)) bad("beta1 must lie in (0, 1)");
        if (!(beta2 > 0.0 && beta2 < 1.0)) bad("beta2 must lie in (0, 1)");
        if (!(epsilon > 0.0)) bad("epsilon must be positive");
        if (batch_size < 1) bad("batch_size must be >= 1");
        if (epochs < 1) bad("epochs must be >= 1");
        if (window < 1) bad("window must be >= 1");
        if (!(clip_norm >= 0.0)) bad("clip_norm must be >= 0");
        if (!(train_ratio > 0.0 && train_ratio < 1.0)) bad("train_ratio must lie in (0, 1)");
    }
};

/// Parses comma-separated positive sizes such as "128,64".
inline std::vector<std::size_t> parse_dims(std::string_view s)
{
    std::vector<std::size_t> dims;
    for (auto tok : text::split_on(s, ',')) {
        const auto v = text::parse_int(text::trim(tok));
        if (!v || *v <= 0) {
            fail(ErrorKind::config, "invalid layer size '" + std::string(tok) + "' in '" +
                                        std::string(s) + "'");
        }
        dims.push_back(static_cast<std::size_t>(*v));
    }
    return dims;
}

/// Applies one `key = value` assignment; keys are TrainConfig field names.
inline void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value)
{
    auto number = [&]() {
        const auto v = text::parse_double(value);
        if (!v) fail(ErrorKind::config, "'" + std::string(key) + "' needs a number, got '" + std::string(value) + "'");
        return *v;
    };
    auto count = [&]() {
        const auto v = text::parse_int(value);
        if (!v || *v < 0) fail(ErrorKind::config, "'" + std::string(key) + "' needs a non-negative integer, got '" + std::string(value) + "'");
        return static_cast<std::size_t>(*v);
    };
    if (key == "hidden_dims") cfg.hidden_dims = parse_dims(value);
    else if (key == "learning_rate") cfg.learning_rate = number();
    else if (key == "batch_size") cfg.batch_size = count();
    else if (key == "epochs") cfg.epochs = count();
    else if (key == "window") cfg.window = count();
    else if (key == "loss_mode") {
        const auto m = parse_loss_mode(value);
        if (!m) fail(ErrorKind::config, "loss_mode must be mse or bce, got '" + std::string(value) + "'");
        cfg.loss_mode = *m;
    }
    else if (key == "seed") cfg.seed = count();
    else if (key == "beta1") cfg.beta1 = number();
    else if (key == "beta2") cfg.beta2 = number();
    else if (key == "epsilon") cfg.epsilon = number();
    else if (key == "clip_norm") cfg.clip_norm = number();
    else if (key == "train_ratio") cfg.train_ratio = number();
    else fail(ErrorKind::config, "unknown config key '" + std::string(key) + "'");
}

/// Line-oriented `key = value` text; '#' starts a comment, blank lines ignored.
inline TrainConfig parse_train_config(std::string_view content, TrainConfig cfg = {})
{
    text::LineReader reader(content);
    std::string_view line;
    while (reader.next(line)) {
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = text::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorKind::config, "config line " + std::to_string(reader.line_number()) +
                                        ": expected 'key = value'");
        }
        set_config_value(cfg, text::trim(line.substr(0, eq)), text::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline std::string format_train_config(const TrainConfig& cfg)
{
    std::string dims;
    for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
        dims += (i ? "," : "") + std::to_string(cfg.hidden_dims[i]);
    }
    std::string out;
    out += "hidden_dims = " + dims + "\n";
    out += "learning_rate = " + text::format_double(cfg.learning_rate) + "\n";
    out += "batch_size = " + std::to_string(cfg.batch_size) + "\n";
    out += "epochs = " + std::to_string(cfg.epochs) + "\n";
    out += "window = " + std::to_string(cfg.window) + "\n";
    out += "loss_mode = " + std::string(to_string(cfg.loss_mode)) + "\n";
    out += "seed = " + std::to_string(cfg.seed) + "\n";
    out += "beta1 = " + text::format_double(cfg.beta1) + "\n";
    out += "beta2 = " + text::format_double(cfg.beta2) + "\n";
    out += "epsilon = " + text::format_double(cfg.epsilon) + "\n";
    out += "clip_norm = " + text::format_double(cfg.clip_norm) + "\n";
    out += "train_ratio = " + text::format_double(cfg.train_ratio) + "\n";
    return out;
}

inline ModelParams init_params(const TrainConfig& cfg, std::uint64_t seed)
{
    return init_params(cfg.shape(), seed);
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

inline constexpr double kBceClip = 1e-7;

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad; ///< dLoss/dpred
};

/// mse: mean (y - ŷ)². bce: -mean [p log q + (1-p) log(1-q)] with target p
/// and prediction q both clipped to [1e-7, 1 - 1e-7].
inline LossResult compute_loss(std::span<const double> pred, std::span<const double> target,
                               LossMode mode)
{
    if (pred.size() != target.size()) {
        fail(ErrorKind::dimension, "loss: " + std::to_string(pred.size()) + " predictions vs " +
                                       std::to_string(target.size()) + " targets");
    }
    if (pred.empty()) {
        fail(ErrorKind::dimension, "loss over an empty batch");
    }
    const double n = static_cast<double>(pred.size());
    LossResult r;
    r.grad.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mode == LossMode::mse) {
            const double e = pred[i] - target[i];
            r.loss += e * e;
            r.grad[i] = 2.0 * e / n;
        } else {
            const double q = std::clamp(pred[i], kBceClip, 1.0 - kBceClip);
            const double p = std::clamp(target[i], kBceClip, 1.0 - kBceClip);
            if (!(q > 0.0 && q < 1.0 && p > 0.0 && p < 1.0)) {
                fail(ErrorKind::domain, "bce needs values in (0, 1); got prediction " +
                                            text::format_double(pred[i]) + ", target " +
                                            text::format_double(target[i]));
            }
            r.loss -= p * std::log(q) + (1.0 - p) * std::log(1.0 - q);
            r.grad[i] = (-p / q + (1.0 - p) / (1.0 - q)) / n;
        }
    }
    r.loss /= n;
    return r;
}

// ---------------------------------------------------------------------------
// Gradients and BPTT
// ---------------------------------------------------------------------------

/// dLoss/dθ with the same block structure as ModelParams.
struct Gradients {
    std::vector<LayerParams> layers;
    Matrix head;

    static Gradients zeros_like(const ModelParams& m)
    {
        Gradients g;
        std::size_t in = m.input_dim;
        for (const auto& l : m.layers) {
            g.layers.push_back(LayerParams::zeros(in, l.hidden_size()));
            in = l.hidden_size();
        }
        g.head = Matrix::Zero(m.head.rows(), m.head.cols());
        return g;
    }

    void set_zero()
    {
        for (auto& l : layers) {
            l.set_zero();
        }
        head.setZero();
    }

    Gradients& operator+=(const Gradients& o)
    {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (std::size_t k = 0; k < 12; ++k) {
                layers[l].blocks[k] += o.layers[l].blocks[k];
            }
        }
        head += o.head;
        return *this;
    }

    Gradients& operator*=(double s)
    {
        for (auto& l : layers) {
            for (auto& b : l.blocks) {
                b *= s;
            }
        }
        head *= s;
        return *this;
    }

    double squared_norm() const
    {
        double s = head.squaredNorm();
        for (const auto& l : layers) {
            for (const auto& b : l.blocks) {
                s += b.squaredNorm();
            }
        }
        return s;
    }
};

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to this window's prediction is `dloss_dy`.
inline void bptt_backward(const ModelParams& m, const ForwardCache& cache, double dloss_dy,
                          Gradients& grads)
{
    const std::size_t L = m.layers.size();
    if (cache.steps.empty()) {
        fail(ErrorKind::contract, "backward pass without a forward cache");
    }
    for (const auto& step : cache.steps) {
        if (step.size() != L) {
            fail(ErrorKind::contract, "forward cache layer count does not match the model");
        }
        for (std::size_t l = 0; l < L; ++l) {
            if (step[l].h.size() != static_cast<Eigen::Index>(m.layers[l].hidden_size()) ||
                step[l].x.size() != static_cast<Eigen::Index>(m.layers[l].input_size())) {
                fail(ErrorKind::contract, "forward cache shapes do not match the model");
            }
        }
    }
    if (grads.layers.size() != L) {
        fail(ErrorKind::contract, "gradient container does not match the model");
    }

    const double dz = m.loss == LossMode::bce ? dloss_dy * cache.y * (1.0 - cache.y) : dloss_dy;
    const auto& top = cache.steps.back()[L - 1];
    grads.head.row(0) += dz * top.h.transpose();

    std::vector<Vector> dh_next(L), dc_next(L);
    for (std::size_t l = 0; l < L; ++l) {
        const auto hid = static_cast<Eigen::Index>(m.layers[l].hidden_size());
        dh_next[l] = Vector::Zero(hid);
        dc_next[l] = Vector::Zero(hid);
    }
    Vector dx_above;
    std::array<Vector, 4> da;
    for (std::size_t t = cache.steps.size(); t-- > 0;) {
        for (std::size_t l = L; l-- > 0;) {
            const auto& s = cache.steps[t][l];
            const auto& p = m.layers[l];
            auto& g = grads.layers[l];

            Vector dh = dh_next[l];
            if (l == L - 1) {
                if (t == cache.steps.size() - 1) {
                    dh += dz * m.head.row(0).transpose();
                }
            } else {
                dh += dx_above;
            }
            const Vector dc = dc_next[l] +
                              (dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square())).matrix();

            const auto sig_prime = [](const Vector& v) { return (v.array() * (1.0 - v.array())).matrix(); };
            da[0] = (dc.array() * s.g.array()).matrix().cwiseProduct(sig_prime(s.i));
            da[1] = (dc.array() * s.c_prev.array()).matrix().cwiseProduct(sig_prime(s.f));
            da[2] = (dh.array() * s.tanh_c.array()).matrix().cwiseProduct(sig_prime(s.o));
            da[3] = (dc.array() * s.i.array() * (1.0 - s.g.array().square())).matrix();

            Vector dh_prev = Vector::Zero(dh.size());
            Vector dx = Vector::Zero(s.x.size());
            for (std::size_t k = 0; k < 4; ++k) {
                const auto gate = static_cast<Gate>(k);
                g.W(gate).noalias() += da[k] * s.x.transpose();
                g.V(gate).noalias() += da[k] * s.h_prev.transpose();
                g.b(gate).col(0) += da[k];
                dh_prev.noalias() += p.V(gate).transpose() * da[k];
                dx.noalias() += p.W(gate).transpose() * da[k];
            }
            dh_next[l] = std::move(dh_prev);
            dc_next[l] = (dc.array() * s.f.array()).matrix();
            dx_above = std::move(dx);
        }
    }
}

/// Loss and gradient over a batch of windows (mean over the batch).
/// Per-window gradients are summed in window order, so the result does not
/// depend on the worker count.
struct BatchResult {
    double loss = 0.0;
    std::vector<double> predictions;
    Gradients grads;
};

inline BatchResult batch_gradient(const ModelParams& m, std::span<const std::vector<double>> windows,
                                  std::span<const double> targets,
                                  std::size_t workers = thread_count())
{
    const std::size_t n = windows.size();
    if (n != targets.size() || n == 0) {
        fail(ErrorKind::dimension, "batch needs matching, nonempty windows and targets");
    }
    BatchResult r;
    r.grads = Gradients::zeros_like(m);
    std::vector<ForwardCache> caches(n);
    r.predictions.resize(n);
    parallel_for(
        n,
        [&](std::size_t i) {
            auto f = forward_window(m, windows[i]);
            r.predictions[i] = f.y;
            caches[i] = std::move(f.cache);
        },
        workers);
    const auto loss = compute_loss(r.predictions, targets, m.loss);
    r.loss = loss.loss;

    const std::size_t chunk = std::max<std::size_t>(1, std::min(workers, n));
    std::vector<Gradients> partial(chunk, Gradients::zeros_like(m));
    for (std::size_t base = 0; base < n; base += chunk) {
        const std::size_t count = std::min(chunk, n - base);
        parallel_for(
            count,
            [&](std::size_t j) {
                partial[j].set_zero();
                bptt_backward(m, caches[base + j], loss.grad[base + j], partial[j]);
                caches[base + j] = {};
            },
            workers);
        for (std::size_t j = 0; j < count; ++j) {
            r.grads += partial[j];
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    Gradients m; ///< first moments
    Gradients v; ///< second moments
    std::uint64_t t = 0;

    static AdamState zeros_like(const ModelParams& model)
    {
        return {Gradients::zeros_like(model), Gradients::zeros_like(model), 0};
    }
};

/// Bias-corrected Adam update applied blockwise. Non-finite gradients abort
/// before any state changes, naming the offending block.
inline void adam_step(ModelParams& model, const Gradients& g, AdamState& s, const TrainConfig& cfg)
{
    for_each_block(model, g, [](const std::string& name, const Matrix& p, const Matrix& gb) {
        if (p.rows() != gb.rows() || p.cols() != gb.cols()) {
            fail(ErrorKind::dimension, "gradient block " + name + " is not congruent with the model");
        }
        if (!gb.allFinite()) {
            fail(ErrorKind::numeric, "non-finite gradient in block " + name);
        }
    });
    s.t += 1;
    const double t = static_cast<double>(s.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const double lr = cfg.learning_rate;
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    const double eps = cfg.epsilon;

    auto update = [&](Matrix& p, const Matrix& gb, Matrix& mb, Matrix& vb) {
        mb.array() = b1 * mb.array() + (1.0 - b1) * gb.array();
        vb.array() = b2 * vb.array() + (1.0 - b2) * gb.array().square();
        p.array() -= lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (std::size_t k = 0; k < 12; ++k) {
            update(model.layers[l].blocks[k], g.layers[l].blocks[k], s.m.layers[l].blocks[k],
                   s.v.layers[l].blocks[k]);
        }
    }
    update(model.head, g.head, s.m.head, s.v.head);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_rmse = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t optimizer_steps = 0;
    double wall_seconds = 0.0;
    std::string model_path;
};

inline std::string report_to_csv(const TrainReport& r)
{
    std::string out = "epoch,train_loss,test_rmse\n";
    for (const auto& e : r.epochs) {
        out += std::to_string(e.epoch) + "," + text::format_double(e.train_loss) + "," +
               text::format_double(e.test_rmse) + "\n";
    }
    return out;
}

/// Scaled-space RMSE of one-step predictions over a window set.
inline double dataset_rmse(const ModelParams& m, const WindowedDataset& ds,
                           std::size_t workers = thread_count())
{
    std::vector<double> pred(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) { pred[i] = predict(m, ds.windows[i]); }, workers);
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double e = ds.targets[i] - pred[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(ds.size()));
}

struct TrainResult {
    ModelParams model;
    TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Chronological mini-batches (last one may be short), batch-mean gradients,
/// one Adam step per batch, test RMSE after each epoch. Deterministic for a
/// fixed (data, config, initial parameters).
inline TrainResult train(const SplitDataset& split, const TrainConfig& cfg, ModelParams initial,
                         const EpochCallback& on_epoch = {})
{
    cfg.validate();
    if (split.train.empty()) {
        fail(ErrorKind::insufficient_data, "training split is empty");
    }
    initial.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t workers = thread_count();

    TrainResult result{std::move(initial), {}};
    auto& model = result.model;
    auto state = AdamState::zeros_like(model);
    const auto& train = split.train;
    const std::size_t n = train.size();
    const std::span<const std::vector<double>> windows(train.windows);
    const std::span<const double> targets(train.targets);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - begin);
            auto batch = batch_gradient(model, windows.subspan(begin, count),
                                        targets.subspan(begin, count), workers);
            loss_sum += batch.loss * static_cast<double>(count);
            if (cfg.clip_norm > 0.0) {
                const double norm = std::sqrt(batch.grads.squared_norm());
                if (norm > cfg.clip_norm) {
                    batch.grads *= cfg.clip_norm / norm;
                }
            }
            adam_step(model, batch.grads, state, cfg);
            ++result.report.optimizer_steps;
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(n),
                        split.test.empty() ? std::nan("") : dataset_rmse(model, split.test, workers)};
        if (!std::isfinite(rec.train_loss)) {
            const std::string last =
                result.report.epochs.empty()
                    ? std::string("none")
                    : std::to_string(result.report.epochs.back().epoch) + " (train loss " +
                          text::format_double(result.report.epochs.back().train_loss) + ")";
            fail(ErrorKind::numeric, "training diverged at epoch " + std::to_string(epoch) +
                                         "; last good epoch: " + last);
        }
        result.report.epochs.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }
    }
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

/// As above, starting from init_params(cfg, cfg.seed).
inline TrainResult train(const SplitDataset& split, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {})
{
    cfg.validate();
    return train(split, cfg, init_params(cfg, cfg.seed), on_epoch);
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct BlockCheck {
    std::string block;
    double max_rel_error = 0.0;
    std::size_t worst_row = 0;
    std::size_t worst_col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<BlockCheck> blocks;

    double max_rel_error() const
    {
        double e = 0.0;
        for (const auto& b : blocks) {
            e = std::max(e, b.max_rel_error);
        }
        return e;
    }
};

inline double relative_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / denom;
}

namespace detail {

/// Loss evaluator for the finite-difference side of the gradient check.
/// Holds its own copy of the weights in extended precision so the central
/// difference is not swamped by 64-bit rounding of the loss (about 1e-16 * L,
/// i.e. 1e-10 absolute at eps = 1e-6), which would otherwise dominate
/// gradient components below ~1e-5.
class ExtendedLoss {
public:
    using Real = long double;
    using Mat = std::vector<Real>; ///< row-major

    explicit ExtendedLoss(const ModelParams& m) : loss_(m.loss)
    {
        auto copy = [](const Matrix& src) {
            Block b{static_cast<std::size_t>(src.rows()), static_cast<std::size_t>(src.cols()), {}};
            b.data.resize(b.rows * b.cols);
            for (std::size_t r = 0; r < b.rows; ++r) {
                for (std::size_t c = 0; c < b.cols; ++c) {
                    b.data[r * b.cols + c] = static_cast<Real>(src(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
                }
            }
            return b;
        };
        for (const auto& l : m.layers) {
            std::array<Block, 12> blocks;
            for (std::size_t k = 0; k < 12; ++k) {
                blocks[k] = copy(l.blocks[k]);
            }
            layers_.push_back(std::move(blocks));
        }
        head_ = copy(m.head);
    }

    /// Element (r, c) of block `index` in for_each_block order.
    Real& at(std::size_t index, std::size_t r, std::size_t c)
    {
        Block& b = index / 12 < layers_.size() ? layers_[index / 12][index % 12] : head_;
        return b.data[r * b.cols + c];
    }

    Real loss(std::span<const std::vector<double>> windows, std::span<const double> targets) const
    {
        Real sum = 0.0L;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const Real y = output(windows[i]);
            const Real t = static_cast<Real>(targets[i]);
            if (loss_ == LossMode::mse) {
                sum += (y - t) * (y - t);
            } else {
                const Real lo = static_cast<Real>(kBceClip);
                const Real q = std::clamp(y, lo, 1.0L - lo);
                const Real p = std::clamp(t, lo, 1.0L - lo);
                sum -= p * std::log(q) + (1.0L - p) * std::log(1.0L - q);
            }
        }
        return sum / static_cast<Real>(windows.size());
    }

private:
    struct Block {
        std::size_t rows = 0;
        std::size_t cols = 0;
        Mat data;
    };

    static Real sig(Real x) { return 1.0L / (1.0L + std::exp(-x)); }

    Real output(const std::vector<double>& window) const
    {
        const std::size_t L = layers_.size();
        std::vector<std::vector<Real>> h(L), c(L);
        for (std::size_t l = 0; l < L; ++l) {
            h[l].assign(layers_[l][0].rows, 0.0L);
            c[l].assign(layers_[l][0].rows, 0.0L);
        }
        for (double v : window) {
            std::vector<Real> x{static_cast<Real>(v)};
            for (std::size_t l = 0; l < L; ++l) {
                const auto& p = layers_[l];
                const std::size_t hid = p[0].rows;
                std::vector<Real> hn(hid), cn(hid);
                for (std::size_t j = 0; j < hid; ++j) {
                    Real pre[4];
                    for (std::size_t g = 0; g < 4; ++g) {
                        const Block& W = p[3 * g];
                        const Block& V = p[3 * g + 1];
                        Real a = p[3 * g + 2].data[j];
                        for (std::size_t k = 0; k < x.size(); ++k) a += W.data[j * W.cols + k] * x[k];
                        for (std::size_t k = 0; k < hid; ++k) a += V.data[j * V.cols + k] * h[l][k];
                        pre[g] = a;
                    }
                    cn[j] = sig(pre[1]) * c[l][j] + sig(pre[0]) * std::tanh(pre[3]);
                    hn[j] = sig(pre[2]) * std::tanh(cn[j]);
                }
                h[l] = hn;
                c[l] = cn;
                x = hn;
            }
        }
        Real z = 0.0L;
        for (std::size_t k = 0; k < head_.cols; ++k) z += head_.data[k] * h[L - 1][k];
        return loss_ == LossMode::bce ? sig(z) : z;
    }

    LossMode loss_;
    std::vector<std::array<Block, 12>> layers_;
    Block head_;
};

} // namespace detail

/// Compares the analytic (64-bit BPTT) batch gradient of `model` on
/// (windows, targets) with central differences (L(θ+ε) - L(θ-ε)) / 2ε for
/// every parameter. The finite-difference losses are evaluated in extended
/// precision by an independent scalar forward pass.
inline GradCheckReport grad_check(const ModelParams& model, std::span<const std::vector<double>> windows,
                                  std::span<const double> targets, double eps)
{
    if (!(eps > 0.0) || !std::isfinite(eps)) {
        fail(ErrorKind::config, "finite-difference step must be positive, got " + text::format_double(eps));
    }
    const auto analytic = batch_gradient(model, windows, targets, 1).grads;
    detail::ExtendedLoss probe(model);
    const auto step = static_cast<long double>(eps);
    GradCheckReport report;
    std::size_t index = 0;
    ModelParams shape = model;
    for_each_block(shape, analytic, [&](const std::string& name, const Matrix& p, const Matrix& g) {
        BlockCheck check{name};
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                auto& theta = probe.at(index, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                const long double saved = theta;
                theta = saved + step;
                const long double up = probe.loss(windows, targets);
                theta = saved - step;
                const long double down = probe.loss(windows, targets);
                theta = saved;
                const double numeric = static_cast<double>((up - down) / (2.0L * step));
                const double err = relative_error(g(r, c), numeric);
                if (err > check.max_rel_error || (r == 0 && c == 0)) {
                    check.max_rel_error = err;
                    check.worst_row = static_cast<std::size_t>(r);
                    check.worst_col = static_cast<std::size_t>(c);
                    check.analytic = g(r, c);
                    check.numeric = numeric;
                }
            }
        }
        report.blocks.push_back(check);
        ++index;
    });
    return report;
}

/// Deterministic fixture for the checker: a seeded model of the configured
/// shape and `batch` random windows with targets in (0, 1).
struct GradCheckFixture {
    ModelParams model;
    std::vector<std::vector<double>> windows;
    std::vector<double> targets;
};

inline GradCheckFixture make_grad_check_fixture(const TrainConfig& cfg, std::uint64_t seed,
                                                std::size_t batch = 4)
{
    GradCheckFixture fx;
    fx.model = init_params(cfg, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    // Nonzero biases so every block sees a generic operating point.
    for (auto& layer : fx.model.layers) {
        for (auto g : {Gate::input, Gate::forget, Gate::output, Gate::cell}) {
            for (Eigen::Index r = 0; r < layer.b(g).rows(); ++r) {
                layer.b(g)(r, 0) += 0.5 * (2.0 * detail::unit_uniform(rng) - 1.0);
            }
        }
    }
    for (std::size_t i = 0; i < batch; ++i) {
        std::vector<double> w(cfg.window);
        for (auto& v : w) {
            v = detail::unit_uniform(rng);
        }
        fx.windows.push_back(std::move(w));
        fx.targets.push_back(0.05 + 0.9 * detail::unit_uniform(rng));
    }
    return fx;
}

inline GradCheckReport grad_check(const TrainConfig& cfg, std::uint64_t seed, double eps)
{
    if (!(eps > 0.0) || !std::isfinite(eps)) {
        fail(ErrorKind::config, "finite-difference step must be positive, got " + text::format_double(eps));
    }
    const auto fx = make_grad_check_fixture(cfg, seed);
    return grad_check(fx.model, fx.windows, fx.targets, eps);
}

} // namespace prognost

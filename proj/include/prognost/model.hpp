// SPDX-License-Identifier: Apache-2.0
//
// Stacked LSTM with a linear regression head on the terminal hidden state.
//
//   I = σ(Wi x + Vi h + bi)        F = σ(Wf x + Vf h + bf)
//   O = σ(Wo x + Vo h + bo)        G = tanh(Wc x + Vc h + bc)
//   C = F ⊙ C_prev + I ⊙ G         H = O ⊙ tanh(C)
//   y = Wr H_last                  (σ(Wr H_last) when the head is in bce mode)
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "prognost/errors.hpp"
#include "prognost/io.hpp"
#include "prognost/preprocess.hpp"
#include "prognost/text.hpp"

namespace prognost {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LossMode { mse, bce };

inline std::string_view to_string(LossMode mode) noexcept
{
    return mode == LossMode::mse ? "mse" : "bce";
}

inline std::optional<LossMode> parse_loss_mode(std::string_view s)
{
    if (s == "mse") return LossMode::mse;
    if (s == "bce") return LossMode::bce;
    return std::nullopt;
}

enum class Gate : std::size_t { input = 0, forget = 1, output = 2, cell = 3 };

/// The twelve weight blocks of one LSTM layer, stored in file order
/// Wi Vi bi Wf Vf bf Wo Vo bo Wc Vc bc. Biases are hidden x 1 matrices.
/// Also used as the container for gradients and optimizer moments.
struct LayerParams {
    static constexpr std::array<std::string_view, 12> block_names = {
        "Wi", "Vi", "bi", "Wf", "Vf", "bf", "Wo", "Vo", "bo", "Wc", "Vc", "bc"};

    std::array<Matrix, 12> blocks;

    static LayerParams zeros(std::size_t input_size, std::size_t hidden_size)
    {
        LayerParams p;
        const auto in = static_cast<Eigen::Index>(input_size);
        const auto hid = static_cast<Eigen::Index>(hidden_size);
        for (std::size_t g = 0; g < 4; ++g) {
            p.blocks[3 * g] = Matrix::Zero(hid, in);
            p.blocks[3 * g + 1] = Matrix::Zero(hid, hid);
            p.blocks[3 * g + 2] = Matrix::Zero(hid, 1);
        }
        return p;
    }

    Matrix& W(Gate g) { return blocks[3 * static_cast<std::size_t>(g)]; }
    Matrix& V(Gate g) { return blocks[3 * static_cast<std::size_t>(g) + 1]; }
    Matrix& b(Gate g) { return blocks[3 * static_cast<std::size_t>(g) + 2]; }
    const Matrix& W(Gate g) const { return blocks[3 * static_cast<std::size_t>(g)]; }
    const Matrix& V(Gate g) const { return blocks[3 * static_cast<std::size_t>(g) + 1]; }
    const Matrix& b(Gate g) const { return blocks[3 * static_cast<std::size_t>(g) + 2]; }

    std::size_t input_size() const { return static_cast<std::size_t>(blocks[0].cols()); }
    std::size_t hidden_size() const { return static_cast<std::size_t>(blocks[0].rows()); }

    void set_zero()
    {
        for (auto& b : blocks) {
            b.setZero();
        }
    }
};

/// Layer shape checks: W is hidden x input, V hidden x hidden, b hidden x 1.
inline void validate_layer(const LayerParams& p, std::size_t input_size, std::size_t hidden_size,
                           std::string_view label)
{
    const auto in = static_cast<Eigen::Index>(input_size);
    const auto hid = static_cast<Eigen::Index>(hidden_size);
    for (std::size_t g = 0; g < 4; ++g) {
        const std::array<std::pair<Eigen::Index, Eigen::Index>, 3> shapes = {
            std::pair{hid, in}, std::pair{hid, hid}, std::pair{hid, Eigen::Index{1}}};
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& m = p.blocks[3 * g + k];
            if (m.rows() != shapes[k].first || m.cols() != shapes[k].second) {
                fail(ErrorKind::dimension,
                     std::string(label) + "." + std::string(LayerParams::block_names[3 * g + k]) +
                         " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", expected " + std::to_string(shapes[k].first) + "x" +
                         std::to_string(shapes[k].second));
            }
        }
    }
}

struct ModelParams {
    std::size_t input_dim = 1;
    std::vector<LayerParams> layers;
    Matrix head; ///< Wr, output x last hidden (output = 1)
    LossMode loss = LossMode::mse;
    std::optional<MinMaxScaler> scaler;

    std::vector<std::size_t> hidden_dims() const
    {
        std::vector<std::size_t> dims;
        for (const auto& l : layers) {
            dims.push_back(l.hidden_size());
        }
        return dims;
    }

    std::size_t parameter_count() const
    {
        std::size_t n = static_cast<std::size_t>(head.size());
        for (const auto& l : layers) {
            for (const auto& b : l.blocks) {
                n += static_cast<std::size_t>(b.size());
            }
        }
        return n;
    }

    /// Checks the dimension chain: layer l consumes layer l-1's hidden state,
    /// the head consumes the last hidden state.
    void validate() const
    {
        if (layers.empty()) {
            fail(ErrorKind::dimension, "model has no layers");
        }
        if (input_dim == 0) {
            fail(ErrorKind::dimension, "model input dimension is zero");
        }
        std::size_t in = input_dim;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::size_t hid = layers[l].hidden_size();
            if (hid == 0) {
                fail(ErrorKind::dimension, "layer " + std::to_string(l + 1) + " has zero hidden units");
            }
            validate_layer(layers[l], in, hid, "layer" + std::to_string(l + 1));
            in = hid;
        }
        if (head.rows() != 1 || head.cols() != static_cast<Eigen::Index>(in)) {
            fail(ErrorKind::dimension, "head Wr is " + std::to_string(head.rows()) + "x" +
                                           std::to_string(head.cols()) + ", expected 1x" +
                                           std::to_string(in));
        }
    }

    bool operator==(const ModelParams& o) const
    {
        if (input_dim != o.input_dim || loss != o.loss || scaler != o.scaler ||
            layers.size() != o.layers.size() || head.rows() != o.head.rows() ||
            head.cols() != o.head.cols() || head != o.head) {
            return false;
        }
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (std::size_t k = 0; k < 12; ++k) {
                const auto& a = layers[l].blocks[k];
                const auto& b = o.layers[l].blocks[k];
                if (a.rows() != b.rows() || a.cols() != b.cols() || a != b) {
                    return false;
                }
            }
        }
        return true;
    }
};

/// Visits every weight block of two congruent containers (model, gradients,
/// moments) as fn(name, a_block, b_block). Order: layers in stack order with
/// blocks in file order, then the head.
template <typename A, typename B, typename Fn>
void for_each_block(A& a, B& b, Fn&& fn)
{
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t k = 0; k < 12; ++k) {
            const std::string name =
                "layer" + std::to_string(l + 1) + "." + std::string(LayerParams::block_names[k]);
            fn(name, a.layers[l].blocks[k], b.layers[l].blocks[k]);
        }
    }
    fn(std::string("Wr"), a.head, b.head);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

struct ModelShape {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_dims{128, 64};
    LossMode loss = LossMode::mse;
};

namespace detail {

/// 53-bit uniform in [0, 1) from one mt19937_64 draw.
inline double unit_uniform(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void fill_glorot(Matrix& m, std::mt19937_64& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = (2.0 * unit_uniform(rng) - 1.0) * limit;
        }
    }
}

} // namespace detail

/// Glorot-uniform W/V blocks and head, zero biases except the forget gate
/// (1.0). The generator is std::mt19937_64 seeded with `seed`; blocks are
/// filled row-major in the order layer by layer Wi Vi Wf Vf Wo Vo Wc Vc, then Wr.
inline ModelParams init_params(const ModelShape& shape, std::uint64_t seed)
{
    if (shape.hidden_dims.empty()) {
        fail(ErrorKind::config, "at least one hidden layer is required");
    }
    if (shape.input_dim == 0) {
        fail(ErrorKind::config, "input dimension must be positive");
    }
    for (auto d : shape.hidden_dims) {
        if (d == 0) {
            fail(ErrorKind::config, "hidden layer sizes must be positive");
        }
    }
    std::mt19937_64 rng(seed);
    ModelParams m;
    m.input_dim = shape.input_dim;
    m.loss = shape.loss;
    std::size_t in = shape.input_dim;
    for (auto hid : shape.hidden_dims) {
        auto layer = LayerParams::zeros(in, hid);
        for (auto g : {Gate::input, Gate::forget, Gate::output, Gate::cell}) {
            detail::fill_glorot(layer.W(g), rng);
            detail::fill_glorot(layer.V(g), rng);
        }
        layer.b(Gate::forget).setOnes();
        m.layers.push_back(std::move(layer));
        in = hid;
    }
    m.head = Matrix::Zero(1, static_cast<Eigen::Index>(in));
    detail::fill_glorot(m.head, rng);
    return m;
}

/// All-zero parameters of the given shape (forget bias included).
inline ModelParams zero_params(const ModelShape& shape)
{
    ModelParams m;
    m.input_dim = shape.input_dim;
    m.loss = shape.loss;
    std::size_t in = shape.input_dim;
    for (auto hid : shape.hidden_dims) {
        m.layers.push_back(LayerParams::zeros(in, hid));
        in = hid;
    }
    m.head = Matrix::Zero(1, static_cast<Eigen::Index>(in));
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

inline double sigmoid(double x) noexcept
{
    return 1.0 / (1.0 + std::exp(-x));
}

/// Intermediates of one cell step, kept for the backward pass.
struct CellCache {
    Vector x, h_prev, c_prev;
    Vector i, f, o, g; ///< gate activations; g is the tanh candidate
    Vector c, tanh_c, h;
};

/// One cell step. Returns the cache; new state is cache.h / cache.c.
inline CellCache lstm_cell_forward(const LayerParams& p, const Vector& x, const Vector& h_prev,
                                   const Vector& c_prev)
{
    const auto hid = static_cast<Eigen::Index>(p.hidden_size());
    if (x.size() != static_cast<Eigen::Index>(p.input_size()) || h_prev.size() != hid ||
        c_prev.size() != hid) {
        fail(ErrorKind::dimension, "cell step: input " + std::to_string(x.size()) + "/state " +
                                       std::to_string(h_prev.size()) + "," +
                                       std::to_string(c_prev.size()) + " vs layer " +
                                       std::to_string(p.input_size()) + "->" +
                                       std::to_string(p.hidden_size()));
    }
    CellCache s;
    s.x = x;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    auto pre = [&](Gate g) -> Vector {
        return p.W(g) * x + p.V(g) * h_prev + p.b(g).col(0);
    };
    s.i = pre(Gate::input).unaryExpr(&sigmoid);
    s.f = pre(Gate::forget).unaryExpr(&sigmoid);
    s.o = pre(Gate::output).unaryExpr(&sigmoid);
    s.g = pre(Gate::cell).array().tanh();
    s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh();
    s.h = s.o.cwiseProduct(s.tanh_c);
    return s;
}

/// Per-step, per-layer caches of one window plus the head output.
struct ForwardCache {
    std::vector<std::vector<CellCache>> steps; ///< [step][layer]
    double z = 0.0;                            ///< head pre-activation
    double y = 0.0;                            ///< prediction
};

struct ForwardResult {
    double y = 0.0;
    ForwardCache cache;
};

/// Runs the window through the stack from a zero state, one scalar input per
/// step; the head reads the top layer's hidden state after the last step.
inline ForwardResult forward_window(const ModelParams& m, std::span<const double> window)
{
    if (window.empty()) {
        fail(ErrorKind::dimension, "empty input window");
    }
    if (m.input_dim != 1) {
        fail(ErrorKind::dimension, "scalar windows need input dimension 1, model has " +
                                       std::to_string(m.input_dim));
    }
    const std::size_t L = m.layers.size();
    std::vector<Vector> h(L), c(L);
    for (std::size_t l = 0; l < L; ++l) {
        const auto hid = static_cast<Eigen::Index>(m.layers[l].hidden_size());
        h[l] = Vector::Zero(hid);
        c[l] = Vector::Zero(hid);
    }
    ForwardResult r;
    r.cache.steps.resize(window.size());
    Vector x(1);
    for (std::size_t t = 0; t < window.size(); ++t) {
        x(0) = window[t];
        auto& step = r.cache.steps[t];
        step.reserve(L);
        const Vector* input = &x;
        for (std::size_t l = 0; l < L; ++l) {
            step.push_back(lstm_cell_forward(m.layers[l], *input, h[l], c[l]));
            h[l] = step.back().h;
            c[l] = step.back().c;
            input = &step.back().h;
        }
    }
    r.cache.z = m.head.row(0).dot(h[L - 1]);
    r.cache.y = m.loss == LossMode::bce ? sigmoid(r.cache.z) : r.cache.z;
    r.y = r.cache.y;
    return r;
}

inline double predict(const ModelParams& m, std::span<const double> window)
{
    return forward_window(m, window).y;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr std::string_view kModelMagic = "LSTMPROG";
inline constexpr int kModelVersion = 1;

namespace detail {

inline void append_block(std::string& out, std::string_view name, const Matrix& m)
{
    out += "block ";
    out += name;
    out += ' ';
    out += std::to_string(m.rows());
    out += ' ';
    out += std::to_string(m.cols());
    out += '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c > 0) {
                out += ' ';
            }
            out += text::format_double(m(r, c));
        }
        out += '\n';
    }
}

} // namespace detail

inline std::string serialize_model(const ModelParams& m)
{
    m.validate();
    std::string out;
    out += std::string(kModelMagic) + " v" + std::to_string(kModelVersion) + "\n";
    out += "input " + std::to_string(m.input_dim) + " layers " + std::to_string(m.layers.size()) +
           " hidden";
    for (auto d : m.hidden_dims()) {
        out += ' ' + std::to_string(d);
    }
    out += " output 1 loss " + std::string(to_string(m.loss)) + "\n";
    if (m.scaler) {
        out += "scaler " + text::format_double(m.scaler->min) + " " +
               text::format_double(m.scaler->max) + "\n";
    }
    for (const auto& layer : m.layers) {
        for (std::size_t k = 0; k < 12; ++k) {
            detail::append_block(out, LayerParams::block_names[k], layer.blocks[k]);
        }
    }
    detail::append_block(out, "Wr", m.head);
    return out;
}

namespace detail {

class ModelReader {
public:
    explicit ModelReader(std::string_view content) : reader_(content) {}

    std::vector<std::string_view> next_tokens(std::string_view what)
    {
        std::string_view line;
        if (!reader_.next(line)) {
            fail(ErrorKind::corruption, "unexpected end of file at byte " +
                                            std::to_string(reader_.offset()) + " while reading " +
                                            std::string(what));
        }
        return text::split_whitespace(line);
    }

    [[noreturn]] void corrupt(const std::string& msg) const
    {
        fail(ErrorKind::corruption, "line " + std::to_string(reader_.line_number()) + " (byte " +
                                        std::to_string(reader_.line_offset()) + "): " + msg);
    }

    std::size_t parse_count(std::string_view tok)
    {
        const auto v = text::parse_int(tok);
        if (!v || *v < 0) {
            corrupt("expected a count, found '" + std::string(tok) + "'");
        }
        return static_cast<std::size_t>(*v);
    }

    Matrix read_block(std::string_view name, std::size_t rows, std::size_t cols)
    {
        const auto head = next_tokens("block " + std::string(name));
        if (head.size() != 4 || head[0] != "block") {
            corrupt("expected 'block " + std::string(name) + " <rows> <cols>'");
        }
        if (head[1] != name) {
            corrupt("expected block " + std::string(name) + ", found " + std::string(head[1]));
        }
        if (parse_count(head[2]) != rows || parse_count(head[3]) != cols) {
            corrupt("block " + std::string(name) + " has shape " + std::string(head[2]) + "x" +
                    std::string(head[3]) + ", header implies " + std::to_string(rows) + "x" +
                    std::to_string(cols));
        }
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows; ++r) {
            const auto toks = next_tokens("block " + std::string(name));
            if (toks.size() != cols) {
                corrupt("block " + std::string(name) + " row " + std::to_string(r) + " has " +
                        std::to_string(toks.size()) + " values, expected " + std::to_string(cols));
            }
            for (std::size_t c = 0; c < cols; ++c) {
                const auto v = text::parse_double(toks[c]);
                if (!v || !std::isfinite(*v)) {
                    corrupt("bad value '" + std::string(toks[c]) + "' in block " + std::string(name));
                }
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
            }
        }
        return m;
    }

    bool at_end()
    {
        std::string_view line;
        while (reader_.next(line)) {
            if (!text::trim(line).empty()) {
                return false;
            }
        }
        return true;
    }

    text::LineReader& lines() { return reader_; }

private:
    text::LineReader reader_;
};

} // namespace detail

inline ModelParams parse_model(std::string_view content)
{
    detail::ModelReader in(content);
    const auto magic = in.next_tokens("magic line");
    if (magic.size() != 2 || magic[0] != kModelMagic || magic[1].size() < 2 || magic[1][0] != 'v') {
        fail(ErrorKind::format, "not a model file: expected '" + std::string(kModelMagic) + " v" +
                                    std::to_string(kModelVersion) + "' on line 1");
    }
    const auto version = text::parse_int(magic[1].substr(1));
    if (!version) {
        fail(ErrorKind::format, "unreadable model version '" + std::string(magic[1]) + "'");
    }
    if (*version != kModelVersion) {
        fail(ErrorKind::version, "model file version " + std::to_string(*version) +
                                     " is not supported (expected " + std::to_string(kModelVersion) +
                                     ")");
    }

    const auto hdr = in.next_tokens("header");
    // input <d> layers <n> hidden <k1..kn> output <z> loss <mode>
    if (hdr.size() < 6 || hdr[0] != "input" || hdr[2] != "layers" || hdr[4] != "hidden") {
        in.corrupt("malformed header line");
    }
    ModelParams m;
    m.input_dim = in.parse_count(hdr[1]);
    const std::size_t n_layers = in.parse_count(hdr[3]);
    if (n_layers == 0 || hdr.size() != 5 + n_layers + 4 || hdr[5 + n_layers] != "output" ||
        hdr[7 + n_layers] != "loss") {
        in.corrupt("malformed header line");
    }
    std::vector<std::size_t> dims;
    for (std::size_t l = 0; l < n_layers; ++l) {
        dims.push_back(in.parse_count(hdr[5 + l]));
        if (dims.back() == 0) {
            in.corrupt("zero-sized hidden layer");
        }
    }
    if (in.parse_count(hdr[6 + n_layers]) != 1) {
        in.corrupt("only a single output is supported");
    }
    const auto mode = parse_loss_mode(hdr[8 + n_layers]);
    if (!mode) {
        in.corrupt("unknown loss mode '" + std::string(hdr[8 + n_layers]) + "'");
    }
    m.loss = *mode;
    if (m.input_dim == 0) {
        in.corrupt("zero input dimension");
    }

    // Optional scaler line, then blocks. Peek by saving the reader position.
    auto saved = in.lines();
    auto toks = in.next_tokens("scaler or first block");
    if (!toks.empty() && toks[0] == "scaler") {
        if (toks.size() != 3) {
            in.corrupt("scaler line needs min and max");
        }
        const auto lo = text::parse_double(toks[1]);
        const auto hi = text::parse_double(toks[2]);
        if (!lo || !hi || !std::isfinite(*lo) || !std::isfinite(*hi) || !(*hi > *lo)) {
            in.corrupt("invalid scaler range");
        }
        m.scaler = MinMaxScaler{*lo, *hi};
    } else {
        in.lines() = saved;
    }

    std::size_t input = m.input_dim;
    for (auto hid : dims) {
        LayerParams layer;
        for (std::size_t k = 0; k < 12; ++k) {
            const std::size_t kind = k % 3;
            const std::size_t cols = kind == 0 ? input : kind == 1 ? hid : 1;
            layer.blocks[k] = in.read_block(LayerParams::block_names[k], hid, cols);
        }
        m.layers.push_back(std::move(layer));
        input = hid;
    }
    m.head = in.read_block("Wr", 1, input);
    if (!content.ends_with('\n')) {
        fail(ErrorKind::corruption, "missing final newline: file truncated at byte " +
                                        std::to_string(content.size()));
    }
    if (!in.at_end()) {
        in.corrupt("trailing content after the last block");
    }
    m.validate();
    return m;
}

inline void save_model(const ModelParams& m, const std::filesystem::path& path)
{
    io::write_file(path, serialize_model(m));
}

inline ModelParams load_model(const std::filesystem::path& path)
{
    return parse_model(io::read_file(path));
}

} // namespace prognost

#pragma once

// Patched decoder-only forecaster.
//
// A context of log prices is cut into input patches of `input_patch_len`
// points (left-padded so the newest point closes the last patch), normalized
// by the statistics of the first patch, embedded by a residual MLP, run
// through a stack of pre-norm causal transformer layers and mapped back to
// `output_patch_len` future values per patch position by a residual MLP head.
//
// Every learnable tensor lives in one flat buffer described by a
// ParameterLayout, so the optimizer, gradient checks and the parameter file
// all work on plain spans of doubles.

#include "finfm/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace finfm {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ColVec = Eigen::VectorXd;

struct ModelConfig {
    int input_patch_len = 32;
    int output_patch_len = 128;
    int num_layers = 4;
    int hidden_dim = 128;
    int num_heads = 0;  // 0: hidden_dim / 64, at least 1
    int ffn_dim = 0;    // 0: 4 * hidden_dim
    int max_context = 512;

    int heads() const { return num_heads > 0 ? num_heads : std::max(1, hidden_dim / 64); }
    int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden_dim; }
    int max_patches() const { return max_context / input_patch_len; }

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
        if (input_patch_len <= 0) fail("input_patch_len must be positive");
        if (output_patch_len <= 0) fail("output_patch_len must be positive");
        if (num_layers <= 0) fail("num_layers must be positive");
        if (hidden_dim <= 0) fail("hidden_dim must be positive");
        if (max_context <= 0) fail("max_context must be positive");
        if (num_heads < 0 || ffn_dim < 0) fail("num_heads/ffn_dim must be non-negative");
        if (output_patch_len <= input_patch_len) fail("output_patch_len must exceed input_patch_len");
        if (max_context % input_patch_len != 0) fail("max_context must be divisible by input_patch_len");
        if (hidden_dim % heads() != 0) fail("num_heads must divide hidden_dim");
    }

    bool operator==(const ModelConfig&) const = default;
};

struct TensorSpec {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return rows * cols; }
};

/// Ordered tensor table. Row vectors (biases, norm gains) have rows == 1.
class ParameterLayout {
public:
    explicit ParameterLayout(const ModelConfig& c) {
        const auto li = static_cast<std::size_t>(c.input_patch_len);
        const auto lo = static_cast<std::size_t>(c.output_patch_len);
        const auto d = static_cast<std::size_t>(c.hidden_dim);
        const auto f = static_cast<std::size_t>(c.ffn());
        add("input.hidden.weight", 2 * li, d);
        add("input.hidden.bias", 1, d);
        add("input.output.weight", d, d);
        add("input.skip.weight", 2 * li, d);
        add("input.bias", 1, d);
        add("position.embedding", static_cast<std::size_t>(c.max_patches()), d);
        for (int l = 0; l < c.num_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            add(p + "attn_norm.gain", 1, d);
            add(p + "attn_norm.bias", 1, d);
            add(p + "query.weight", d, d);
            add(p + "query.bias", 1, d);
            add(p + "key.weight", d, d);
            add(p + "key.bias", 1, d);
            add(p + "value.weight", d, d);
            add(p + "value.bias", 1, d);
            add(p + "attn_out.weight", d, d);
            add(p + "attn_out.bias", 1, d);
            add(p + "ffn_norm.gain", 1, d);
            add(p + "ffn_norm.bias", 1, d);
            add(p + "ffn_in.weight", d, f);
            add(p + "ffn_in.bias", 1, f);
            add(p + "ffn_out.weight", f, d);
            add(p + "ffn_out.bias", 1, d);
        }
        add("head.hidden.weight", d, d);
        add("head.hidden.bias", 1, d);
        add("head.output.weight", d, lo);
        add("head.skip.weight", d, lo);
        add("head.bias", 1, lo);
    }

    const std::vector<TensorSpec>& tensors() const noexcept { return tensors_; }
    std::size_t total() const noexcept { return total_; }

    const TensorSpec& find(const std::string& name) const {
        for (const auto& t : tensors_)
            if (t.name == name) return t;
        throw Error(ErrorCode::ParameterFile, "no tensor named " + name);
    }

private:
    void add(std::string name, std::size_t rows, std::size_t cols) {
        tensors_.push_back({std::move(name), rows, cols, total_});
        total_ += rows * cols;
    }

    std::vector<TensorSpec> tensors_;
    std::size_t total_ = 0;
};

inline std::size_t parameter_count(const ModelConfig& c) { return ParameterLayout(c).total(); }

/// Flat parameter or gradient storage. A fixed base alignment keeps
/// Eigen's vectorized kernels, and so the rounding, independent of where
/// the allocator happens to place the buffer.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// All learnable parameters plus the config that shapes them.
struct ForecasterState {
    ModelConfig config;
    ParamVector params;
    std::uint64_t init_seed = 0;
};

namespace detail {

template <bool Const>
using MatMap = Eigen::Map<std::conditional_t<Const, const Mat, Mat>>;
template <bool Const>
using VecMap = Eigen::Map<std::conditional_t<Const, const RowVec, RowVec>>;
template <bool Const>
using Ptr = std::conditional_t<Const, const double*, double*>;

template <bool Const>
class TensorCursor {
public:
    TensorCursor(Ptr<Const> base, const ParameterLayout& layout) : base_(base), layout_(layout) {}

    MatMap<Const> mat() {
        const auto& t = next();
        return MatMap<Const>(base_ + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
    }
    VecMap<Const> vec() {
        const auto& t = next();
        return VecMap<Const>(base_ + t.offset, static_cast<Eigen::Index>(t.cols));
    }

private:
    const TensorSpec& next() { return layout_.tensors().at(index_++); }

    Ptr<Const> base_;
    const ParameterLayout& layout_;
    std::size_t index_ = 0;
};

template <bool Const>
struct LayerViews {
    explicit LayerViews(TensorCursor<Const>& c)
        : norm1_g(c.vec()), norm1_b(c.vec()), wq(c.mat()), bq(c.vec()), wk(c.mat()), bk(c.vec()), wv(c.mat()),
          bv(c.vec()), wo(c.mat()), bo(c.vec()), norm2_g(c.vec()), norm2_b(c.vec()), w1(c.mat()), b1(c.vec()),
          w2(c.mat()), b2(c.vec()) {}

    VecMap<Const> norm1_g, norm1_b;
    MatMap<Const> wq;
    VecMap<Const> bq;
    MatMap<Const> wk;
    VecMap<Const> bk;
    MatMap<Const> wv;
    VecMap<Const> bv;
    MatMap<Const> wo;
    VecMap<Const> bo;
    VecMap<Const> norm2_g, norm2_b;
    MatMap<Const> w1;
    VecMap<Const> b1;
    MatMap<Const> w2;
    VecMap<Const> b2;
};

/// Typed views over a flat parameter (or gradient) buffer.
template <bool Const>
struct ModelViews {
    ModelViews(Ptr<Const> base, const ModelConfig& config) : ModelViews(base, ParameterLayout(config), config) {}

    ModelViews(Ptr<Const> base, const ParameterLayout& layout, const ModelConfig& config)
        : cursor(base, layout), in_w1(cursor.mat()), in_b1(cursor.vec()), in_w2(cursor.mat()),
          in_wskip(cursor.mat()), in_b(cursor.vec()), pos(cursor.mat()), layers(make_layers(config.num_layers)),
          out_w1(cursor.mat()), out_b1(cursor.vec()), out_w2(cursor.mat()), out_wskip(cursor.mat()),
          out_b(cursor.vec()) {}

    TensorCursor<Const> cursor;
    MatMap<Const> in_w1;
    VecMap<Const> in_b1;
    MatMap<Const> in_w2;
    MatMap<Const> in_wskip;
    VecMap<Const> in_b;
    MatMap<Const> pos;
    std::vector<LayerViews<Const>> layers;
    MatMap<Const> out_w1;
    VecMap<Const> out_b1;
    MatMap<Const> out_w2;
    MatMap<Const> out_wskip;
    VecMap<Const> out_b;

private:
    std::vector<LayerViews<Const>> make_layers(int n) {
        std::vector<LayerViews<Const>> v;
        v.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) v.emplace_back(cursor);
        return v;
    }
};

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
constexpr double kNormEps = 1e-6;

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

inline double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

inline Mat gelu(const Mat& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

inline void layer_norm(const Mat& x, const Eigen::Ref<const RowVec>& gain, const Eigen::Ref<const RowVec>& bias,
                       Mat& xhat, ColVec& rstd, Mat& y) {
    const auto n = x.rows();
    const auto d = static_cast<double>(x.cols());
    xhat.resize(n, x.cols());
    rstd.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = x.row(r).sum() / d;
        const double var = (x.row(r).array() - mean).square().sum() / d;
        rstd(r) = 1.0 / std::sqrt(var + kNormEps);
        xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
    }
    y = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
}

/// Returns d(input); accumulates gain/bias gradients.
inline Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const ColVec& rstd,
                               const Eigen::Ref<const RowVec>& gain, Eigen::Ref<RowVec> dgain,
                               Eigen::Ref<RowVec> dbias) {
    dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
    dbias += dy.colwise().sum();
    const Mat dxhat = (dy.array().rowwise() * gain.array()).matrix();
    const auto d = static_cast<double>(dy.cols());
    Mat dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double m1 = dxhat.row(r).sum() / d;
        const double m2 = dxhat.row(r).dot(xhat.row(r)) / d;
        dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * rstd(r);
    }
    return dx;
}

} // namespace detail

/// Initial weights: N(0, 1/fan_in) for projections, residual-branch outputs
/// scaled by 1/sqrt(2 * layers), the forecast head scaled down by 10.
inline ForecasterState init_random(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const ParameterLayout layout(config);
    ForecasterState s{config, ParamVector(layout.total(), 0.0), seed};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double residual_scale = 1.0 / std::sqrt(2.0 * config.num_layers);
    for (const auto& t : layout.tensors()) {
        const auto& n = t.name;
        auto ends_with = [&](const char* suffix) { return n.ends_with(suffix); };
        double scale = 0.0;
        if (ends_with(".gain")) {
            std::fill_n(s.params.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), 1.0);
            continue;
        } else if (ends_with("bias")) {
            continue;
        } else if (n == "position.embedding") {
            scale = 0.02;
        } else {
            scale = 1.0 / std::sqrt(static_cast<double>(t.rows));
            if (ends_with("attn_out.weight") || ends_with("ffn_out.weight")) scale *= residual_scale;
            if (n.starts_with("head.output") || n.starts_with("head.skip")) scale *= 0.1;
        }
        for (std::size_t i = 0; i < t.size(); ++i) s.params[t.offset + i] = scale * normal(rng);
    }
    return s;
}

/// Patched view of one context. `pad` marks padding points (1.0) inside a
/// patch; `masked[j]` is true when patch j holds no real data at all.
struct PatchSequence {
    Mat values;  // N x input_patch_len, padding points hold 0
    Mat pad;     // N x input_patch_len, 1 = padding
    std::vector<bool> masked;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }

    /// Concatenation of the real (non-padding) points, in order.
    std::vector<double> unmasked_values() const {
        std::vector<double> out;
        for (Eigen::Index r = 0; r < values.rows(); ++r)
            for (Eigen::Index c = 0; c < values.cols(); ++c)
                if (pad(r, c) == 0.0) out.push_back(values(r, c));
        return out;
    }
};

/// Left-pads `z` to a multiple of the input patch length.
inline PatchSequence patchify(std::span<const double> z, const ModelConfig& config) {
    if (z.empty()) throw Error(ErrorCode::SeriesTooShort, "empty context");
    if (z.size() > static_cast<std::size_t>(config.max_context))
        throw Error(ErrorCode::ContextTooLong, "context of " + std::to_string(z.size()) + " exceeds max_context " +
                                                   std::to_string(config.max_context));
    const auto li = static_cast<std::size_t>(config.input_patch_len);
    const std::size_t n = (z.size() + li - 1) / li;
    const std::size_t padded = n * li - z.size();
    PatchSequence ps;
    ps.values = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(li));
    ps.pad = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(li));
    ps.masked.assign(n, false);
    for (std::size_t i = 0; i < n * li; ++i) {
        const auto r = static_cast<Eigen::Index>(i / li);
        const auto c = static_cast<Eigen::Index>(i % li);
        if (i < padded) {
            ps.pad(r, c) = 1.0;
        } else {
            const double v = z[i - padded];
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteActivation, "non-finite context value");
            ps.values(r, c) = v;
        }
    }
    for (std::size_t j = 0; j < n; ++j) ps.masked[j] = (ps.pad.row(static_cast<Eigen::Index>(j)).minCoeff() == 1.0);
    return ps;
}

/// Everything the backward pass needs from one forward pass.
struct ForwardCache {
    struct Layer {
        Mat x_in, xhat1, u1;
        ColVec rstd1;
        Mat q, k, v;
        std::vector<Mat> probs;
        Mat ctx;
        Mat x_mid, xhat2, u2;
        ColVec rstd2;
        Mat f1, g2;
    };
    Mat x0, a_in, g_in;
    std::vector<Layer> layers;
    Mat h, a_out, g_out;
    std::vector<bool> masked;
    double mu = 0.0;
    double sigma = 1.0;
};

/// Shift/scale from the real points of the first patch that has any.
/// A near-constant first patch falls back to unit scale.
inline std::pair<double, double> first_patch_stats(const PatchSequence& ps) {
    for (Eigen::Index r = 0; r < ps.values.rows(); ++r) {
        double sum = 0.0, sq = 0.0;
        int count = 0;
        for (Eigen::Index c = 0; c < ps.values.cols(); ++c)
            if (ps.pad(r, c) == 0.0) {
                sum += ps.values(r, c);
                ++count;
            }
        if (count == 0) continue;
        const double mean = sum / count;
        for (Eigen::Index c = 0; c < ps.values.cols(); ++c)
            if (ps.pad(r, c) == 0.0) sq += (ps.values(r, c) - mean) * (ps.values(r, c) - mean);
        double sigma = std::sqrt(sq / count);
        if (sigma < 1e-6) sigma = 1.0;
        return {mean, sigma};
    }
    return {0.0, 1.0};
}

/// Causal forward pass: row j of the result is the forecast of the
/// `output_patch_len` values that follow patch j, in input units.
inline Mat forward(const ForecasterState& state, const PatchSequence& ps, ForwardCache* cache = nullptr) {
    const ModelConfig& cfg = state.config;
    const detail::ModelViews<true> w(state.params.data(), cfg);
    const auto n = static_cast<Eigen::Index>(ps.size());
    const auto li = cfg.input_patch_len;
    const int heads = cfg.heads();
    const int dh = cfg.hidden_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (n > w.pos.rows()) throw Error(ErrorCode::ContextTooLong, "too many patches");

    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.masked = ps.masked;
    std::tie(fc.mu, fc.sigma) = first_patch_stats(ps);

    fc.x0.resize(n, 2 * li);
    fc.x0.leftCols(li) = ((ps.values.array() - fc.mu) / fc.sigma * (1.0 - ps.pad.array())).matrix();
    fc.x0.rightCols(li) = ps.pad;

    fc.a_in.noalias() = fc.x0 * w.in_w1;
    fc.a_in.rowwise() += w.in_b1;
    fc.g_in = detail::gelu(fc.a_in);
    Mat h(n, cfg.hidden_dim);
    h.noalias() = fc.g_in * w.in_w2;
    h.noalias() += fc.x0 * w.in_wskip;
    h.rowwise() += w.in_b;
    h += w.pos.topRows(n);

    fc.layers.resize(static_cast<std::size_t>(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l) {
        const auto& lw = w.layers[static_cast<std::size_t>(l)];
        auto& lc = fc.layers[static_cast<std::size_t>(l)];
        lc.x_in = h;
        detail::layer_norm(h, lw.norm1_g, lw.norm1_b, lc.xhat1, lc.rstd1, lc.u1);
        lc.q.noalias() = lc.u1 * lw.wq;
        lc.q.rowwise() += lw.bq;
        lc.k.noalias() = lc.u1 * lw.wk;
        lc.k.rowwise() += lw.bk;
        lc.v.noalias() = lc.u1 * lw.wv;
        lc.v.rowwise() += lw.bv;
        lc.ctx.resize(n, cfg.hidden_dim);
        lc.probs.resize(static_cast<std::size_t>(heads));
        for (int hd = 0; hd < heads; ++hd) {
            const auto qh = lc.q.middleCols(hd * dh, dh);
            const auto kh = lc.k.middleCols(hd * dh, dh);
            Mat s = (qh * kh.transpose()) * scale;
            Mat& p = lc.probs[static_cast<std::size_t>(hd)];
            p = Mat::Zero(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index c = 0; c <= r; ++c)
                    if (!ps.masked[static_cast<std::size_t>(c)] || c == r) mx = std::max(mx, s(r, c));
                double z = 0.0;
                for (Eigen::Index c = 0; c <= r; ++c)
                    if (!ps.masked[static_cast<std::size_t>(c)] || c == r) {
                        p(r, c) = std::exp(s(r, c) - mx);
                        z += p(r, c);
                    }
                p.row(r).head(r + 1) /= z;
            }
            lc.ctx.middleCols(hd * dh, dh).noalias() = p * lc.v.middleCols(hd * dh, dh);
        }
        h.noalias() += lc.ctx * lw.wo;
        h.rowwise() += lw.bo;
        lc.x_mid = h;
        detail::layer_norm(h, lw.norm2_g, lw.norm2_b, lc.xhat2, lc.rstd2, lc.u2);
        lc.f1.noalias() = lc.u2 * lw.w1;
        lc.f1.rowwise() += lw.b1;
        lc.g2 = detail::gelu(lc.f1);
        h.noalias() += lc.g2 * lw.w2;
        h.rowwise() += lw.b2;
    }

    fc.h = h;
    fc.a_out.noalias() = h * w.out_w1;
    fc.a_out.rowwise() += w.out_b1;
    fc.g_out = detail::gelu(fc.a_out);
    Mat out(n, cfg.output_patch_len);
    out.noalias() = fc.g_out * w.out_w2;
    out.noalias() += h * w.out_wskip;
    out.rowwise() += w.out_b;
    out = (out.array() * fc.sigma + fc.mu).matrix();
    if (!out.allFinite()) throw Error(ErrorCode::NonFiniteActivation, "non-finite forecast");
    return out;
}

/// Accumulates parameter gradients into `grad` given d(loss)/d(forecast).
inline void backward(const ForecasterState& state, const ForwardCache& fc, const Mat& d_pred,
                     std::span<double> grad) {
    const ModelConfig& cfg = state.config;
    const ParameterLayout layout(cfg);
    const detail::ModelViews<true> w(state.params.data(), layout, cfg);
    detail::ModelViews<false> g(grad.data(), layout, cfg);
    const auto n = d_pred.rows();
    const int heads = cfg.heads();
    const int dh = cfg.hidden_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Mat d_out = d_pred * fc.sigma;
    g.out_w2.noalias() += fc.g_out.transpose() * d_out;
    g.out_wskip.noalias() += fc.h.transpose() * d_out;
    g.out_b += d_out.colwise().sum();
    Mat d_a_out = ((d_out * w.out_w2.transpose()).array() *
                   fc.a_out.unaryExpr([](double v) { return detail::gelu_grad(v); }).array())
                      .matrix();
    g.out_w1.noalias() += fc.h.transpose() * d_a_out;
    g.out_b1 += d_a_out.colwise().sum();
    Mat dh_res(n, cfg.hidden_dim);
    dh_res.noalias() = d_out * w.out_wskip.transpose();
    dh_res.noalias() += d_a_out * w.out_w1.transpose();

    for (int l = cfg.num_layers - 1; l >= 0; --l) {
        const auto& lw = w.layers[static_cast<std::size_t>(l)];
        auto& lg = g.layers[static_cast<std::size_t>(l)];
        const auto& lc = fc.layers[static_cast<std::size_t>(l)];

        // feed-forward branch
        lg.w2.noalias() += lc.g2.transpose() * dh_res;
        lg.b2 += dh_res.colwise().sum();
        const Mat d_f1 = ((dh_res * lw.w2.transpose()).array() *
                          lc.f1.unaryExpr([](double v) { return detail::gelu_grad(v); }).array())
                             .matrix();
        lg.w1.noalias() += lc.u2.transpose() * d_f1;
        lg.b1 += d_f1.colwise().sum();
        const Mat d_u2 = d_f1 * lw.w1.transpose();
        dh_res += detail::layer_norm_backward(d_u2, lc.xhat2, lc.rstd2, lw.norm2_g, lg.norm2_g, lg.norm2_b);

        // attention branch
        lg.wo.noalias() += lc.ctx.transpose() * dh_res;
        lg.bo += dh_res.colwise().sum();
        const Mat d_ctx = dh_res * lw.wo.transpose();
        Mat dq(n, cfg.hidden_dim), dk(n, cfg.hidden_dim), dv(n, cfg.hidden_dim);
        for (int hd = 0; hd < heads; ++hd) {
            const Mat& p = lc.probs[static_cast<std::size_t>(hd)];
            const auto dctx_h = d_ctx.middleCols(hd * dh, dh);
            dv.middleCols(hd * dh, dh).noalias() = p.transpose() * dctx_h;
            const Mat dp = dctx_h * lc.v.middleCols(hd * dh, dh).transpose();
            const ColVec rowdot = (dp.array() * p.array()).rowwise().sum();
            const Mat ds = ((dp.colwise() - rowdot).array() * p.array()).matrix() * scale;
            dq.middleCols(hd * dh, dh).noalias() = ds * lc.k.middleCols(hd * dh, dh);
            dk.middleCols(hd * dh, dh).noalias() = ds.transpose() * lc.q.middleCols(hd * dh, dh);
        }
        lg.wq.noalias() += lc.u1.transpose() * dq;
        lg.bq += dq.colwise().sum();
        lg.wk.noalias() += lc.u1.transpose() * dk;
        lg.bk += dk.colwise().sum();
        lg.wv.noalias() += lc.u1.transpose() * dv;
        lg.bv += dv.colwise().sum();
        Mat d_u1(n, cfg.hidden_dim);
        d_u1.noalias() = dq * lw.wq.transpose();
        d_u1.noalias() += dk * lw.wk.transpose();
        d_u1.noalias() += dv * lw.wv.transpose();
        dh_res += detail::layer_norm_backward(d_u1, lc.xhat1, lc.rstd1, lw.norm1_g, lg.norm1_g, lg.norm1_b);
    }

    g.pos.topRows(n) += dh_res;
    g.in_w2.noalias() += fc.g_in.transpose() * dh_res;
    g.in_wskip.noalias() += fc.x0.transpose() * dh_res;
    g.in_b += dh_res.colwise().sum();
    const Mat d_a_in = ((dh_res * w.in_w2.transpose()).array() *
                        fc.a_in.unaryExpr([](double v) { return detail::gelu_grad(v); }).array())
                           .matrix();
    g.in_w1.noalias() += fc.x0.transpose() * d_a_in;
    g.in_b1 += d_a_in.colwise().sum();
}

/// Extends `context` by `horizon` points, feeding each generated output
/// patch back as input. The working context keeps the newest max_context points.
inline std::vector<double> autoregressive_forecast(const ForecasterState& state, std::span<const double> context,
                                                   std::size_t horizon) {
    if (context.empty()) throw Error(ErrorCode::SeriesTooShort, "empty context");
    const auto max_ctx = static_cast<std::size_t>(state.config.max_context);
    const auto keep = std::min(context.size(), max_ctx);
    std::vector<double> working(context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
    std::vector<double> generated;
    generated.reserve(horizon + static_cast<std::size_t>(state.config.output_patch_len));
    while (generated.size() < horizon) {
        const Mat pred = forward(state, patchify(working, state.config));
        const auto last = pred.row(pred.rows() - 1);
        for (Eigen::Index i = 0; i < last.size(); ++i) {
            generated.push_back(last(i));
            working.push_back(last(i));
        }
        if (working.size() > max_ctx)
            working.erase(working.begin(), working.end() - static_cast<std::ptrdiff_t>(max_ctx));
    }
    generated.resize(horizon);
    return generated;
}

} // namespace finfm

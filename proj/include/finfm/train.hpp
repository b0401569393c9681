#pragma once

#include "finfm/data.hpp"
#include "finfm/model.hpp"

#include <cmath>
#include <algorithm>
#include <exception>
#include <functional>
#include <numeric>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace finfm {

struct TrainConfig {
    int warmup_epochs = 25;
    int total_epochs = 100;
    double peak_lr = 5e-4;
    double momentum = 0.9;
    double grad_clip_max_norm = 1.0;
    int batch_size = 1024;
    int min_context = 128;
    int max_context = 512;
    int output_len = 128;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
        if (warmup_epochs < 0 || total_epochs <= 0) fail("warmup_epochs/total_epochs must be positive");
        if (warmup_epochs >= total_epochs) fail("warmup_epochs must be less than total_epochs");
        if (!(peak_lr >= 0.0)) fail("peak_lr must be non-negative");
        if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
        if (!(grad_clip_max_norm > 0.0)) fail("grad_clip_max_norm must be positive");
        if (batch_size <= 0) fail("batch_size must be positive");
        if (min_context <= 0 || min_context > max_context) fail("min_context must satisfy 0 < min_context <= max_context");
        if (output_len <= 0) fail("output_len must be positive");
    }

    /// Window lengths and model geometry must agree.
    void validate_against(const ModelConfig& m) const {
        validate();
        if (max_context != m.max_context)
            throw Error(ErrorCode::InvalidConfig, "max_context differs between model and training config");
        if (output_len != m.output_patch_len)
            throw Error(ErrorCode::InvalidConfig, "output_len must equal output_patch_len");
    }
};

inline std::vector<double> log_transform(std::span<const double> y) {
    std::vector<double> z(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0))
            throw Error(ErrorCode::NonPositiveInput, "log_transform needs positive values (index " + std::to_string(i) + ")");
        z[i] = std::log(y[i]);
    }
    return z;
}

inline std::vector<double> exp_transform(std::span<const double> z) {
    std::vector<double> y(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = std::exp(z[i]);
    return y;
}

/// A masked context window and the points that follow it, in log space.
struct TrainingExample {
    std::vector<double> context;
    std::vector<double> target;
    std::string instrument_id;
    std::size_t t_start = 0;
    std::size_t t_end = 0;
};

/// Draws t_end uniformly from [min_context, max_context] (capped so the
/// target fits) and then t_start uniformly from [0, t_end - min_context].
template <typename Rng>
TrainingExample sample_masked_window(std::span<const double> series, Rng& rng, const TrainConfig& cfg,
                                     std::string instrument_id = {}) {
    const auto min_ctx = static_cast<std::size_t>(cfg.min_context);
    const auto out_len = static_cast<std::size_t>(cfg.output_len);
    if (series.size() < min_ctx + out_len)
        throw Error(ErrorCode::SeriesTooShort, "window source of " + std::to_string(series.size()) + " points");
    const std::size_t max_end = std::min(static_cast<std::size_t>(cfg.max_context), series.size() - out_len);
    std::uniform_int_distribution<std::size_t> end_dist(min_ctx, max_end);
    const std::size_t t_end = end_dist(rng);
    std::uniform_int_distribution<std::size_t> start_dist(0, t_end - min_ctx);
    const std::size_t t_start = start_dist(rng);
    TrainingExample ex;
    ex.context.assign(series.begin() + static_cast<std::ptrdiff_t>(t_start),
                      series.begin() + static_cast<std::ptrdiff_t>(t_end));
    ex.target.assign(series.begin() + static_cast<std::ptrdiff_t>(t_end),
                     series.begin() + static_cast<std::ptrdiff_t>(t_end + out_len));
    ex.instrument_id = std::move(instrument_id);
    ex.t_start = t_start;
    ex.t_end = t_end;
    return ex;
}

/// Mean over unmasked positions of the per-position MSE.
inline double loss(const Mat& predictions, const Mat& targets, const std::vector<bool>& masked) {
    double total = 0.0;
    std::size_t n = 0;
    for (Eigen::Index j = 0; j < predictions.rows(); ++j) {
        if (masked[static_cast<std::size_t>(j)]) continue;
        total += (predictions.row(j) - targets.row(j)).squaredNorm() / static_cast<double>(predictions.cols());
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::AllMasked, "no unmasked positions");
    return total / static_cast<double>(n);
}

/// Per-position targets: row j holds the output_patch_len points after the
/// last real point of patch j.
inline Mat position_targets(const TrainingExample& ex, const PatchSequence& ps, const ModelConfig& cfg) {
    const auto li = static_cast<std::size_t>(cfg.input_patch_len);
    const auto lo = static_cast<std::size_t>(cfg.output_patch_len);
    const std::size_t padded = ps.size() * li - ex.context.size();
    Mat t(static_cast<Eigen::Index>(ps.size()), static_cast<Eigen::Index>(lo));
    for (std::size_t j = 0; j < ps.size(); ++j) {
        const std::size_t end = (j + 1) * li - padded;
        for (std::size_t k = 0; k < lo; ++k) {
            const std::size_t idx = end + k;
            t(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                idx < ex.context.size() ? ex.context[idx] : ex.target.at(idx - ex.context.size());
        }
    }
    return t;
}

/// Loss of one window; when `grad` is non-empty also accumulates
/// `weight * d(loss)/d(params)` into it.
inline double example_loss(const ForecasterState& state, const TrainingExample& ex, std::span<double> grad = {},
                           double weight = 1.0) {
    const PatchSequence ps = patchify(ex.context, state.config);
    ForwardCache cache;
    const Mat pred = forward(state, ps, grad.empty() ? nullptr : &cache);
    const Mat tgt = position_targets(ex, ps, state.config);
    const double value = loss(pred, tgt, ps.masked);
    if (!std::isfinite(value)) throw Error(ErrorCode::NonFiniteActivation, "non-finite loss");
    if (!grad.empty()) {
        const auto unmasked = static_cast<double>(std::count(ps.masked.begin(), ps.masked.end(), false));
        Mat d = (pred - tgt) * (2.0 * weight / (unmasked * static_cast<double>(pred.cols())));
        for (std::size_t j = 0; j < ps.masked.size(); ++j)
            if (ps.masked[j]) d.row(static_cast<Eigen::Index>(j)).setZero();
        backward(state, cache, d, grad);
    }
    return value;
}

/// Linear warmup to peak_lr over warmup_epochs, cosine decay to 0 at total_epochs.
inline double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg) {
    const double epoch = static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(steps_per_epoch, 1));
    const double warm = cfg.warmup_epochs;
    const double total = cfg.total_epochs;
    if (epoch >= total) return 0.0;
    if (epoch <= warm) return warm > 0.0 ? cfg.peak_lr * epoch / warm : cfg.peak_lr;
    const double progress = (epoch - warm) / (total - warm);
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Scales `grad` in place to global L2 norm <= max_norm; returns the norm before clipping.
inline double clip_grad_norm(std::span<double> grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (double& g : grad) g *= s;
    }
    return norm;
}

/// SGD with heavy-ball momentum (v <- mu*v + g; p <- p - lr*v) after
/// global-norm clipping. Momentum buffers persist across steps.
class SgdMomentum {
public:
    SgdMomentum(std::size_t size, double momentum, double max_norm)
        : velocity_(size, 0.0), momentum_(momentum), max_norm_(max_norm) {}

    /// Returns the pre-clip gradient norm. `grad` is clipped in place.
    double step(std::span<double> params, std::span<double> grad, double lr) {
        if (grad.size() != params.size() || params.size() != velocity_.size())
            throw Error(ErrorCode::NonFiniteGradient, "gradient shape does not match parameters");
        for (double g : grad)
            if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient");
        const double norm = clip_grad_norm(grad, max_norm_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity_[i] = momentum_ * velocity_[i] + grad[i];
            params[i] -= lr * velocity_[i];
        }
        return norm;
    }

    const std::vector<double>& velocity() const noexcept { return velocity_; }

private:
    std::vector<double> velocity_;
    double momentum_;
    double max_norm_;
};

/// Non-overlapping training chunk of one log-price series.
struct Chunk {
    std::vector<double> values;
    std::string instrument_id;
    std::size_t offset = 0;
};

/// Cuts each series into chunks of max_context + output_len points; a
/// trailing remainder shorter than min_context + output_len is dropped.
inline std::vector<Chunk> make_chunks(const std::vector<PriceSeries>& series, const TrainConfig& cfg) {
    const auto full = static_cast<std::size_t>(cfg.max_context + cfg.output_len);
    const auto shortest = static_cast<std::size_t>(cfg.min_context + cfg.output_len);
    std::vector<Chunk> out;
    for (const auto& s : series) {
        const auto z = log_transform(s.values());
        for (std::size_t off = 0; off < z.size(); off += full) {
            const std::size_t len = std::min(full, z.size() - off);
            if (len < shortest) break;
            out.push_back({std::vector<double>(z.begin() + static_cast<std::ptrdiff_t>(off),
                                               z.begin() + static_cast<std::ptrdiff_t>(off + len)),
                           s.id(), off});
        }
    }
    return out;
}

struct EpochLoss {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

using LossCurve = std::vector<EpochLoss>;

inline void write_loss_curve(std::ostream& out, const LossCurve& curve) {
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < curve.size(); ++e)
        out << (e + 1) << ',' << format_double(curve[e].train_loss) << ',' << format_double(curve[e].val_loss) << '\n';
}

/// Batch gradient with a fixed shard structure: the result does not depend
/// on how many threads execute the shards.
class BatchEvaluator {
public:
    static constexpr std::size_t kShards = 8;

    explicit BatchEvaluator(std::size_t param_count, int threads = 1)
        : threads_(std::max(1, threads)), shard_grads_(kShards, ParamVector(param_count, 0.0)) {}

    /// Mean loss over `batch`; `grad` receives the gradient of that mean.
    double gradient(const ForecasterState& state, const std::vector<TrainingExample>& batch, std::span<double> grad) {
        const std::size_t n = batch.size();
        const double weight = 1.0 / static_cast<double>(n);
        std::vector<double> shard_loss(kShards, 0.0);
        std::vector<std::exception_ptr> errors(kShards);
        auto run_shard = [&](std::size_t s) {
            try {
                auto& g = shard_grads_[s];
                std::fill(g.begin(), g.end(), 0.0);
                for (std::size_t i = s * n / kShards; i < (s + 1) * n / kShards; ++i)
                    shard_loss[s] += example_loss(state, batch[i], g, weight);
            } catch (...) {
                errors[s] = std::current_exception();
            }
        };
        if (threads_ == 1) {
            for (std::size_t s = 0; s < kShards; ++s) run_shard(s);
        } else {
            std::vector<std::thread> pool;
            const auto workers = static_cast<std::size_t>(threads_);
            for (std::size_t w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    for (std::size_t s = w; s < kShards; s += workers) run_shard(s);
                });
            for (auto& t : pool) t.join();
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        std::fill(grad.begin(), grad.end(), 0.0);
        double total = 0.0;
        for (std::size_t s = 0; s < kShards; ++s) {
            total += shard_loss[s];
            const auto& g = shard_grads_[s];
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        }
        return total / static_cast<double>(n);
    }

private:
    int threads_;
    std::vector<ParamVector> shard_grads_;
};

inline double mean_loss(const ForecasterState& state, const std::vector<TrainingExample>& examples) {
    double total = 0.0;
    for (const auto& ex : examples) total += example_loss(state, ex);
    return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

struct TrainResult {
    ForecasterState state;
    LossCurve curve;
};

using EpochCallback = std::function<void(int epoch, const EpochLoss&, const ForecasterState&)>;

/// Masked-window training. An epoch is one shuffled pass over the training
/// chunks in batches of batch_size, each chunk contributing one freshly
/// masked window. Validation uses one window per validation chunk, drawn
/// once up front.
inline TrainResult train(const SeriesSplit& split, const ModelConfig& model_cfg, const TrainConfig& cfg,
                         const ForecasterState* initial = nullptr, const EpochCallback& on_epoch = {}) {
    model_cfg.validate();
    cfg.validate_against(model_cfg);
    if (split.train.empty() || split.validation.empty())
        throw Error(ErrorCode::EmptySplit, "training needs non-empty train and validation sets");
    const auto train_chunks = make_chunks(split.train, cfg);
    const auto val_chunks = make_chunks(split.validation, cfg);
    if (train_chunks.empty() || val_chunks.empty())
        throw Error(ErrorCode::SeriesTooShort, "no series long enough for min_context + output_len");

    TrainResult result{initial ? *initial : init_random(model_cfg, cfg.seed), {}};
    ForecasterState& state = result.state;
    if (!(state.config == model_cfg)) throw Error(ErrorCode::InvalidConfig, "initial state has a different config");

    std::mt19937_64 val_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<TrainingExample> val_windows;
    for (const auto& c : val_chunks) val_windows.push_back(sample_masked_window(c.values, val_rng, cfg, c.instrument_id));

    std::mt19937_64 rng(cfg.seed);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps_per_epoch = (train_chunks.size() + batch - 1) / batch;
    SgdMomentum opt(state.params.size(), cfg.momentum, cfg.grad_clip_max_norm);
    BatchEvaluator evaluator(state.params.size(), cfg.threads);
    ParamVector grad(state.params.size());
    std::vector<std::size_t> order(train_chunks.size());
    std::size_t step = 0;

    for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            std::vector<TrainingExample> examples;
            for (std::size_t i = b * batch; i < std::min(order.size(), (b + 1) * batch); ++i) {
                const auto& c = train_chunks[order[i]];
                examples.push_back(sample_masked_window(c.values, rng, cfg, c.instrument_id));
            }
            try {
                epoch_loss += evaluator.gradient(state, examples, grad);
                opt.step(state.params, grad, lr_at(step + 1, steps_per_epoch, cfg));
            } catch (const Error& e) {
                throw Error(e.code(), std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                                          std::to_string(step) + ")");
            }
            ++step;
        }
        EpochLoss el{epoch_loss / static_cast<double>(steps_per_epoch), mean_loss(state, val_windows)};
        if (!std::isfinite(el.train_loss) || !std::isfinite(el.val_loss))
            throw Error(ErrorCode::NonFiniteActivation, "non-finite loss at epoch " + std::to_string(epoch));
        result.curve.push_back(el);
        if (on_epoch) on_epoch(epoch, el, state);
    }
    return result;
}

} // namespace finfm

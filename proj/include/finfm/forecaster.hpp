#pragma once

#include "finfm/baselines.hpp"
#include "finfm/model.hpp"
#include "finfm/train.hpp"

#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace finfm {

/// Ground truth visible to a predictor: a prefix of one instrument's
/// prices ending at `end_index` (exclusive) in the caller's series.
struct History {
    std::span<const double> prices;
    std::span<const Timestamp> timestamps;
    std::string_view instrument;
    std::size_t end_index = 0;
};

/// Anything that can extend a price history by `horizon` points.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual std::vector<double> forecast(const History& history, std::size_t horizon) = 0;
};

/// Trained model: log-transform, autoregressive decode, exponentiate.
class ModelForecaster final : public Forecaster {
public:
    explicit ModelForecaster(const ForecasterState& state) : state_(state) {}

    std::vector<double> forecast(const History& history, std::size_t horizon) override {
        const auto keep = std::min(history.prices.size(), static_cast<std::size_t>(state_.config.max_context));
        const auto z = log_transform(history.prices.last(keep));
        return exp_transform(autoregressive_forecast(state_, z, horizon));
    }

private:
    const ForecasterState& state_;
};

/// Emits a flat path whose final point moves up or down by a Bernoulli(up_ratio) draw.
class ChanceForecaster final : public Forecaster {
public:
    explicit ChanceForecaster(const ChanceModel& model) : model_(model), rng_(model.seed) {}

    std::vector<double> forecast(const History& history, std::size_t horizon) override {
        const double anchor = history.prices.back();
        std::vector<double> path(horizon, anchor);
        const Direction d = chance_predict(model_, rng_);
        if (horizon > 0) path.back() = anchor * (d == Direction::up ? 1.001 : 0.999);
        return path;
    }

private:
    ChanceModel model_;
    std::mt19937_64 rng_;
};

/// Per-instrument AR(1) difference models; unknown or degenerate
/// instruments fall back to a random walk (flat forecast).
class Ar1Forecaster final : public Forecaster {
public:
    explicit Ar1Forecaster(std::map<std::string, AR1Params, std::less<>> params) : params_(std::move(params)) {}

    std::vector<double> forecast(const History& history, std::size_t horizon) override {
        const auto it = params_.find(history.instrument);
        if (it == params_.end() || history.prices.size() < 2)
            return std::vector<double>(horizon, history.prices.back());
        return ar1_forecast(it->second, history.prices, horizon);
    }

private:
    std::map<std::string, AR1Params, std::less<>> params_;
};

/// Fits one AR(1) per series on its pre-cutoff points. Degenerate fits are
/// recorded with phi = intercept = 0 (random walk).
inline std::map<std::string, AR1Params, std::less<>> fit_ar1_all(const std::vector<PriceSeries>& series,
                                                                  Timestamp training_cutoff,
                                                                  const Ar1Options& opt = {}) {
    std::map<std::string, AR1Params, std::less<>> out;
    for (const auto& s : series) {
        try {
            out[s.id()] = fit_ar1(s, training_cutoff, opt);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateFit && e.code() != ErrorCode::InsufficientData) throw;
            AR1Params p;
            p.instrument_id = s.id();
            p.log_space = opt.log_space;
            out[s.id()] = p;
        }
    }
    return out;
}

/// Perfect foresight over known full series; harness self-test only.
class OracleForecaster final : public Forecaster {
public:
    explicit OracleForecaster(const std::vector<PriceSeries>& truth) {
        for (const auto& s : truth) truth_.emplace(s.id(), s);
    }

    std::vector<double> forecast(const History& history, std::size_t horizon) override {
        const auto it = truth_.find(history.instrument);
        if (it == truth_.end()) throw Error(ErrorCode::InsufficientData, "oracle has no series for instrument");
        const auto& ts = it->second.timestamps();
        const auto& vs = it->second.values();
        const auto pos = static_cast<std::size_t>(
            std::upper_bound(ts.begin(), ts.end(), history.timestamps.back()) - ts.begin());
        std::vector<double> path(horizon);
        for (std::size_t k = 0; k < horizon; ++k) path[k] = vs[std::min(pos + k, vs.size() - 1)];
        return path;
    }

private:
    std::map<std::string, PriceSeries, std::less<>> truth_;
};

} // namespace finfm

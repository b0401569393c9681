#pragma once

#include "finfm/data.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <vector>

namespace finfm {

enum class Direction { down = 0, up = 1 };

/// Ratio-matched guesser: says "up" with probability up_ratio.
struct ChanceModel {
    double up_ratio = 0.5;
    std::uint64_t seed = 0;
};

/// up_ratio = strictly-up single-step changes / non-zero changes.
inline ChanceModel fit_chance(const std::vector<PriceSeries>& train, std::uint64_t seed = 0) {
    std::size_t up = 0, moved = 0;
    for (const auto& s : train) {
        const auto& v = s.values();
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i] > v[i - 1]) ++up;
            if (v[i] != v[i - 1]) ++moved;
        }
    }
    if (moved == 0) throw Error(ErrorCode::NoChanges, "no non-zero price changes to estimate the up ratio");
    return {static_cast<double>(up) / static_cast<double>(moved), seed};
}

template <typename Rng>
Direction chance_predict(const ChanceModel& model, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < model.up_ratio ? Direction::up : Direction::down;
}

struct Ar1Options {
    bool log_space = false;  // differences of log prices instead of raw prices
    bool intercept = true;
};

/// Difference model: dP_t = intercept + phi * dP_{t-1} + e_t.
struct AR1Params {
    std::string instrument_id;
    double phi = 0.0;
    double intercept = 0.0;
    double phi_stderr = std::numeric_limits<double>::quiet_NaN();
    std::size_t observations = 0;  // regression pairs used
    bool log_space = false;
};

/// Least-squares fit on the differences of `values`.
inline AR1Params fit_ar1_values(std::span<const double> values, const Ar1Options& opt = {}, std::string id = {}) {
    if (values.size() < 4)
        throw Error(ErrorCode::InsufficientData, id + ": AR(1) needs at least 4 training points");
    std::vector<double> diff(values.size() - 1);
    for (std::size_t i = 1; i < values.size(); ++i)
        diff[i - 1] = opt.log_space ? std::log(values[i]) - std::log(values[i - 1]) : values[i] - values[i - 1];

    const std::size_t n = diff.size() - 1;
    double mx = 0.0, my = 0.0;
    if (opt.intercept) {
        for (std::size_t t = 0; t < n; ++t) {
            mx += diff[t];
            my += diff[t + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
    }
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        sxx += (diff[t] - mx) * (diff[t] - mx);
        sxy += (diff[t] - mx) * (diff[t + 1] - my);
    }
    if (!(sxx > 0.0)) throw Error(ErrorCode::DegenerateFit, id + ": regressor has zero variance");

    AR1Params p;
    p.instrument_id = std::move(id);
    p.phi = sxy / sxx;
    p.intercept = opt.intercept ? my - p.phi * mx : 0.0;
    p.observations = n;
    p.log_space = opt.log_space;
    const std::size_t dof = n - (opt.intercept ? 2 : 1);
    if (dof > 0) {
        double ssr = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double r = diff[t + 1] - p.intercept - p.phi * diff[t];
            ssr += r * r;
        }
        p.phi_stderr = std::sqrt(ssr / static_cast<double>(dof) / sxx);
    }
    return p;
}

/// Fits on the points strictly before `training_cutoff`.
inline AR1Params fit_ar1(const PriceSeries& series, Timestamp training_cutoff, const Ar1Options& opt = {}) {
    const auto& ts = series.timestamps();
    const auto n = static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), training_cutoff) - ts.begin());
    return fit_ar1_values(std::span<const double>(series.values()).first(n), opt, series.id());
}

/// Iterates the difference recurrence from the last observed difference
/// and accumulates it onto the last price.
inline std::vector<double> ar1_forecast(const AR1Params& p, std::span<const double> context, std::size_t horizon) {
    if (context.size() < 2) throw Error(ErrorCode::InsufficientData, "AR(1) forecast needs two context points");
    const double last = context.back();
    const double prev = context[context.size() - 2];
    double level = p.log_space ? std::log(last) : last;
    double d = p.log_space ? std::log(last) - std::log(prev) : last - prev;
    std::vector<double> out(horizon);
    for (std::size_t k = 0; k < horizon; ++k) {
        d = p.intercept + p.phi * d;
        level += d;
        out[k] = p.log_space ? std::exp(level) : level;
    }
    return out;
}

inline void write_ar1_params(std::ostream& out, const std::vector<AR1Params>& params) {
    out << "instrument_id,phi,intercept\n";
    for (const auto& p : params)
        out << p.instrument_id << ',' << format_double(p.phi) << ',' << format_double(p.intercept) << '\n';
}

} // namespace finfm

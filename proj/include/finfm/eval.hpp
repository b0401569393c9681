#pragma once

#include "finfm/forecaster.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace finfm {

/// How a zero price change is classified.
enum class TieRule { down, exclude };

inline Direction direction_of(double change) { return change > 0.0 ? Direction::up : Direction::down; }

struct EvalProtocol {
    int context_len = 512;
    int step_horizon = 2;
    int total_horizon = 128;
    int max_context = 512;
    /// Earliest forecast origin (index of the first unseen point). The
    /// effective origin is never before context_len.
    std::size_t first_origin = 0;
    /// Keep evaluating further non-overlapping windows until the series ends.
    bool repeat = true;
    TieRule ties = TieRule::down;

    std::size_t steps() const {
        return static_cast<std::size_t>((total_horizon + step_horizon - 1) / step_horizon);
    }
};

struct DirectionalOutcome {
    Direction predicted = Direction::down;
    Direction actual = Direction::down;
    std::size_t step = 0;  // k, from 1
    std::size_t window = 0;
    std::string instrument_id;
    std::size_t anchor_index = 0;  // last ground-truth point visible
    std::size_t target_index = 0;
};

/// Stepwise directional protocol. For step k of a window starting at
/// origin o, the forecaster sees only y[.. o + (k-1)h) and the prediction
/// at y[o + kh - 1] is classified against the last visible point.
inline std::vector<DirectionalOutcome> stepwise_eval(Forecaster& forecaster, const PriceSeries& series,
                                                     const EvalProtocol& p) {
    if (p.step_horizon <= 0 || p.total_horizon <= 0 || p.context_len <= 0)
        throw Error(ErrorCode::InvalidConfig, "horizons and context_len must be positive");
    const auto h = static_cast<std::size_t>(p.step_horizon);
    const auto c = static_cast<std::size_t>(p.context_len);
    const auto max_ctx = static_cast<std::size_t>(p.max_context);
    const std::size_t k_steps = p.steps();
    const auto& y = series.values();
    const auto& ts = series.timestamps();

    std::vector<DirectionalOutcome> out;
    std::size_t origin = std::max(c, p.first_origin);
    if (origin + k_steps * h > y.size())
        throw Error(ErrorCode::SeriesTooShort, series.id() + ": too short for context + total horizon");
    for (std::size_t window = 0; origin + k_steps * h <= y.size(); ++window, origin += k_steps * h) {
        for (std::size_t k = 1; k <= k_steps; ++k) {
            const std::size_t end = origin + (k - 1) * h;
            std::size_t begin = origin - c;
            if (end - begin > max_ctx) begin = end - max_ctx;
            History hist{std::span<const double>(y).subspan(begin, end - begin),
                         std::span<const Timestamp>(ts).subspan(begin, end - begin), series.id(), end};
            const auto path = forecaster.forecast(hist, h);
            if (path.size() < h) throw Error(ErrorCode::InsufficientData, "forecaster returned a short path");
            const double anchor = y[end - 1];
            const double predicted_change = path[h - 1] - anchor;
            const double actual_change = y[end + h - 1] - anchor;
            if (p.ties == TieRule::exclude && (predicted_change == 0.0 || actual_change == 0.0)) continue;
            out.push_back({direction_of(predicted_change), direction_of(actual_change), k, window, series.id(),
                           end - 1, end + h - 1});
        }
        if (!p.repeat) break;
    }
    return out;
}

struct Confusion {
    std::size_t up_up = 0;      // predicted up, actual up
    std::size_t up_down = 0;    // predicted up, actual down
    std::size_t down_up = 0;    // predicted down, actual up
    std::size_t down_down = 0;  // predicted down, actual down

    std::size_t total() const { return up_up + up_down + down_up + down_down; }
};

inline Confusion confusion(std::span<const DirectionalOutcome> outcomes) {
    Confusion m;
    for (const auto& o : outcomes) {
        if (o.predicted == Direction::up)
            (o.actual == Direction::up ? m.up_up : m.up_down)++;
        else
            (o.actual == Direction::up ? m.down_up : m.down_down)++;
    }
    return m;
}

inline double accuracy(const Confusion& m) {
    if (m.total() == 0) throw Error(ErrorCode::EmptyOutcomes, "no outcomes");
    return static_cast<double>(m.up_up + m.down_down) / static_cast<double>(m.total());
}

inline double accuracy(std::span<const DirectionalOutcome> outcomes) { return accuracy(confusion(outcomes)); }

/// Mean of the per-class F1 scores (each class taken as positive). A class
/// that never occurs in either predictions or labels is left out of the mean.
inline double macro_f1(const Confusion& m) {
    if (m.total() == 0) throw Error(ErrorCode::EmptyOutcomes, "no outcomes");
    auto f1 = [](std::size_t tp, std::size_t fp, std::size_t fn) -> std::optional<double> {
        const std::size_t denom = 2 * tp + fp + fn;
        if (denom == 0) return std::nullopt;
        return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    };
    const auto up = f1(m.up_up, m.up_down, m.down_up);
    const auto down = f1(m.down_down, m.down_up, m.up_down);
    double sum = 0.0;
    int classes = 0;
    for (const auto& f : {up, down})
        if (f) {
            sum += *f;
            ++classes;
        }
    return sum / classes;
}

inline double macro_f1(std::span<const DirectionalOutcome> outcomes) { return macro_f1(confusion(outcomes)); }

/// Expected accuracy of a guesser saying "up" with probability `up_ratio`
/// on these outcomes: p*q + (1-p)*(1-q), q = actual up fraction.
inline double chance_rate(double up_ratio, double actual_up_fraction) {
    return up_ratio * actual_up_fraction + (1.0 - up_ratio) * (1.0 - actual_up_fraction);
}

inline double chance_rate(std::span<const DirectionalOutcome> outcomes, double up_ratio) {
    if (outcomes.empty()) throw Error(ErrorCode::EmptyOutcomes, "no outcomes");
    std::size_t up = 0;
    for (const auto& o : outcomes) up += o.actual == Direction::up;
    return chance_rate(up_ratio, static_cast<double>(up) / static_cast<double>(outcomes.size()));
}

struct HorizonMetrics {
    int horizon = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double chance_rate = 0.0;
    Confusion counts;
};

struct EvalReport {
    std::vector<HorizonMetrics> rows;
    std::size_t skipped_series = 0;
};

/// Runs the protocol for every horizon, pooling outcomes across instruments.
/// Series too short for a horizon are skipped and counted.
inline EvalReport evaluate_horizons(Forecaster& forecaster, const std::vector<PriceSeries>& series,
                                    const std::vector<int>& horizons, EvalProtocol base, double up_ratio,
                                    const std::function<std::size_t(const PriceSeries&)>& first_origin = {}) {
    EvalReport report;
    for (int h : horizons) {
        EvalProtocol p = base;
        p.step_horizon = h;
        std::vector<DirectionalOutcome> pooled;
        for (const auto& s : series) {
            if (first_origin) p.first_origin = first_origin(s);
            try {
                auto o = stepwise_eval(forecaster, s, p);
                pooled.insert(pooled.end(), o.begin(), o.end());
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SeriesTooShort) throw;
                ++report.skipped_series;
            }
        }
        if (pooled.empty()) continue;
        const Confusion m = confusion(pooled);
        report.rows.push_back({h, accuracy(m), macro_f1(m), chance_rate(pooled, up_ratio), m});
    }
    return report;
}

inline void write_eval_csv(std::ostream& out, const EvalReport& r) {
    out << "horizon,accuracy,macro_f1,chance_rate,n_outcomes\n";
    for (const auto& row : r.rows)
        out << row.horizon << ',' << format_double(row.accuracy) << ',' << format_double(row.macro_f1) << ','
            << format_double(row.chance_rate) << ',' << row.counts.total() << '\n';
}

/// Long-format plot data: one (horizon, metric, value) row per point.
inline void write_eval_plot_data(std::ostream& out, const EvalReport& r, const std::string& model) {
    out << "model,horizon,metric,value\n";
    for (const auto& row : r.rows) {
        out << model << ',' << row.horizon << ",accuracy," << format_double(row.accuracy) << '\n';
        out << model << ',' << row.horizon << ",macro_f1," << format_double(row.macro_f1) << '\n';
        out << model << ',' << row.horizon << ",chance_rate," << format_double(row.chance_rate) << '\n';
    }
}

} // namespace finfm

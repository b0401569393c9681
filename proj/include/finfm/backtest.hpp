#pragma once

// Mock trading on h-step forecasts.
//
// Basic strategy: after day i the forecaster sees prices up to day i and
// predicts P_{i+1..i+h}. If P_{i+h} > P_{i+1} a long order of size
// 1/((h-1)T) opens at day i+1 and closes at day i+h; if lower, a short
// order of the same size. Equal predictions place nothing. The position of
// an asset on a day is the sum of its open orders, so at most h-1 orders
// overlap and gross exposure stays within the unit of capital.
//
// Market-neutral strategy: the same positions with each day's
// cross-sectional mean subtracted.
//
// Returns are cost-free simple close-to-close returns; cumulative PnL is additive.

#include "finfm/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace finfm {

enum class Strategy { basic, neutral };

inline std::string_view to_string(Strategy s) { return s == Strategy::basic ? "basic" : "neutral"; }

inline Strategy parse_strategy(std::string_view s) {
    if (s == "basic") return Strategy::basic;
    if (s == "neutral") return Strategy::neutral;
    throw Error(ErrorCode::InvalidConfig, "strategy must be basic or neutral, got '" + std::string(s) + "'");
}

/// Signed capital fractions per (day, asset), row-major.
struct PositionMatrix {
    std::size_t days = 0;
    std::size_t assets = 0;
    std::vector<double> weights;

    PositionMatrix() = default;
    PositionMatrix(std::size_t d, std::size_t a) : days(d), assets(a), weights(d * a, 0.0) {}

    double& at(std::size_t day, std::size_t asset) { return weights[day * assets + asset]; }
    double at(std::size_t day, std::size_t asset) const { return weights[day * assets + asset]; }
    std::span<const double> row(std::size_t day) const {
        return std::span<const double>(weights).subspan(day * assets, assets);
    }
};

enum class Side { buy = 1, sell = -1 };

/// One order pair: opened at `open_day`, reversed at `close_day`.
struct LedgerEntry {
    std::size_t decision_day = 0;
    std::size_t asset = 0;
    Side side = Side::buy;
    double size = 0.0;
    std::size_t open_day = 0;
    std::size_t close_day = 0;

    double signed_size() const { return static_cast<double>(static_cast<int>(side)) * size; }
};

/// Forecast summary for one (decision day, asset): predicted P_{i+1} and P_{i+h}.
struct TradeSignal {
    std::size_t day = 0;
    std::size_t asset = 0;
    double next = 0.0;
    double at_horizon = 0.0;
};

struct BasicPositions {
    PositionMatrix positions;
    std::vector<LedgerEntry> ledger;
};

/// Orders whose close would fall past the last day are closed on the last day.
inline BasicPositions basic_positions(std::span<const TradeSignal> signals, int h, std::size_t assets,
                                      std::size_t days) {
    if (h < 2) throw Error(ErrorCode::HorizonTooShort, "holding period h must be at least 2");
    if (assets == 0) throw Error(ErrorCode::InvalidConfig, "need at least one asset");
    const double size = 1.0 / (static_cast<double>(h - 1) * static_cast<double>(assets));
    BasicPositions out{PositionMatrix(days, assets), {}};
    for (const auto& s : signals) {
        if (s.asset >= assets) throw Error(ErrorCode::InvalidConfig, "signal asset out of range");
        if (s.at_horizon == s.next) continue;
        const std::size_t open = s.day + 1;
        if (days == 0 || open >= days - 1) continue;
        const std::size_t close = std::min(s.day + static_cast<std::size_t>(h), days - 1);
        const Side side = s.at_horizon > s.next ? Side::buy : Side::sell;
        out.ledger.push_back({s.day, s.asset, side, size, open, close});
        const double w = out.ledger.back().signed_size();
        for (std::size_t d = open; d < close; ++d) out.positions.at(d, s.asset) += w;
    }
    return out;
}

/// Subtracts each day's mean position.
inline PositionMatrix neutralize(const PositionMatrix& p) {
    PositionMatrix out = p;
    for (std::size_t d = 0; d < p.days; ++d) {
        double mean = 0.0;
        for (std::size_t a = 0; a < p.assets; ++a) mean += p.at(d, a);
        mean /= static_cast<double>(p.assets);
        for (std::size_t a = 0; a < p.assets; ++a) out.at(d, a) = p.at(d, a) - mean;
    }
    return out;
}

/// Close prices on the same (day, asset) grid as the positions; NaN marks a missing price.
struct PriceMatrix {
    std::size_t days = 0;
    std::size_t assets = 0;
    std::vector<double> values;

    double at(std::size_t day, std::size_t asset) const { return values[day * assets + asset]; }
};

struct PnlResult {
    std::vector<double> daily_returns;  // entry d is earned from close d to close d+1
    double turnover = 0.0;
};

/// return_d = sum_a w[d][a] * (P[d+1][a] - P[d][a]) / P[d][a];
/// turnover = sum of |w[d][a] - w[d-1][a]| including the final unwind.
inline PnlResult compute_pnl(const PositionMatrix& w, const PriceMatrix& prices) {
    if (w.days != prices.days || w.assets != prices.assets)
        throw Error(ErrorCode::MissingPrice, "price grid does not match positions");
    auto valid = [](double p) { return std::isfinite(p) && p > 0.0; };
    PnlResult r;
    r.daily_returns.assign(w.days > 0 ? w.days - 1 : 0, 0.0);
    for (std::size_t d = 0; d < w.days; ++d) {
        for (std::size_t a = 0; a < w.assets; ++a) {
            const double pos = w.at(d, a);
            r.turnover += std::abs(pos - (d > 0 ? w.at(d - 1, a) : 0.0));
            if (pos == 0.0) continue;
            if (d + 1 >= w.days || !valid(prices.at(d, a)) || !valid(prices.at(d + 1, a)))
                throw Error(ErrorCode::MissingPrice, "no price for open position on day " + std::to_string(d) +
                                                         ", asset " + std::to_string(a));
            r.daily_returns[d] += pos * (prices.at(d + 1, a) - prices.at(d, a)) / prices.at(d, a);
        }
    }
    if (w.days > 0)
        for (std::size_t a = 0; a < w.assets; ++a) r.turnover += std::abs(w.at(w.days - 1, a));
    return r;
}

struct BacktestReport {
    std::optional<double> ann_sharpe;  // missing when volatility is zero
    double max_drawdown = 0.0;
    double ann_returns = 0.0;
    double ann_volatility = 0.0;
    std::optional<double> neutral_cost_pct;  // missing when nothing traded
    std::vector<double> daily_returns;
    std::vector<double> cumulative_pnl;
    double total_turnover = 0.0;
};

/// Annualized metrics. Volatility uses the sample standard deviation;
/// drawdown is measured against a running maximum that starts at 0.
inline BacktestReport report(std::span<const double> daily_returns, double total_turnover, double periods_per_year) {
    if (daily_returns.size() < 2) throw Error(ErrorCode::InsufficientData, "report needs at least 2 returns");
    BacktestReport r;
    r.daily_returns.assign(daily_returns.begin(), daily_returns.end());
    r.total_turnover = total_turnover;
    const auto n = static_cast<double>(daily_returns.size());
    double sum = 0.0;
    for (double x : daily_returns) sum += x;
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : daily_returns) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    r.ann_returns = mean * periods_per_year;
    r.ann_volatility = sd * std::sqrt(periods_per_year);
    if (r.ann_volatility > 0.0) r.ann_sharpe = r.ann_returns / r.ann_volatility;

    double cum = 0.0, peak = 0.0;
    for (double x : daily_returns) {
        cum += x;
        r.cumulative_pnl.push_back(cum);
        peak = std::max(peak, cum);
        r.max_drawdown = std::min(r.max_drawdown, cum - peak);
    }
    if (total_turnover > 0.0) r.neutral_cost_pct = 100.0 * cum / total_turnover;
    return r;
}

struct BacktestConfig {
    int horizon = 128;
    Strategy strategy = Strategy::neutral;
    Timestamp start = 0;
    int context_len = 512;
};

struct BacktestResult {
    BacktestReport report;
    PositionMatrix positions;
    std::vector<LedgerEntry> ledger;
    std::vector<Timestamp> calendar;  // trading days covered by `positions`
    std::vector<std::string> assets;
    double max_abs_row_sum = 0.0;
};

/// Days present in every series, ascending.
inline std::vector<Timestamp> common_calendar(const std::vector<PriceSeries>& market) {
    if (market.empty()) return {};
    std::vector<Timestamp> cal = market.front().timestamps();
    for (std::size_t i = 1; i < market.size(); ++i) {
        std::vector<Timestamp> next;
        const auto& ts = market[i].timestamps();
        std::set_intersection(cal.begin(), cal.end(), ts.begin(), ts.end(), std::back_inserter(next));
        cal = std::move(next);
    }
    return cal;
}

/// Walks the calendar from the first day at or after `start`; every
/// forecast sees only prices dated on or before its decision day.
inline BacktestResult run_backtest(Forecaster& forecaster, const std::vector<PriceSeries>& market,
                                   const BacktestConfig& cfg) {
    if (cfg.horizon < 2) throw Error(ErrorCode::HorizonTooShort, "holding period h must be at least 2");
    if (market.empty()) throw Error(ErrorCode::InsufficientData, "empty market");
    const auto cal = common_calendar(market);
    const auto c = static_cast<std::size_t>(cfg.context_len);
    const auto first = static_cast<std::size_t>(std::lower_bound(cal.begin(), cal.end(), cfg.start) - cal.begin());
    if (first + 1 < c) throw Error(ErrorCode::SeriesTooShort, "fewer than context_len aligned points before start");
    if (cal.size() < first + 3) throw Error(ErrorCode::SeriesTooShort, "fewer than 3 trading days after start");

    const std::size_t assets = market.size();
    // aligned history per asset
    std::vector<std::vector<double>> px(assets);
    std::vector<std::vector<Timestamp>> tx(assets, cal);
    for (std::size_t a = 0; a < assets; ++a) {
        const auto& ts = market[a].timestamps();
        const auto& vs = market[a].values();
        px[a].reserve(cal.size());
        std::size_t j = 0;
        for (Timestamp t : cal) {
            while (ts[j] != t) ++j;
            px[a].push_back(vs[j]);
        }
    }

    const std::size_t days = cal.size() - first;
    const auto h = static_cast<std::size_t>(cfg.horizon);
    std::vector<TradeSignal> signals;
    for (std::size_t i = first; i + 2 < cal.size(); ++i) {
        for (std::size_t a = 0; a < assets; ++a) {
            const std::size_t end = i + 1;
            History hist{std::span<const double>(px[a]).subspan(end - c, c),
                         std::span<const Timestamp>(tx[a]).subspan(end - c, c), market[a].id(), end};
            const auto path = forecaster.forecast(hist, h);
            if (path.size() < h) throw Error(ErrorCode::InsufficientData, "forecaster returned a short path");
            signals.push_back({i - first, a, path[0], path[h - 1]});
        }
    }

    BacktestResult out;
    auto basic = basic_positions(signals, cfg.horizon, assets, days);
    out.ledger = std::move(basic.ledger);
    out.positions = cfg.strategy == Strategy::neutral ? neutralize(basic.positions) : std::move(basic.positions);
    for (std::size_t d = 0; d < days; ++d) {
        double s = 0.0;
        for (double w : out.positions.row(d)) s += w;
        out.max_abs_row_sum = std::max(out.max_abs_row_sum, std::abs(s));
    }

    PriceMatrix prices{days, assets, std::vector<double>(days * assets)};
    for (std::size_t d = 0; d < days; ++d)
        for (std::size_t a = 0; a < assets; ++a) prices.values[d * assets + a] = px[a][first + d];
    const auto pnl = compute_pnl(out.positions, prices);
    out.report = report(pnl.daily_returns, pnl.turnover, periods_per_year(market.front().granularity()));
    out.calendar.assign(cal.begin() + static_cast<std::ptrdiff_t>(first), cal.end());
    for (const auto& s : market) out.assets.push_back(s.id());
    return out;
}

// ---- report files -------------------------------------------------------

inline constexpr const char* kReportHeader =
    "Horizon,Ann Sharpe,Max Drawdown,Ann Returns,Ann Volatility,Neutral Cost (%)";

/// One row of the per-horizon metrics table; neutral cost is in percent.
struct ReportRow {
    int horizon = 0;
    std::optional<double> ann_sharpe;
    double max_drawdown = 0.0;
    double ann_returns = 0.0;
    double ann_volatility = 0.0;
    std::optional<double> neutral_cost_pct;

    bool operator==(const ReportRow&) const = default;
};

inline ReportRow to_row(int horizon, const BacktestReport& r) {
    return {horizon, r.ann_sharpe, r.max_drawdown, r.ann_returns, r.ann_volatility, r.neutral_cost_pct};
}

namespace detail {
inline std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline std::optional<double> opt_parse(std::string_view s) {
    if (s == "NA" || s.empty()) return std::nullopt;
    double v = 0.0;
    if (!parse_number(s, v)) throw Error(ErrorCode::MalformedRow, "bad number '" + std::string(s) + "'");
    return v;
}
} // namespace detail

inline void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
    out << kReportHeader << '\n';
    for (const auto& r : rows)
        out << r.horizon << ',' << detail::opt_text(r.ann_sharpe) << ',' << format_double(r.max_drawdown) << ','
            << format_double(r.ann_returns) << ',' << format_double(r.ann_volatility) << ','
            << detail::opt_text(r.neutral_cost_pct) << '\n';
}

inline std::vector<ReportRow> read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kReportHeader)
        throw RowError(ErrorCode::MalformedRow, 0, "report header mismatch");
    std::vector<ReportRow> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        const auto f = detail::split(text, ',');
        ReportRow r;
        if (f.size() != 6 || !detail::parse_number(f[0], r.horizon))
            throw RowError(ErrorCode::MalformedRow, row, "bad report row " + std::to_string(row));
        r.ann_sharpe = detail::opt_parse(f[1]);
        const auto dd = detail::opt_parse(f[2]);
        const auto ret = detail::opt_parse(f[3]);
        const auto vol = detail::opt_parse(f[4]);
        if (!dd || !ret || !vol) throw RowError(ErrorCode::MalformedRow, row, "missing required value");
        r.max_drawdown = *dd;
        r.ann_returns = *ret;
        r.ann_volatility = *vol;
        r.neutral_cost_pct = detail::opt_parse(f[5]);
        rows.push_back(r);
    }
    return rows;
}

/// `date,cum_pnl`, dated by the close at which each day's return is realized.
inline void write_pnl_csv(std::ostream& out, const BacktestResult& r) {
    out << "date,cum_pnl\n";
    for (std::size_t d = 0; d < r.report.cumulative_pnl.size(); ++d)
        out << format_date(r.calendar[d + 1]) << ',' << format_double(r.report.cumulative_pnl[d]) << '\n';
}

/// Markets as rows, predictors as columns.
inline void write_comparison_csv(std::ostream& out, const std::vector<std::string>& markets,
                                 const std::vector<std::string>& predictors,
                                 const std::map<std::pair<std::string, std::string>, std::optional<double>>& cells) {
    out << "market";
    for (const auto& p : predictors) out << ',' << p;
    out << '\n';
    for (const auto& m : markets) {
        out << m;
        for (const auto& p : predictors) {
            const auto it = cells.find({m, p});
            out << ',' << (it == cells.end() ? std::string("NA") : detail::opt_text(it->second));
        }
        out << '\n';
    }
}

} // namespace finfm

#pragma once

// Event-driven backtest: books each ledger order on its own and never
// builds a position matrix.

#include "finfm/backtest.hpp"

#include <cmath>
#include <vector>

namespace oracle {

struct Replay {
    std::vector<double> daily_returns;
    double turnover = 0.0;
};

/// prices[d][a]. With `neutral`, every order of size s in asset a also
/// carries -s/A in every asset (its share of the day's mean).
inline Replay replay(const std::vector<finfm::LedgerEntry>& ledger, const std::vector<std::vector<double>>& prices,
                     bool neutral) {
    const std::size_t days = prices.size(), assets = prices.front().size();
    Replay r;
    r.daily_returns.assign(days - 1, 0.0);
    // trades[d][a]: net quantity bought at close d
    std::vector<std::vector<double>> trades(days + 1, std::vector<double>(assets, 0.0));
    for (const auto& e : ledger) {
        const double s = e.signed_size();
        for (std::size_t a = 0; a < assets; ++a) {
            double w = (a == e.asset) ? s : 0.0;
            if (neutral) w -= s / static_cast<double>(assets);
            if (w == 0.0) continue;
            // hold w from close open_day to close close_day
            for (std::size_t d = e.open_day; d < e.close_day; ++d)
                r.daily_returns[d] += w * (prices[d + 1][a] / prices[d][a] - 1.0);
            trades[e.open_day][a] += w;
            trades[e.close_day][a] -= w;
        }
    }
    for (const auto& day : trades)
        for (double q : day) r.turnover += std::abs(q);
    return r;
}

/// Most negative (trough - earlier peak) over all pairs, the start at 0 included.
inline double brute_drawdown(const std::vector<double>& cum) {
    std::vector<double> path{0.0};
    path.insert(path.end(), cum.begin(), cum.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i)
        for (std::size_t j = i; j < path.size(); ++j) worst = std::min(worst, path[j] - path[i]);
    return worst;
}

} // namespace oracle

#pragma once

// Random small backtest instances shared by the property tests.

#include "finfm/backtest.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace support {

struct Instance {
    std::size_t days = 0, assets = 0;
    int h = 2;
    std::vector<finfm::TradeSignal> signals;
    std::vector<std::vector<double>> prices;  // [day][asset]
};

/// Up to 10 assets, 3..50 days, h in 2..8; about one signal in five is a tie.
inline Instance random_instance(std::mt19937_64& rng) {
    Instance in;
    in.assets = 1 + rng() % 10;
    in.days = 3 + rng() % 48;
    in.h = 2 + static_cast<int>(rng() % 7);
    std::normal_distribution<double> z(0.0, 0.02);
    in.prices.assign(in.days, std::vector<double>(in.assets));
    for (std::size_t a = 0; a < in.assets; ++a) {
        double p = 50.0 + static_cast<double>(rng() % 100);
        for (std::size_t d = 0; d < in.days; ++d) in.prices[d][a] = (p *= std::exp(z(rng)));
    }
    for (std::size_t d = 0; d < in.days; ++d)
        for (std::size_t a = 0; a < in.assets; ++a) {
            const auto r = rng() % 5;
            const double next = 100.0;
            in.signals.push_back({d, a, next, r == 0 ? next : (r % 2 ? next + 1 : next - 1)});
        }
    return in;
}

inline finfm::PriceMatrix to_matrix(const Instance& in) {
    finfm::PriceMatrix m{in.days, in.assets, {}};
    for (const auto& row : in.prices) m.values.insert(m.values.end(), row.begin(), row.end());
    return m;
}

} // namespace support

#pragma once

// Look-ahead audit: a forecaster wrapper that records what each call was
// shown, so the caller can compare it with the decision it fed.

#include "finfm/forecaster.hpp"

#include <string>
#include <vector>

namespace oracle {

struct Access {
    const double* first = nullptr;
    const double* last = nullptr;  // one past the final visible price
    finfm::Timestamp newest = 0;
    std::string instrument;
    std::size_t length = 0;
};

/// Records every history span, then delegates. Always predicts a strict
/// move so each call yields a directional outcome or ledger entry.
class TrackingForecaster final : public finfm::Forecaster {
public:
    explicit TrackingForecaster(std::uint64_t seed) : rng_(seed) {}

    std::vector<double> forecast(const finfm::History& h, std::size_t horizon) override {
        calls.push_back({h.prices.data(), h.prices.data() + h.prices.size(), h.timestamps.back(),
                         std::string(h.instrument), h.prices.size()});
        // depends on every visible value so a stale or leaked read would change it
        double acc = 0.0;
        for (double v : h.prices) acc += v;
        const bool up = (static_cast<std::uint64_t>(acc * 1e6) ^ rng_()) & 1;
        std::vector<double> path(horizon, h.prices.back());
        path.back() *= up ? 1.01 : 0.99;
        return path;
    }

    std::vector<Access> calls;

private:
    std::mt19937_64 rng_;
};

} // namespace oracle

#pragma once

#include "finfm/data.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace support {

inline constexpr finfm::Timestamp kDay = 86400;

/// Geometric random walk with per-series drift, daily stamps from `t0`.
inline finfm::PriceSeries random_walk(const std::string& id, std::size_t n, std::mt19937_64& rng, double vol = 0.02,
                                      double drift_scale = 0.001, finfm::Timestamp t0 = 0) {
    std::normal_distribution<double> z(0.0, 1.0);
    const double drift = drift_scale * z(rng);
    std::vector<finfm::Timestamp> ts(n);
    std::vector<double> v(n);
    double x = std::log(100.0);
    for (std::size_t i = 0; i < n; ++i) {
        ts[i] = t0 + static_cast<finfm::Timestamp>(i) * kDay;
        v[i] = std::exp(x);
        x += drift + vol * z(rng);
    }
    return {id, finfm::Granularity::daily, ts, v};
}

/// Log price whose first differences follow an AR(1) with coefficient phi.
inline finfm::PriceSeries ar1_market(const std::string& id, std::size_t n, std::mt19937_64& rng, double phi,
                                     double vol, finfm::Timestamp t0 = 0) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<finfm::Timestamp> ts(n);
    std::vector<double> v(n);
    double x = std::log(50.0), d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ts[i] = t0 + static_cast<finfm::Timestamp>(i) * kDay;
        v[i] = std::exp(x);
        d = phi * d + vol * z(rng);
        x += d;
    }
    return {id, finfm::Granularity::daily, ts, v};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("finfm_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace support

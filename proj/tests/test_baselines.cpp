#include "finfm/forecaster.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace finfm;

namespace {

PriceSeries from_values(const std::string& id, const std::vector<double>& v) {
    std::vector<Timestamp> ts(v.size());
    for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<Timestamp>(i) * support::kDay;
    return {id, Granularity::daily, ts, v};
}

} // namespace

TEST(Chance, RatioFromNonZeroChanges) {
    // changes: +, +, 0, -, +  -> 3 up of 4 moves
    const auto s = from_values("a", {10, 11, 12, 12, 11, 13});
    EXPECT_DOUBLE_EQ(fit_chance({s}).up_ratio, 0.75);
}

TEST(Chance, NoChanges) {
    const auto s = from_values("a", {5, 5, 5});
    try {
        fit_chance({s});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoChanges);
    }
}

TEST(Chance, DrawsMatchRatio) {
    ChanceModel m{0.7, 1};
    std::mt19937_64 rng(2);
    int up = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) up += chance_predict(m, rng) == Direction::up;
    EXPECT_NEAR(static_cast<double>(up) / n, 0.7, 4 * std::sqrt(0.21 / n));
}

TEST(Ar1, NoiselessRecurrenceRecovered) {
    std::vector<double> v{100.0, 101.0};
    double d = 1.0;
    for (int i = 0; i < 200; ++i) v.push_back(v.back() + (d *= 0.8));
    Ar1Options opt;
    opt.intercept = false;
    EXPECT_NEAR(fit_ar1_values(v, opt).phi, 0.8, 1e-9);
    opt.intercept = true;
    const auto p = fit_ar1_values(v, opt);
    EXPECT_NEAR(p.phi, 0.8, 1e-9);
    EXPECT_NEAR(p.intercept, 0.0, 1e-9);
}

TEST(Ar1, NoisyWithinThreeStandardErrors) {
    std::mt19937_64 rng(3);
    for (double phi : {-0.4, 0.2, 0.5, 0.8}) {
        std::normal_distribution<double> z(0.0, 1.0);
        std::vector<double> v{100.0};
        double d = 0.0;
        for (int i = 0; i < 3000; ++i) v.push_back(v.back() + (d = 0.05 + phi * d + z(rng)));
        const auto p = fit_ar1_values(v);
        EXPECT_LT(std::abs(p.phi - phi), 3 * p.phi_stderr) << phi;
        EXPECT_GT(p.phi_stderr, 0.0);
    }
}

TEST(Ar1, FitUsesOnlyPreCutoff) {
    std::vector<double> v{100, 101};
    double d = 1.0;
    for (int i = 0; i < 50; ++i) v.push_back(v.back() + (d *= 0.5));
    for (int i = 0; i < 50; ++i) v.push_back(v.back() + (i % 2 ? 3.0 : -2.0));
    const auto s = from_values("a", v);
    Ar1Options opt;
    opt.intercept = false;
    EXPECT_NEAR(fit_ar1(s, 52 * support::kDay, opt).phi, 0.5, 1e-9);
}

TEST(Ar1, DegenerateAndShort) {
    try {
        fit_ar1_values(std::vector<double>{1, 2, 3, 4, 5});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateFit);
    }
    try {
        fit_ar1_values(std::vector<double>{1, 2, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
    }
}

TEST(Ar1, ForecastIteratesDifferences) {
    AR1Params p;
    p.phi = 0.5;
    p.intercept = 0.1;
    const auto f = ar1_forecast(p, std::vector<double>{10.0, 12.0}, 3);
    // d: 2 -> 1.1 -> 0.65 -> 0.425
    EXPECT_NEAR(f[0], 13.1, 1e-12);
    EXPECT_NEAR(f[1], 13.75, 1e-12);
    EXPECT_NEAR(f[2], 14.175, 1e-12);
}

TEST(Ar1, LogSpaceForecastIsPositive) {
    AR1Params p;
    p.phi = 0.9;
    p.log_space = true;
    const auto f = ar1_forecast(p, std::vector<double>{100.0, 50.0}, 50);
    for (double x : f) EXPECT_GT(x, 0.0);
}

TEST(Ar1, ParamsCsv) {
    AR1Params p;
    p.instrument_id = "abc";
    p.phi = 0.25;
    p.intercept = -0.5;
    std::ostringstream out;
    write_ar1_params(out, {p});
    EXPECT_EQ(out.str(), "instrument_id,phi,intercept\nabc,0.25,-0.5\n");
}

TEST(Forecasters, FallbacksAndOracle) {
    std::mt19937_64 rng(1);
    const auto s = support::random_walk("x", 50, rng);
    const auto& v = s.values();
    const auto& ts = s.timestamps();
    History h{std::span<const double>(v).first(20), std::span<const Timestamp>(ts).first(20), "x", 20};

    Ar1Forecaster flat({});
    EXPECT_EQ(flat.forecast(h, 4), std::vector<double>(4, v[19]));

    OracleForecaster oracle({s});
    const auto f = oracle.forecast(h, 5);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(f[k], v[20 + k]);

    ChanceForecaster chance({1.0, 3});
    EXPECT_GT(chance.forecast(h, 3).back(), v[19]);
}

TEST(Forecasters, DegenerateSeriesFallsBackToRandomWalk) {
    const auto lin = from_values("lin", {1, 2, 3, 4, 5, 6});
    const auto params = fit_ar1_all({lin}, 100 * support::kDay);
    EXPECT_EQ(params.at("lin").phi, 0.0);
    EXPECT_EQ(params.at("lin").intercept, 0.0);
}

#include "finfm/checkpoint.hpp"
#include "finfm/model.hpp"
#include "oracles/naive_forward.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace finfm;

namespace {

ModelConfig tiny(int layers = 1, int hidden = 8, int heads = 1) {
    ModelConfig c;
    c.input_patch_len = 4;
    c.output_patch_len = 8;
    c.num_layers = layers;
    c.hidden_dim = hidden;
    c.num_heads = heads;
    c.max_context = 32;
    return c;
}

std::vector<double> walk(std::size_t n, std::uint64_t seed, double vol = 0.05) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, vol);
    std::vector<double> v(n);
    double x = 4.0;
    for (auto& e : v) e = (x += z(rng));
    return v;
}

/// Perturbs every parameter so biases and gains are non-trivial.
ForecasterState jittered(const ModelConfig& c, std::uint64_t seed) {
    auto s = init_random(c, seed);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> z(0.0, 0.1);
    for (auto& p : s.params) p += z(rng);
    return s;
}

} // namespace

TEST(Config, Invariants) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    c.output_patch_len = 32;
    EXPECT_THROW(c.validate(), Error);
    c = ModelConfig{};
    c.max_context = 500;
    EXPECT_THROW(c.validate(), Error);
    c = ModelConfig{};
    c.num_heads = 3;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Init, DeterministicPerSeed) {
    const auto a = init_random(tiny(), 1);
    const auto b = init_random(tiny(), 1);
    const auto c = init_random(tiny(), 2);
    EXPECT_EQ(a.params, b.params);
    EXPECT_NE(a.params, c.params);
}

TEST(Init, ToyParameterCountMatchesClosedForm) {
    ModelConfig toy;  // 4 layers, hidden 128
    EXPECT_EQ(parameter_count(toy), oracle::parameter_count(toy));
    EXPECT_EQ(init_random(toy, 0).params.size(), oracle::parameter_count(toy));
    for (auto c : {tiny(), tiny(2, 16, 2), tiny(3, 12, 3)}) EXPECT_EQ(parameter_count(c), oracle::parameter_count(c));
}

TEST(Init, FirstForwardIsFinite) {
    const auto s = init_random(ModelConfig{}, 7);
    const auto out = forward(s, patchify(walk(512, 1), s.config));
    EXPECT_TRUE(out.allFinite());
}

TEST(Patchify, SixtyFourIsTwoFullPatches) {
    ModelConfig c;
    const auto ps = patchify(walk(64, 1), c);
    EXPECT_EQ(ps.size(), 2u);
    EXPECT_EQ(ps.pad.sum(), 0.0);
    EXPECT_EQ(std::count(ps.masked.begin(), ps.masked.end(), true), 0);
}

TEST(Patchify, FortyIsLeftPaddedAndReconstructs) {
    ModelConfig c;
    const auto z = walk(40, 2);
    const auto ps = patchify(z, c);
    ASSERT_EQ(ps.size(), 2u);
    for (int i = 0; i < 32; ++i) EXPECT_EQ(ps.pad(0, i), i < 24 ? 1.0 : 0.0);
    EXPECT_FALSE(ps.masked[0]);
    EXPECT_EQ(ps.unmasked_values(), z);
}

TEST(Patchify, TooLong) {
    try {
        patchify(walk(513, 3), ModelConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ContextTooLong);
    }
}

TEST(Forward, ShapeIsPatchesByOutputLength) {
    const auto s = init_random(tiny(), 3);
    for (std::size_t n : {1u, 4u, 5u, 17u, 32u}) {
        const auto out = forward(s, patchify(walk(n, n), s.config));
        EXPECT_EQ(out.rows(), static_cast<Eigen::Index>((n + 3) / 4));
        EXPECT_EQ(out.cols(), 8);
    }
}

TEST(Forward, MatchesNaiveOracle) {
    for (auto cfg : {tiny(), tiny(2, 12, 3)}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto s = jittered(cfg, seed);
            for (std::size_t n : {3u, 8u, 13u, 32u}) {
                const auto z = walk(n, seed * 31 + n);
                const auto fast = forward(s, patchify(z, cfg));
                const auto slow = oracle::forward(s, z);
                ASSERT_EQ(static_cast<std::size_t>(fast.rows()), slow.size());
                for (std::size_t r = 0; r < slow.size(); ++r)
                    for (std::size_t c = 0; c < slow[r].size(); ++c)
                        EXPECT_NEAR(fast(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), slow[r][c],
                                    1e-10 * (1.0 + std::abs(slow[r][c])));
            }
        }
    }
}

TEST(Forward, CausalBitwise) {
    const auto s = jittered(tiny(2, 16, 2), 4);
    const auto z = walk(30, 9);
    const auto base = forward(s, patchify(z, s.config));
    // first real patch holds indices 0..1 (two pads); perturb from patch 2 on
    for (std::size_t from = 6; from < z.size(); from += 4) {
        auto y = z;
        for (std::size_t i = from; i < y.size(); ++i) y[i] += 0.3;
        const auto out = forward(s, patchify(y, s.config));
        const auto j = static_cast<Eigen::Index>((from + 2) / 4);
        for (Eigen::Index r = 0; r < j; ++r)
            for (Eigen::Index c = 0; c < out.cols(); ++c) EXPECT_EQ(out(r, c), base(r, c));
    }
}

TEST(Forward, ShiftAndScaleEquivariant) {
    // normalization by the first patch makes f(a z + b) = a f(z) + b
    const auto s = jittered(tiny(2, 16, 2), 5);
    const auto z = walk(27, 10);
    const auto base = forward(s, patchify(z, s.config));
    for (auto [a, b] : {std::pair{1.0, 3.0}, std::pair{2.5, -1.0}, std::pair{0.5, 0.0}}) {
        auto y = z;
        for (auto& v : y) v = a * v + b;
        const auto out = forward(s, patchify(y, s.config));
        EXPECT_LT((out - (a * base.array() + b).matrix()).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Decode, OneOutputPatchIsOnePass) {
    const auto s = jittered(tiny(), 6);
    const auto z = walk(20, 11);
    const auto f = autoregressive_forecast(s, z, 8);
    const auto row = forward(s, patchify(z, s.config));
    ASSERT_EQ(f.size(), 8u);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(f[static_cast<std::size_t>(i)], row(row.rows() - 1, i));
}

TEST(Decode, PrefixConsistent) {
    const auto s = jittered(tiny(), 7);
    const auto z = walk(20, 12);
    const auto longest = autoregressive_forecast(s, z, 41);
    ASSERT_EQ(longest.size(), 41u);
    for (std::size_t h = 1; h <= 40; ++h) {
        const auto f = autoregressive_forecast(s, z, h);
        ASSERT_EQ(f.size(), h);
        for (std::size_t i = 0; i < h; ++i) EXPECT_EQ(f[i], longest[i]);
    }
}

TEST(Decode, LongContextTruncated) {
    const auto s = jittered(tiny(), 8);
    const auto z = walk(45, 13);
    const auto all = autoregressive_forecast(s, z, 20);
    const auto tail = autoregressive_forecast(s, std::span<const double>(z).last(32), 20);
    EXPECT_EQ(all, tail);
}

TEST(Decode, DefaultGeometryTruncatesSixHundred) {
    const auto s = init_random(ModelConfig{}, 9);
    const auto z = walk(600, 14);
    EXPECT_EQ(autoregressive_forecast(s, z, 130), autoregressive_forecast(s, std::span<const double>(z).last(512), 130));
}

TEST(Checkpoint, RoundTripBitwise) {
    const auto s = jittered(tiny(2, 16, 2), 10);
    std::stringstream buf;
    save_parameters(buf, s);
    const auto back = load_parameters(buf);
    EXPECT_EQ(back.config, s.config);
    EXPECT_EQ(back.params, s.params);
    EXPECT_EQ(back.init_seed, s.init_seed);
}

TEST(Checkpoint, RejectsWrongVersionAndTruncation) {
    const auto s = init_random(tiny(), 1);
    std::stringstream buf;
    save_parameters(buf, s);
    auto text = buf.str();
    {
        auto bad = text;
        bad.replace(bad.find("FINFM-PARAMS 1"), 14, "FINFM-PARAMS 9");
        std::istringstream in(bad);
        EXPECT_THROW(load_parameters(in), Error);
    }
    {
        std::istringstream in(text.substr(0, text.size() - 8));
        EXPECT_THROW(load_parameters(in), Error);
    }
}

#include "cli_fixture.hpp"

#include <gtest/gtest.h>

using namespace finfm;
namespace fs = std::filesystem;

TEST(Config, DefaultsRoundTrip) {
    RunConfig c;
    c.train.peak_lr = 0.125;
    c.eval_horizons = {2, 16};
    c.strategy = Strategy::basic;
    std::stringstream buf;
    write_config(buf, c);
    const auto back = parse_config(buf);
    std::stringstream again;
    write_config(again, back);
    EXPECT_EQ(buf.str(), again.str());
    EXPECT_EQ(back.train.peak_lr, 0.125);
    EXPECT_EQ(back.eval_horizons, (std::vector<int>{2, 16}));
}

TEST(Config, UnknownKeyIsNamed) {
    std::istringstream in("hidden_dim = 64\nlearning_rate = 0.1\n");
    try {
        parse_config(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }
}

TEST(Config, WarmupMustPrecedeTotal) {
    std::istringstream in("warmup_epochs = 10\ntotal_epochs = 10\n");
    try {
        parse_config(in);
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("warmup_epochs"), std::string::npos);
        EXPECT_NE(msg.find("total_epochs"), std::string::npos);
    }
}

TEST(Config, SharedKeysSetBothSides) {
    std::istringstream in("max_context = 64\noutput_len = 16\ninput_patch_len = 8\nmin_context = 8\n");
    const auto c = parse_config(in);
    EXPECT_EQ(c.model.max_context, 64);
    EXPECT_EQ(c.train.max_context, 64);
    EXPECT_EQ(c.model.output_patch_len, 16);
    EXPECT_EQ(c.train.output_len, 16);
}

TEST(Ingest, EmptyDirectoryIsFatal) {
    const auto dir = support::temp_dir("ingest_empty");
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_ingest(dir, dir / "m.csv", log), cli::kFatal);
}

TEST(Ingest, ValidFilesListed) {
    const auto dir = support::temp_dir("ingest_ok");
    support::write_dataset(dir / "data", 1, 3, 40);
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_ingest(dir / "data", dir / "m.csv", log), cli::kSuccess);
    const auto m = read_manifest(dir / "m.csv");
    ASSERT_EQ(m.entries.size(), 3u);
    for (const auto& e : m.entries) {
        EXPECT_EQ(e.market, "mkt0");
        EXPECT_EQ(e.points, 40u);
    }
    EXPECT_NE(log.str().find("daily,mkt0,3,120"), std::string::npos);
}

TEST(Ingest, InvalidFilesAreReportedAndSkipped) {
    const auto dir = support::temp_dir("ingest_mixed");
    support::write_dataset(dir / "data", 1, 2, 40);
    {
        std::ofstream bad(dir / "data" / "daily" / "mkt0" / "bad.csv");
        bad << "timestamp,close\n1,10\n2,-3\n";
    }
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_ingest(dir / "data", dir / "m.csv", log), cli::kPartial);
    EXPECT_EQ(read_manifest(dir / "m.csv").entries.size(), 2u);
    EXPECT_NE(log.str().find("bad.csv"), std::string::npos);

    const auto only_bad = support::temp_dir("ingest_bad");
    fs::create_directories(only_bad / "daily" / "x");
    fs::copy_file(dir / "data" / "daily" / "mkt0" / "bad.csv", only_bad / "daily" / "x" / "bad.csv");
    EXPECT_EQ(cli::cmd_ingest(only_bad, only_bad / "m.csv", log), cli::kFatal);
}

TEST(Train, CurveAndReproducibleArtifacts) {
    auto o = support::prepared("cli_train", 1, 4, 400);
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_train(o, log), cli::kSuccess) << log.str();
    const auto curve = support::read_lines(fs::path(o.out_dir) / "loss_curve.csv");
    EXPECT_EQ(curve.size(), 1u + 3u);  // header + total_epochs
    const auto first = cli::sha256_file(fs::path(o.out_dir) / "model.finfm");
    const auto manifest = nlohmann::json::parse(cli::read_file(fs::path(o.out_dir) / "run_manifest.json"));
    EXPECT_EQ(manifest["artifacts"]["model.finfm"], first);

    ASSERT_EQ(cli::cmd_train(o, log), cli::kSuccess);
    EXPECT_EQ(cli::sha256_file(fs::path(o.out_dir) / "model.finfm"), first);
}

TEST(Train, CheckpointsEveryEpoch) {
    auto o = support::prepared("cli_ckpt", 1, 3, 300, "checkpoint_every = 1\n");
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_train(o, log), cli::kSuccess);
    for (int e = 1; e <= 3; ++e)
        EXPECT_TRUE(fs::exists(fs::path(o.out_dir) / ("checkpoint_epoch_" + std::to_string(e) + ".finfm")));
}

TEST(Train, MissingManifestIsFatal) {
    cli::Options o;
    o.out_dir = support::temp_dir("cli_nomanifest").string();
    std::ostringstream log;
    EXPECT_EQ(cli::guarded([&] { return cli::cmd_train(o, log); }, log), cli::kFatal);
}

TEST(Eval, DefaultHorizonsAndOracle) {
    auto o = support::prepared("cli_eval", 1, 3, 500);
    std::ostringstream log;
    o.predictors = {"oracle"};
    ASSERT_EQ(cli::cmd_eval(o, log), cli::kSuccess) << log.str();
    const auto rows = support::read_lines(fs::path(o.out_dir) / "eval.csv");
    ASSERT_EQ(rows.size(), 8u);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NE(rows[i].find(",1,1,"), std::string::npos) << rows[i];

    o.horizons = {4};
    o.predictors = {"chance", "ar1"};
    ASSERT_EQ(cli::cmd_eval(o, log), cli::kSuccess);
    EXPECT_EQ(support::read_lines(fs::path(o.out_dir) / "eval_chance.csv").size(), 2u);
    EXPECT_EQ(support::read_lines(fs::path(o.out_dir) / "ar1_params.csv").size(), 4u);
}

TEST(Eval, ModelWithoutCheckpointIsFatal) {
    auto o = support::prepared("cli_eval_nockpt", 1, 2, 400);
    std::ostringstream log;
    EXPECT_EQ(cli::guarded([&] { return cli::cmd_eval(o, log); }, log), cli::kFatal);
    EXPECT_NE(log.str().find("--checkpoint"), std::string::npos);
}

TEST(Backtest, ReportsAuditsAndComparison) {
    auto o = support::prepared("cli_backtest", 4, 2, 360);
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_train(o, log), cli::kSuccess);
    o.checkpoint = (fs::path(o.out_dir) / "model.finfm").string();
    o.horizons = {2, 8};
    o.predictors = {"model", "chance", "ar1", "oracle"};
    ASSERT_EQ(cli::cmd_backtest(o, log), cli::kSuccess) << log.str();
    const fs::path out(o.out_dir);

    const auto report = support::read_lines(out / "backtest_mkt0_chance.csv");
    ASSERT_EQ(report.size(), 3u);
    EXPECT_EQ(report[0], std::string(kReportHeader));
    const auto audit = support::read_lines(out / "audit_mkt2_model.csv");
    ASSERT_EQ(audit.size(), 3u);
    for (std::size_t i = 1; i < audit.size(); ++i) EXPECT_NE(audit[i].find(",neutral,true,"), std::string::npos) << audit[i];

    const auto cmp = support::read_lines(out / "comparison_sharpe_h8.csv");
    ASSERT_EQ(cmp.size(), 5u);
    EXPECT_EQ(cmp[0], "market,model,chance,ar1,oracle");
    for (std::size_t i = 1; i < cmp.size(); ++i)
        EXPECT_EQ(std::count(cmp[i].begin(), cmp[i].end(), ','), 4);
    EXPECT_TRUE(fs::exists(out / "comparison_neutral_cost_h2.csv"));
    EXPECT_TRUE(fs::exists(out / "pnl_mkt3_oracle_h2.csv"));
}

TEST(Backtest, ShortMarketIsSkippedWithPartialExit) {
    auto o = support::prepared("cli_backtest_short", 1, 2, 200, "context_len = 200\nmax_context = 256\n");
    o.predictors = {"chance"};
    o.horizons = {2};
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_backtest(o, log), cli::kPartial);
    EXPECT_NE(log.str().find("skipped"), std::string::npos);
}

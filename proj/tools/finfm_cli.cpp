// finfm: ingest price CSVs, train the forecaster, evaluate directional
// accuracy and run mock-trading backtests.
//
// Every flag can also be set through an environment variable named
// FINFM_<FLAG>, e.g. FINFM_DATA_MANIFEST or FINFM_THREADS.

#include "finfm/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using finfm::cli::Options;

void add_common(CLI::App& cmd, Options& o) {
    cmd.add_option("--config", o.config_path, "key = value run configuration")->envname("FINFM_CONFIG");
    cmd.add_option("--data-manifest", o.data_manifest, "manifest written by 'ingest'")
        ->envname("FINFM_DATA_MANIFEST");
    cmd.add_option("--out-dir", o.out_dir, "output directory")->envname("FINFM_OUT_DIR");
    cmd.add_option("--seed", o.seed, "overrides the config seed")->envname("FINFM_SEED");
    cmd.add_option("--threads", o.threads, "worker cap")->envname("FINFM_THREADS");
    cmd.add_option("--checkpoint", o.checkpoint, "parameter file")->envname("FINFM_CHECKPOINT");
}

void add_prediction(CLI::App& cmd, Options& o) {
    cmd.add_option("--horizon", o.horizons, "horizons, comma separated")
        ->delimiter(',')
        ->envname("FINFM_HORIZON");
    cmd.add_option("--predictor", o.predictors, "model|original|chance|ar1|oracle, comma separated")
        ->delimiter(',')
        ->check(CLI::IsMember({"model", "original", "chance", "ar1", "oracle"}))
        ->envname("FINFM_PREDICTOR");
    cmd.add_option("--original-checkpoint", o.original_checkpoint, "imported parameters for 'original'")
        ->envname("FINFM_ORIGINAL_CHECKPOINT");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patched decoder-only forecaster for financial prices"};
    app.require_subcommand(1);

    std::string data_dir, manifest_out = "manifest.csv";
    auto* ingest = app.add_subcommand("ingest", "validate <granularity>/<market>/<instrument>.csv files");
    ingest->add_option("data_dir", data_dir, "data root")->required();
    ingest->add_option("--manifest-out", manifest_out, "manifest path")->envname("FINFM_MANIFEST_OUT");

    Options train_opts, eval_opts, bt_opts;
    auto* train = app.add_subcommand("train", "train from a config and data manifest");
    add_common(*train, train_opts);

    auto* eval = app.add_subcommand("eval", "stepwise directional evaluation on the test period");
    add_common(*eval, eval_opts);
    add_prediction(*eval, eval_opts);

    auto* bt = app.add_subcommand("backtest", "mock trading per market and horizon");
    add_common(*bt, bt_opts);
    add_prediction(*bt, bt_opts);
    std::string strategy, start;
    bt->add_option("--strategy", strategy, "basic|neutral")
        ->check(CLI::IsMember({"basic", "neutral"}))
        ->envname("FINFM_STRATEGY");
    bt->add_option("--start", start, "first trading day, YYYY-MM-DD")->envname("FINFM_START");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : finfm::cli::kFatal;
    }

    using namespace finfm::cli;
    if (*ingest) return guarded([&] { return cmd_ingest(data_dir, manifest_out); });
    if (*train) return guarded([&] { return cmd_train(train_opts); });
    if (*eval) return guarded([&] { return cmd_eval(eval_opts); });
    if (!strategy.empty()) bt_opts.strategy = strategy;
    if (!start.empty()) bt_opts.start = start;
    return guarded([&] { return cmd_backtest(bt_opts); });
}

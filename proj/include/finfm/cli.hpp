#pragma once

// Command implementations behind tools/finfm. Each command writes its
// outputs plus run_manifest.json into the output directory and returns a
// process exit code: 0 success, 1 partial (something was skipped), 2 fatal.

#include "finfm/backtest.hpp"
#include "finfm/checkpoint.hpp"
#include "finfm/config.hpp"
#include "finfm/eval.hpp"
#include "finfm/forecaster.hpp"
#include "finfm/train.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace finfm::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kSuccess = 0, kPartial = 1, kFatal = 2 };

inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::Io, "sha256 failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p)); }

/// Record of one command run. Artifact paths are relative to out_dir.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::map<std::string, std::uint64_t> seeds;
    std::string data_manifest;
    std::string out_dir;
    std::map<std::string, std::string> artifacts;  // path -> sha256

    void add(const fs::path& file) {
        artifacts[fs::relative(file, out_dir).generic_string()] = sha256_file(file);
    }

    nlohmann::json to_json() const {
        return {{"command", command}, {"config_path", config_path}, {"seeds", seeds},
                {"data_manifest", data_manifest}, {"out_dir", out_dir}, {"artifacts", artifacts}};
    }

    void write() const {
        std::ofstream out(fs::path(out_dir) / "run_manifest.json");
        out << to_json().dump(2) << '\n';
        if (!out) throw Error(ErrorCode::Io, "cannot write run manifest in " + out_dir);
    }
};

/// Options shared by the commands; flags and environment variables fill it.
struct Options {
    std::string config_path;
    std::string data_manifest;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::vector<int> horizons;  // empty: from config
    std::optional<std::string> strategy;
    std::vector<std::string> predictors{"model"};
    std::optional<int> threads;
    std::string checkpoint;           // parameters for the "model" predictor, or initial weights for train
    std::string original_checkpoint;  // imported parameters for the "original" predictor
    std::optional<std::string> start;
};

inline RunConfig resolve_config(const Options& o) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) c.train.seed = *o.seed;
    if (o.threads) c.train.threads = *o.threads;
    if (o.strategy) c.strategy = parse_strategy(*o.strategy);
    if (o.start) c.backtest_start = parse_date(*o.start);
    c.validate();
    return c;
}

inline fs::path ensure_out_dir(const Options& o) {
    fs::create_directories(o.out_dir);
    return fs::path(o.out_dir);
}

inline RunManifest start_manifest(const std::string& command, const Options& o, const RunConfig& c) {
    RunManifest m;
    m.command = command;
    m.config_path = o.config_path;
    m.seeds = {{"seed", c.train.seed}, {"init_seed", c.init_seed}};
    m.data_manifest = o.data_manifest;
    m.out_dir = o.out_dir;
    return m;
}

// ---- ingest -------------------------------------------------------------

/// Scans `<granularity>/<market>/<instrument>.csv` under data_dir, validates
/// every file and writes the manifest for the valid ones.
inline int cmd_ingest(const fs::path& data_dir, const fs::path& manifest_out, std::ostream& log = std::cerr) {
    std::vector<fs::path> files;
    if (fs::is_directory(data_dir))
        for (const auto& e : fs::recursive_directory_iterator(data_dir))
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        log << "error: no CSV files under " << data_dir.string() << '\n';
        return kFatal;
    }

    DataManifest manifest{fs::absolute(data_dir).lexically_normal(), {}};
    std::vector<std::string> errors;
    for (const auto& f : files) {
        const auto rel = fs::relative(f, data_dir);
        std::vector<std::string> parts;
        for (const auto& p : rel) parts.push_back(p.string());
        try {
            if (parts.size() != 3) throw Error(ErrorCode::MalformedRow, "expected <granularity>/<market>/<instrument>.csv");
            const auto g = parse_granularity(parts[0]);
            const auto s = load_series_csv(f, g);
            manifest.entries.push_back({rel.generic_string(), g, parts[1], s.id(), s.size()});
        } catch (const std::exception& e) {
            errors.push_back(rel.generic_string() + ": " + e.what());
        }
    }
    for (const auto& e : errors) log << "error: " << e << '\n';
    if (manifest.entries.empty()) return kFatal;

    if (manifest_out.has_parent_path()) fs::create_directories(manifest_out.parent_path());
    std::ofstream out(manifest_out);
    write_manifest(out, manifest);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + manifest_out.string());

    // per (granularity, market): series and points
    std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> summary;
    for (const auto& e : manifest.entries) {
        auto& [n, pts] = summary[{std::string(to_string(e.granularity)), e.market}];
        ++n;
        pts += e.points;
    }
    log << "granularity,market,series,points\n";
    for (const auto& [key, v] : summary)
        log << key.first << ',' << key.second << ',' << v.first << ',' << v.second << '\n';
    return errors.empty() ? kSuccess : kPartial;
}

// ---- shared loading -----------------------------------------------------

struct LoadedData {
    DataManifest manifest;
    std::vector<PriceSeries> series;
    std::vector<std::string> markets;  // parallel to series
};

inline LoadedData load_data(const Options& o) {
    if (o.data_manifest.empty()) throw Error(ErrorCode::InvalidConfig, "--data-manifest is required");
    LoadedData d;
    d.manifest = read_manifest(o.data_manifest);
    for (const auto& e : d.manifest.entries) {
        d.series.push_back(load_entry(d.manifest, e));
        d.markets.push_back(e.market);
    }
    if (d.series.empty()) throw Error(ErrorCode::InsufficientData, "data manifest lists no series");
    return d;
}

inline ForecasterState load_checkpoint(const std::string& path, const char* flag) {
    if (path.empty()) throw Error(ErrorCode::ParameterFile, std::string(flag) + " is required for this predictor");
    if (!fs::exists(path)) throw Error(ErrorCode::ParameterFile, "missing checkpoint " + path);
    return load_parameters(fs::path(path));
}

/// Everything a predictor may be built from. States are owned here so the
/// forecasters can hold references.
struct PredictorContext {
    const RunConfig& config;
    const Options& options;
    const SeriesSplit& split;
    const std::vector<PriceSeries>& truth;
    std::map<std::string, ForecasterState> states;
    std::map<std::string, AR1Params, std::less<>> ar1;
    std::vector<PriceSeries> chance_pool;
};

inline std::unique_ptr<Forecaster> make_predictor(const std::string& name, PredictorContext& ctx) {
    if (name == "model" || name == "original") {
        if (!ctx.states.contains(name))
            ctx.states.emplace(name, name == "model" ? load_checkpoint(ctx.options.checkpoint, "--checkpoint")
                                                     : load_checkpoint(ctx.options.original_checkpoint,
                                                                       "--original-checkpoint"));
        return std::make_unique<ModelForecaster>(ctx.states.at(name));
    }
    if (name == "chance") {
        const auto& pool = ctx.config.chance_source == ChanceSource::train ? ctx.split.train : ctx.chance_pool;
        return std::make_unique<ChanceForecaster>(fit_chance(pool, ctx.config.train.seed));
    }
    if (name == "ar1") {
        if (ctx.ar1.empty()) ctx.ar1 = fit_ar1_all(ctx.truth, ctx.config.cutoff, ctx.config.ar1);
        return std::make_unique<Ar1Forecaster>(ctx.ar1);
    }
    if (name == "oracle") return std::make_unique<OracleForecaster>(ctx.truth);
    throw Error(ErrorCode::InvalidConfig, "unknown predictor '" + name + "' (model, original, chance, ar1, oracle)");
}

inline std::vector<PriceSeries> post_cutoff(const std::vector<PriceSeries>& all, Timestamp cutoff) {
    std::vector<PriceSeries> out;
    for (const auto& s : all) {
        const auto& ts = s.timestamps();
        const auto i = static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), cutoff) - ts.begin());
        if (ts.size() - i >= 2)
            out.emplace_back(s.id(), s.granularity(), std::vector<Timestamp>(ts.begin() + i, ts.end()),
                             std::vector<double>(s.values().begin() + i, s.values().end()));
    }
    return out;
}

// ---- train --------------------------------------------------------------

inline int cmd_train(const Options& o, std::ostream& log = std::cerr) {
    const RunConfig c = resolve_config(o);
    const auto data = load_data(o);
    const auto dir = ensure_out_dir(o);
    auto manifest = start_manifest("train", o, c);

    const auto split = make_split(data.series, c.cutoff, c.val_fraction, c.train.seed, c.effective_min_length(), &log);
    std::optional<ForecasterState> initial;
    if (!o.checkpoint.empty()) initial = load_checkpoint(o.checkpoint, "--checkpoint");
    else initial = init_random(c.model, c.init_seed);

    std::vector<fs::path> snapshots;
    auto result = train(split, c.model, c.train, &*initial,
                        [&](int epoch, const EpochLoss& loss, const ForecasterState& state) {
                            log << "epoch " << epoch << " train_loss " << format_double(loss.train_loss)
                                << " val_loss " << format_double(loss.val_loss) << '\n';
                            if (c.checkpoint_every > 0 && epoch % c.checkpoint_every == 0) {
                                auto p = dir / ("checkpoint_epoch_" + std::to_string(epoch) + ".finfm");
                                save_parameters(p, state);
                                snapshots.push_back(p);
                            }
                        });

    const auto params = dir / "model.finfm";
    save_parameters(params, result.state);
    const auto curve = dir / "loss_curve.csv";
    {
        std::ofstream out(curve);
        write_loss_curve(out, result.curve);
    }
    manifest.add(params);
    manifest.add(curve);
    for (const auto& p : snapshots) manifest.add(p);
    manifest.write();
    return kSuccess;
}

// ---- eval ---------------------------------------------------------------

inline int cmd_eval(const Options& o, std::ostream& log = std::cerr) {
    const RunConfig c = resolve_config(o);
    const auto data = load_data(o);
    const auto dir = ensure_out_dir(o);
    auto manifest = start_manifest("eval", o, c);

    const auto split = make_split(data.series, c.cutoff, c.val_fraction, c.train.seed, c.effective_min_length(), &log);
    PredictorContext ctx{c, o, split, data.series, {}, {}, post_cutoff(data.series, c.cutoff)};
    const auto horizons = o.horizons.empty() ? c.eval_horizons : o.horizons;

    EvalProtocol base;
    base.context_len = c.context_len;
    base.total_horizon = c.total_horizon;
    base.max_context = c.model.max_context;
    base.ties = c.ties;
    // targets start at the cutoff: the first origin is the first test-period index
    auto origin = [&](const PriceSeries& s) {
        const auto& ts = s.timestamps();
        return static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), c.cutoff) - ts.begin());
    };

    bool skipped = false;
    for (const auto& name : o.predictors) {
        auto predictor = make_predictor(name, ctx);
        const double up_ratio =
            fit_chance(c.chance_source == ChanceSource::train ? split.train : ctx.chance_pool).up_ratio;
        const auto report = evaluate_horizons(*predictor, split.test, horizons, base, up_ratio, origin);
        if (report.skipped_series > 0) {
            log << "warning: " << report.skipped_series << " (series, horizon) pairs too short, skipped\n";
            skipped = true;
        }
        const auto suffix = o.predictors.size() > 1 ? "_" + name : std::string();
        const auto csv = dir / ("eval" + suffix + ".csv");
        const auto plot = dir / ("eval_plot" + suffix + ".csv");
        {
            std::ofstream out(csv);
            write_eval_csv(out, report);
            std::ofstream pout(plot);
            write_eval_plot_data(pout, report, name);
        }
        manifest.add(csv);
        manifest.add(plot);
        if (name == "ar1") {
            const auto p = dir / "ar1_params.csv";
            std::vector<AR1Params> fitted;
            for (const auto& [id, a] : ctx.ar1) fitted.push_back(a);
            std::ofstream out(p);
            write_ar1_params(out, fitted);
            out.close();
            manifest.add(p);
        }
    }
    manifest.write();
    return skipped ? kPartial : kSuccess;
}

// ---- backtest -----------------------------------------------------------

/// Per market and horizon: horizon report (Sharpe, drawdown, returns, volatility, neutral cost), cumulative PnL plot data
/// and a neutrality audit. With several predictors, Sharpe and neutral-cost
/// comparison matrices (market x predictor) are written per horizon.
inline int cmd_backtest(const Options& o, std::ostream& log = std::cerr) {
    const RunConfig c = resolve_config(o);
    const auto data = load_data(o);
    const auto dir = ensure_out_dir(o);
    auto manifest = start_manifest("backtest", o, c);

    const auto split = make_split(data.series, c.cutoff, c.val_fraction, c.train.seed, c.effective_min_length(), &log);
    PredictorContext ctx{c, o, split, data.series, {}, {}, post_cutoff(data.series, c.cutoff)};
    const auto horizons = o.horizons.empty() ? c.backtest_horizons : o.horizons;

    std::map<std::string, std::vector<PriceSeries>> markets;
    for (std::size_t i = 0; i < data.series.size(); ++i) markets[data.markets[i]].push_back(data.series[i]);
    std::vector<std::string> market_names;
    for (const auto& [m, s] : markets) market_names.push_back(m);

    std::map<int, std::map<std::pair<std::string, std::string>, std::optional<double>>> sharpe, cost;
    bool skipped = false;
    const bool compare = o.predictors.size() > 1;
    for (const auto& name : o.predictors) {
        for (const auto& [market, series] : markets) {
            const std::string tag = market + (compare ? "_" + name : std::string());
            std::vector<ReportRow> rows;
            std::ostringstream audit;
            audit << "horizon,strategy,row_sum_zero,max_abs_row_sum\n";
            for (int h : horizons) {
                auto predictor = make_predictor(name, ctx);  // fresh rng per run
                BacktestConfig bc{h, c.strategy, c.backtest_start, c.context_len};
                BacktestResult r;
                try {
                    r = run_backtest(*predictor, series, bc);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::SeriesTooShort && e.code() != ErrorCode::InsufficientData) throw;
                    log << "warning: " << market << " h=" << h << " skipped: " << e.what() << '\n';
                    skipped = true;
                    continue;
                }
                rows.push_back(to_row(h, r.report));
                sharpe[h][{market, name}] = r.report.ann_sharpe;
                cost[h][{market, name}] = r.report.neutral_cost_pct;
                audit << h << ',' << to_string(c.strategy) << ','
                      << (r.max_abs_row_sum <= 1e-12 ? "true" : "false") << ',' << format_double(r.max_abs_row_sum)
                      << '\n';
                const auto pnl = dir / ("pnl_" + tag + "_h" + std::to_string(h) + ".csv");
                std::ofstream pout(pnl);
                write_pnl_csv(pout, r);
                pout.close();
                manifest.add(pnl);
            }
            if (rows.empty()) continue;
            const auto report_path = dir / ("backtest_" + tag + ".csv");
            const auto audit_path = dir / ("audit_" + tag + ".csv");
            {
                std::ofstream out(report_path);
                write_report_csv(out, rows);
                std::ofstream aout(audit_path);
                aout << audit.str();
            }
            manifest.add(report_path);
            manifest.add(audit_path);
        }
    }
    if (compare) {
        for (int h : horizons) {
            const auto sp = dir / ("comparison_sharpe_h" + std::to_string(h) + ".csv");
            const auto cp = dir / ("comparison_neutral_cost_h" + std::to_string(h) + ".csv");
            {
                std::ofstream out(sp);
                write_comparison_csv(out, market_names, o.predictors, sharpe[h]);
                std::ofstream cout_(cp);
                write_comparison_csv(cout_, market_names, o.predictors, cost[h]);
            }
            manifest.add(sp);
            manifest.add(cp);
        }
    }
    manifest.write();
    return skipped ? kPartial : kSuccess;
}

/// Runs a command body, mapping exceptions to the fatal exit code.
template <typename F>
int guarded(F&& body, std::ostream& log = std::cerr) {
    try {
        return body();
    } catch (const Error& e) {
        log << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
    }
    return kFatal;
}

} // namespace finfm::cli

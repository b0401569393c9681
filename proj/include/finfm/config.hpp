#pragma once

// Flat `key = value` run configuration. Blank lines and `#` comments are
// ignored; unknown keys are fatal.

#include "finfm/backtest.hpp"
#include "finfm/eval.hpp"
#include "finfm/model.hpp"
#include "finfm/train.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace finfm {

enum class ChanceSource { train, test };

struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    Timestamp cutoff = parse_date("2023-01-01");
    double val_fraction = 0.25;
    std::size_t min_series_length = 0;  // 0: min_context + 1
    int checkpoint_every = 0;           // epochs; 0 disables
    std::uint64_t init_seed = 0;

    std::vector<int> eval_horizons{2, 4, 8, 16, 32, 64, 128};
    int total_horizon = 128;
    int context_len = 512;
    TieRule ties = TieRule::down;
    ChanceSource chance_source = ChanceSource::train;

    Ar1Options ar1;

    std::vector<int> backtest_horizons{2, 4, 8, 16, 32, 64, 128};
    Strategy strategy = Strategy::neutral;
    Timestamp backtest_start = parse_date("2023-01-01");

    std::size_t effective_min_length() const {
        return min_series_length > 0 ? min_series_length : static_cast<std::size_t>(train.min_context) + 1;
    }

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
        if (train.warmup_epochs >= train.total_epochs)
            fail("warmup_epochs (" + std::to_string(train.warmup_epochs) + ") must be less than total_epochs (" +
                 std::to_string(train.total_epochs) + ")");
        model.validate();
        train.validate_against(model);
        if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in (0, 1)");
        if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
        if (context_len <= 0) fail("context_len must be positive");
        if (total_horizon <= 0) fail("total_horizon must be positive");
        for (int h : eval_horizons)
            if (h <= 0) fail("eval_horizons entries must be positive");
        for (int h : backtest_horizons)
            if (h < 2) fail("backtest_horizons entries must be at least 2");
    }
};

namespace detail {

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
    T out{};
    if (!parse_number(v, out))
        throw Error(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "': cannot parse '" +
                                                  std::string(v) + "'");
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "': expected true or false");
}

inline std::vector<int> parse_int_list(std::string_view key, std::string_view v) {
    std::vector<int> out;
    for (auto part : split(v, ',')) out.push_back(parse_value<int>(key, part));
    if (out.empty()) throw Error(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "' is empty");
    return out;
}

inline std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

using Setter = std::function<void(RunConfig&, std::string_view)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
    Setter set;
    Getter get;
};

template <typename T, typename F>
Key number_key(std::string name, F field) {
    return {[name, field](RunConfig& c, std::string_view v) { field(c) = parse_value<T>(name, v); },
            [field](const RunConfig& c) {
                RunConfig copy = c;
                if constexpr (std::is_floating_point_v<T>)
                    return format_double(field(copy));
                else
                    return std::to_string(field(copy));
            }};
}

inline const std::map<std::string, Key, std::less<>>& config_keys() {
    static const std::map<std::string, Key, std::less<>> keys = [] {
        std::map<std::string, Key, std::less<>> k;
        k["input_patch_len"] = number_key<int>("input_patch_len", [](RunConfig& c) -> int& { return c.model.input_patch_len; });
        k["output_patch_len"] = number_key<int>("output_patch_len", [](RunConfig& c) -> int& { return c.model.output_patch_len; });
        k["num_layers"] = number_key<int>("num_layers", [](RunConfig& c) -> int& { return c.model.num_layers; });
        k["hidden_dim"] = number_key<int>("hidden_dim", [](RunConfig& c) -> int& { return c.model.hidden_dim; });
        k["num_heads"] = number_key<int>("num_heads", [](RunConfig& c) -> int& { return c.model.num_heads; });
        k["ffn_dim"] = number_key<int>("ffn_dim", [](RunConfig& c) -> int& { return c.model.ffn_dim; });
        k["warmup_epochs"] = number_key<int>("warmup_epochs", [](RunConfig& c) -> int& { return c.train.warmup_epochs; });
        k["total_epochs"] = number_key<int>("total_epochs", [](RunConfig& c) -> int& { return c.train.total_epochs; });
        k["peak_lr"] = number_key<double>("peak_lr", [](RunConfig& c) -> double& { return c.train.peak_lr; });
        k["momentum"] = number_key<double>("momentum", [](RunConfig& c) -> double& { return c.train.momentum; });
        k["grad_clip_max_norm"] =
            number_key<double>("grad_clip_max_norm", [](RunConfig& c) -> double& { return c.train.grad_clip_max_norm; });
        k["batch_size"] = number_key<int>("batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; });
        k["min_context"] = number_key<int>("min_context", [](RunConfig& c) -> int& { return c.train.min_context; });
        k["seed"] = number_key<std::uint64_t>("seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
        k["threads"] = number_key<int>("threads", [](RunConfig& c) -> int& { return c.train.threads; });
        k["val_fraction"] = number_key<double>("val_fraction", [](RunConfig& c) -> double& { return c.val_fraction; });
        k["min_series_length"] =
            number_key<std::size_t>("min_series_length", [](RunConfig& c) -> std::size_t& { return c.min_series_length; });
        k["checkpoint_every"] = number_key<int>("checkpoint_every", [](RunConfig& c) -> int& { return c.checkpoint_every; });
        k["init_seed"] = number_key<std::uint64_t>("init_seed", [](RunConfig& c) -> std::uint64_t& { return c.init_seed; });
        k["total_horizon"] = number_key<int>("total_horizon", [](RunConfig& c) -> int& { return c.total_horizon; });
        k["context_len"] = number_key<int>("context_len", [](RunConfig& c) -> int& { return c.context_len; });

        // one key drives both the model geometry and the window sampler
        k["max_context"] = {[](RunConfig& c, std::string_view v) {
                                c.model.max_context = c.train.max_context = parse_value<int>("max_context", v);
                            },
                            [](const RunConfig& c) { return std::to_string(c.model.max_context); }};
        k["output_len"] = {[](RunConfig& c, std::string_view v) {
                               c.model.output_patch_len = c.train.output_len = parse_value<int>("output_len", v);
                           },
                           [](const RunConfig& c) { return std::to_string(c.train.output_len); }};
        k["cutoff"] = {[](RunConfig& c, std::string_view v) { c.cutoff = parse_date(v); },
                       [](const RunConfig& c) { return format_date(c.cutoff); }};
        k["eval_horizons"] = {[](RunConfig& c, std::string_view v) { c.eval_horizons = parse_int_list("eval_horizons", v); },
                              [](const RunConfig& c) { return join(c.eval_horizons); }};
        k["tie_rule"] = {[](RunConfig& c, std::string_view v) {
                             if (v == "down") c.ties = TieRule::down;
                             else if (v == "exclude") c.ties = TieRule::exclude;
                             else throw Error(ErrorCode::InvalidConfig, "config key 'tie_rule': expected down or exclude");
                         },
                         [](const RunConfig& c) { return std::string(c.ties == TieRule::down ? "down" : "exclude"); }};
        k["chance_source"] = {[](RunConfig& c, std::string_view v) {
                                  if (v == "train") c.chance_source = ChanceSource::train;
                                  else if (v == "test") c.chance_source = ChanceSource::test;
                                  else throw Error(ErrorCode::InvalidConfig, "config key 'chance_source': expected train or test");
                              },
                              [](const RunConfig& c) {
                                  return std::string(c.chance_source == ChanceSource::train ? "train" : "test");
                              }};
        k["ar1_log_space"] = {[](RunConfig& c, std::string_view v) { c.ar1.log_space = parse_bool("ar1_log_space", v); },
                              [](const RunConfig& c) { return std::string(c.ar1.log_space ? "true" : "false"); }};
        k["ar1_intercept"] = {[](RunConfig& c, std::string_view v) { c.ar1.intercept = parse_bool("ar1_intercept", v); },
                              [](const RunConfig& c) { return std::string(c.ar1.intercept ? "true" : "false"); }};
        k["backtest_horizons"] = {[](RunConfig& c, std::string_view v) {
                                      c.backtest_horizons = parse_int_list("backtest_horizons", v);
                                  },
                                  [](const RunConfig& c) { return join(c.backtest_horizons); }};
        k["strategy"] = {[](RunConfig& c, std::string_view v) { c.strategy = parse_strategy(v); },
                         [](const RunConfig& c) { return std::string(to_string(c.strategy)); }};
        k["backtest_start"] = {[](RunConfig& c, std::string_view v) { c.backtest_start = parse_date(v); },
                               [](const RunConfig& c) { return format_date(c.backtest_start); }};
        return k;
    }();
    return keys;
}

} // namespace detail

/// Sets one key; throws InvalidConfig naming the key when it is unknown or malformed.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
    const auto& keys = detail::config_keys();
    const auto it = keys.find(key);
    if (it == keys.end()) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
    try {
        it->second.set(c, value);
    } catch (const Error& e) {
        if (std::string(e.what()).find(key) != std::string::npos) throw;
        throw Error(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "': " + e.what());
    }
}

inline RunConfig parse_config(std::istream& in) {
    RunConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view text = line;
        if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
        text = detail::trim(text);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(c, detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    return parse_config(in);
}

/// Every key with its current value, sorted by key; parse_config accepts the output.
inline void write_config(std::ostream& out, const RunConfig& c) {
    for (const auto& [key, k] : detail::config_keys()) out << key << " = " << k.get(c) << '\n';
}

} // namespace finfm

#pragma once

#include "finfm/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace finfm {

enum class Granularity { daily, hourly };

inline std::string_view to_string(Granularity g) {
    return g == Granularity::daily ? "daily" : "hourly";
}

inline Granularity parse_granularity(std::string_view s) {
    if (s == "daily") return Granularity::daily;
    if (s == "hourly") return Granularity::hourly;
    throw Error(ErrorCode::InvalidConfig, "unknown granularity '" + std::string(s) + "'");
}

/// Annualization factor used by the backtest report.
inline double periods_per_year(Granularity g) {
    return g == Granularity::daily ? 252.0 : 24.0 * 365.0;
}

/// UTC epoch seconds.
using Timestamp = std::int64_t;

/// Parses `YYYY-MM-DD` as midnight UTC.
inline Timestamp parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    auto bad = [&] { return Error(ErrorCode::InvalidConfig, "bad date '" + std::string(s) + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
    if (std::from_chars(s.data(), s.data() + 4, y).ec != std::errc{}) throw bad();
    if (std::from_chars(s.data() + 5, s.data() + 7, m).ec != std::errc{}) throw bad();
    if (std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc{}) throw bad();
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) throw bad();
    return sys_days{ymd}.time_since_epoch().count() * Timestamp{86400};
}

inline std::string format_date(Timestamp t) {
    using namespace std::chrono;
    const auto dp = floor<days>(sys_seconds{seconds{t}});
    const year_month_day ymd{dp};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Row-level ingestion failure; `row` counts data rows from 1 (header excluded).
class RowError : public Error {
public:
    RowError(ErrorCode code, std::size_t row, const std::string& what)
        : Error(code, what), row_(row) {}
    std::size_t row() const noexcept { return row_; }
    std::size_t line() const noexcept { return row_ + 1; }

private:
    std::size_t row_;
};

/// One instrument's close prices at a fixed granularity. Immutable once built.
class PriceSeries {
public:
    PriceSeries() = default;

    /// Validates and takes ownership. Timestamps must already be sorted.
    PriceSeries(std::string instrument_id, Granularity granularity,
                std::vector<Timestamp> timestamps, std::vector<double> values)
        : id_(std::move(instrument_id)), granularity_(granularity),
          timestamps_(std::move(timestamps)), values_(std::move(values)) {
        if (timestamps_.size() != values_.size())
            throw Error(ErrorCode::InsufficientData, id_ + ": timestamps/values length mismatch");
        if (values_.size() < 2)
            throw Error(ErrorCode::InsufficientData, id_ + ": series needs at least 2 points");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!(values_[i] > 0.0) || !std::isfinite(values_[i]))
                throw RowError(ErrorCode::NonPositivePrice, i + 1,
                               id_ + ": non-positive price at row " + std::to_string(i + 1));
            if (i > 0 && timestamps_[i] <= timestamps_[i - 1])
                throw RowError(ErrorCode::DuplicateTimestamp, i + 1,
                               id_ + ": timestamps not strictly increasing at row " + std::to_string(i + 1));
        }
    }

    const std::string& id() const noexcept { return id_; }
    Granularity granularity() const noexcept { return granularity_; }
    const std::vector<Timestamp>& timestamps() const noexcept { return timestamps_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    bool operator==(const PriceSeries&) const = default;

private:
    std::string id_;
    Granularity granularity_ = Granularity::daily;
    std::vector<Timestamp> timestamps_;
    std::vector<double> values_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

} // namespace detail

/// Parses `timestamp,close` CSV text. Rows are re-sorted by timestamp.
inline PriceSeries parse_series_csv(std::istream& in, std::string instrument_id, Granularity granularity) {
    std::string line;
    if (!std::getline(in, line))
        throw RowError(ErrorCode::MalformedRow, 0, instrument_id + ": missing header");
    const auto header = detail::split(detail::trim(line), ',');
    if (header.size() != 2 || header[0] != "timestamp" || header[1] != "close")
        throw RowError(ErrorCode::MalformedRow, 0, instrument_id + ": header must be 'timestamp,close'");

    struct Row {
        Timestamp t;
        double close;
        std::size_t row;
    };
    std::vector<Row> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        const auto fields = detail::split(text, ',');
        Row r{0, 0.0, row};
        if (fields.size() != 2 || !detail::parse_number(fields[0], r.t) ||
            !detail::parse_number(fields[1], r.close))
            throw RowError(ErrorCode::MalformedRow, row,
                           instrument_id + ": unparseable line " + std::to_string(row + 1));
        if (!(r.close > 0.0) || !std::isfinite(r.close))
            throw RowError(ErrorCode::NonPositivePrice, row,
                           instrument_id + ": non-positive close on row " + std::to_string(row));
        rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].t == rows[i - 1].t)
            throw RowError(ErrorCode::DuplicateTimestamp, rows[i].row,
                           instrument_id + ": duplicate timestamp " + std::to_string(rows[i].t));

    std::vector<Timestamp> ts;
    std::vector<double> vs;
    ts.reserve(rows.size());
    vs.reserve(rows.size());
    for (const auto& r : rows) {
        ts.push_back(r.t);
        vs.push_back(r.close);
    }
    if (vs.size() < 2)
        throw RowError(ErrorCode::MalformedRow, row, instrument_id + ": fewer than 2 rows");
    return PriceSeries(std::move(instrument_id), granularity, std::move(ts), std::move(vs));
}

/// Loads one instrument; the instrument id is the file stem.
inline PriceSeries load_series_csv(const std::filesystem::path& path, Granularity granularity) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return parse_series_csv(in, path.stem().string(), granularity);
}

inline void write_series_csv(std::ostream& out, const PriceSeries& s) {
    out << "timestamp,close\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        out << s.timestamps()[i] << ',' << format_double(s.values()[i]) << '\n';
}

inline void write_series_csv(const std::filesystem::path& path, const PriceSeries& s) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    write_series_csv(out, s);
}

/// Points strictly before `cutoff` go to `first`; the boundary point belongs to `second`.
inline std::pair<PriceSeries, PriceSeries> split_by_cutoff(const PriceSeries& s, Timestamp cutoff) {
    const auto& ts = s.timestamps();
    const auto pivot = static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), cutoff) - ts.begin());
    if (pivot < 2)
        throw Error(ErrorCode::EmptySide, s.id() + ": fewer than 2 points before cutoff");
    if (s.size() - pivot < 2)
        throw Error(ErrorCode::EmptySide, s.id() + ": fewer than 2 points at/after cutoff");
    const auto& vs = s.values();
    return {PriceSeries(s.id(), s.granularity(), {ts.begin(), ts.begin() + pivot}, {vs.begin(), vs.begin() + pivot}),
            PriceSeries(s.id(), s.granularity(), {ts.begin() + pivot, ts.end()}, {vs.begin() + pivot, vs.end()})};
}

/// Points strictly before `cutoff`, or nullopt-equivalent empty result when fewer than 2.
inline bool pre_cutoff(const PriceSeries& s, Timestamp cutoff, PriceSeries& out) {
    const auto& ts = s.timestamps();
    const auto pivot = static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), cutoff) - ts.begin());
    if (pivot < 2) return false;
    out = PriceSeries(s.id(), s.granularity(), {ts.begin(), ts.begin() + pivot},
                      {s.values().begin(), s.values().begin() + pivot});
    return true;
}

struct TrainValSplit {
    std::vector<PriceSeries> train;
    std::vector<PriceSeries> validation;
};

/// Whole-series holdout: `round(val_fraction * n)` series go to validation.
/// Both sides keep the pool's original order.
inline TrainValSplit train_val_split(const std::vector<PriceSeries>& pool, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw Error(ErrorCode::InvalidConfig, "val_fraction must lie in (0, 1)");
    if (pool.empty()) throw Error(ErrorCode::EmptySplit, "empty pool");
    const std::size_t n = pool.size();
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    if (n_val == 0 || n_val == n)
        throw Error(ErrorCode::EmptySplit, "pool of " + std::to_string(n) + " too small for val_fraction");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> is_val(n, 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;

    TrainValSplit out;
    for (std::size_t i = 0; i < n; ++i) (is_val[i] ? out.validation : out.train).push_back(pool[i]);
    return out;
}

struct SeriesSplit {
    std::vector<PriceSeries> train;
    std::vector<PriceSeries> validation;
    std::vector<PriceSeries> test;
    Timestamp cutoff = 0;
};

/// Builds the leak-free split: pre-cutoff segments feed train/validation,
/// full series are kept for test (their evaluation targets start at the cutoff).
/// Pre-cutoff segments shorter than `min_length` are dropped with a warning.
inline SeriesSplit make_split(const std::vector<PriceSeries>& all, Timestamp cutoff, double val_fraction,
                              std::uint64_t seed, std::size_t min_length, std::ostream* log = &std::clog) {
    SeriesSplit out;
    out.cutoff = cutoff;
    std::vector<PriceSeries> pool;
    for (const auto& s : all) {
        PriceSeries pre;
        if (pre_cutoff(s, cutoff, pre) && pre.size() >= min_length) {
            pool.push_back(std::move(pre));
        } else if (log) {
            *log << "warning: dropping " << s.id() << " from training pool (too short before cutoff)\n";
        }
        if (s.timestamps().back() >= cutoff) out.test.push_back(s);
    }
    auto tv = train_val_split(pool, val_fraction, seed);
    out.train = std::move(tv.train);
    out.validation = std::move(tv.validation);
    return out;
}

/// One row of the plain-text data manifest.
struct ManifestEntry {
    std::string path;  // relative to the manifest's data root
    Granularity granularity = Granularity::daily;
    std::string market;
    std::string instrument;
    std::size_t points = 0;
};

struct DataManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
};

inline void write_manifest(std::ostream& out, const DataManifest& m) {
    out << "# root=" << m.root.string() << '\n';
    out << "path,granularity,market,instrument,points\n";
    for (const auto& e : m.entries)
        out << e.path << ',' << to_string(e.granularity) << ',' << e.market << ',' << e.instrument << ','
            << e.points << '\n';
}

inline DataManifest read_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + file.string());
    DataManifest m;
    m.root = file.parent_path();
    std::string line;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto text = detail::trim(line);
        if (text.empty()) continue;
        if (text.starts_with("# root=")) {
            std::filesystem::path root(std::string(text.substr(7)));
            m.root = root.is_absolute() ? root : file.parent_path() / root;
            continue;
        }
        if (text.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (text.starts_with("path,")) continue;
        }
        const auto f = detail::split(text, ',');
        ManifestEntry e;
        if (f.size() < 2)
            throw RowError(ErrorCode::MalformedRow, lineno, "manifest line " + std::to_string(lineno));
        e.path = std::string(f[0]);
        e.granularity = parse_granularity(f[1]);
        e.market = f.size() > 2 ? std::string(f[2]) : "default";
        e.instrument = f.size() > 3 ? std::string(f[3]) : std::filesystem::path(e.path).stem().string();
        if (f.size() > 4) detail::parse_number(f[4], e.points);
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline PriceSeries load_entry(const DataManifest& m, const ManifestEntry& e) {
    return load_series_csv(m.root / e.path, e.granularity);
}

} // namespace finfm

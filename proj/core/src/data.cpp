#include "penguin/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "penguin/errors.hpp"
#include "penguin/rng.hpp"

namespace penguin {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_cell(const std::string& cell, long row, long col) {
    double v{};
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v))
        throw DataError("row " + std::to_string(row) + " column " + std::to_string(col) + ": '" +
                        cell + "' is not a finite number");
    return v;
}

}  // namespace

SeriesTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
    std::vector<std::string> header = split_line(line);
    if (header.empty() || (header.size() == 1 && header[0].empty()))
        throw DataError("'" + path + "' has an empty header");

    const bool dated = header[0] == "date";
    SeriesTable t;
    t.cols = static_cast<long>(header.size()) - (dated ? 1 : 0);
    if (t.cols < 1) throw DataError("'" + path + "' has no value columns");
    t.channel_names.assign(header.begin() + (dated ? 1 : 0), header.end());

    long row = 1;  // header was line 0
    while (std::getline(in, line)) {
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
        std::vector<std::string> cells = split_line(line);
        if (static_cast<long>(cells.size()) != t.cols + (dated ? 1 : 0))
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(t.cols + (dated ? 1 : 0)) + " cells, got " +
                            std::to_string(cells.size()));
        if (dated) t.timestamps.push_back(cells[0]);
        for (long c = 0; c < t.cols; ++c)
            t.values.push_back(parse_cell(cells[static_cast<std::size_t>(c + (dated ? 1 : 0))], row, c));
        ++row;
        ++t.rows;
    }
    if (t.rows == 0) throw DataError("'" + path + "' has a header but no data rows");
    return t;
}

void write_csv(const SeriesTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    if (table.has_dates()) out << "date,";
    for (long c = 0; c < table.cols; ++c)
        out << table.channel_names[static_cast<std::size_t>(c)] << (c + 1 < table.cols ? "," : "");
    out << "\n";
    char buf[64];
    for (long r = 0; r < table.rows; ++r) {
        if (table.has_dates()) out << table.timestamps[static_cast<std::size_t>(r)] << ",";
        for (long c = 0; c < table.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", table.at(r, c));
            out << buf << (c + 1 < table.cols ? "," : "");
        }
        out << "\n";
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

namespace {

SeriesTable take_rows(const SeriesTable& t, long begin, long end) {
    SeriesTable s;
    s.cols = t.cols;
    s.rows = end - begin;
    s.channel_names = t.channel_names;
    s.values.assign(t.values.begin() + begin * t.cols, t.values.begin() + end * t.cols);
    if (t.has_dates())
        s.timestamps.assign(t.timestamps.begin() + begin, t.timestamps.begin() + end);
    return s;
}

}  // namespace

SplitResult chronological_split(const SeriesTable& table, const SplitRatios& ratios, long min_rows,
                                bool allow_empty) {
    const double r[3] = {ratios.train, ratios.val, ratios.test};
    double cum = 0;
    for (double x : r) {
        if (x < 0) throw ConfigError("split ratios must be non-negative");
        if (x == 0 && !allow_empty)
            throw ConfigError("zero split ratio requires the allow-empty flag");
        cum += x;
    }
    if (cum > 1.0 + 1e-12) throw ConfigError("split ratios sum to more than 1");

    long bounds[4] = {0, 0, 0, 0};
    double acc = 0;
    for (int i = 0; i < 3; ++i) {
        acc += r[i];
        bounds[i + 1] = static_cast<long>(std::floor(acc * static_cast<double>(table.rows)));
    }
    const char* names[3] = {"train", "val", "test"};
    SplitResult out;
    SeriesTable* dst[3] = {&out.train, &out.val, &out.test};
    for (int i = 0; i < 3; ++i) {
        const long len = bounds[i + 1] - bounds[i];
        if (len == 0 && !allow_empty)
            throw DataError(std::string(names[i]) + " split is empty");
        if (len > 0 && len < min_rows)
            throw DataError(std::string(names[i]) + " split has " + std::to_string(len) +
                            " rows, needs at least " + std::to_string(min_rows));
        *dst[i] = take_rows(table, bounds[i], bounds[i + 1]);
    }
    return out;
}

WindowedDataset make_windows(SeriesTable segment, long lookback, long horizon) {
    if (lookback < 1 || horizon < 1) throw ConfigError("lookback and horizon must be >= 1");
    if (segment.rows < lookback + horizon)
        throw DataError("segment has " + std::to_string(segment.rows) + " rows, needs at least " +
                        std::to_string(lookback + horizon) + " for one window");
    WindowedDataset ds;
    ds.lookback = lookback;
    ds.horizon = horizon;
    ds.segment = std::move(segment);
    return ds;
}

SeriesTable synth_series(long length, long channels, const std::vector<SynthComponent>& components,
                         double trend_slope, double noise_sigma, std::uint64_t seed) {
    if (length < 1) throw ConfigError("series length must be >= 1");
    if (channels < 1) throw ConfigError("channel count must be >= 1");
    for (const auto& comp : components)
        if (comp.period < 2) throw ConfigError("component period must be >= 2");

    constexpr double kTwoPi = 6.283185307179586476925286766559;
    SeriesTable t;
    t.rows = length;
    t.cols = channels;
    for (long c = 0; c < channels; ++c) t.channel_names.push_back("s" + std::to_string(c));
    t.values.resize(static_cast<std::size_t>(length * channels));

    Rng rng(seed);
    for (long i = 0; i < length; ++i) {
        for (long c = 0; c < channels; ++c) {
            double v = trend_slope * static_cast<double>(i);
            for (const auto& comp : components)
                v += comp.amplitude * std::sin(kTwoPi * static_cast<double>(i) /
                                                   static_cast<double>(comp.period) +
                                               comp.phase + 0.7 * static_cast<double>(c));
            if (noise_sigma > 0) v += rng.normal(0.0, noise_sigma);
            t.values[static_cast<std::size_t>(i * channels + c)] = v;
        }
    }

    // hourly ISO-8601 stamps from 2020-01-01, purely cosmetic
    t.timestamps.reserve(static_cast<std::size_t>(length));
    for (long i = 0; i < length; ++i) {
        long z = 18262 + i / 24;  // days since 1970-01-01
        z += 719468;
        const long era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const long y = static_cast<long>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp < 10 ? mp + 3 : mp - 9;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04ld-%02u-%02uT%02ld:00:00", y + (m <= 2 ? 1 : 0), m, d,
                      i % 24);
        t.timestamps.emplace_back(buf);
    }
    return t;
}

std::vector<double> autocorrelation(const double* x, long len, long max_lag) {
    if (len <= max_lag || max_lag < 1)
        throw ConfigError("autocorrelation needs series longer than max_lag >= 1");
    double mean = 0;
    for (long t = 0; t < len; ++t) mean += x[t];
    mean /= static_cast<double>(len);
    double denom = 0;
    for (long t = 0; t < len; ++t) denom += (x[t] - mean) * (x[t] - mean);
    std::vector<double> r(static_cast<std::size_t>(max_lag + 1), 0.0);
    if (denom == 0) return r;  // constant series convention: r = 0
    for (long lag = 0; lag <= max_lag; ++lag) {
        double num = 0;
        for (long t = 0; t + lag < len; ++t) num += (x[t] - mean) * (x[t + lag] - mean);
        r[static_cast<std::size_t>(lag)] = num / denom;
    }
    return r;
}

std::vector<PeriodHit> detect_periods_acf(const double* x, long len, long max_lag, long top_k,
                                          double threshold) {
    if (max_lag < 2) throw ConfigError("max_lag must be >= 2");
    const std::vector<double> r = autocorrelation(x, len, max_lag);
    std::vector<PeriodHit> hits;
    for (long lag = 1; lag + 1 <= max_lag; ++lag) {
        const double v = r[static_cast<std::size_t>(lag)];
        if (v < threshold) continue;
        if (v > r[static_cast<std::size_t>(lag - 1)] && v >= r[static_cast<std::size_t>(lag + 1)])
            hits.push_back({lag, v});
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const PeriodHit& a, const PeriodHit& b) { return a.correlation > b.correlation; });
    if (top_k >= 0 && static_cast<long>(hits.size()) > top_k) hits.resize(static_cast<std::size_t>(top_k));
    return hits;
}

DataNorm fit_norm(const SeriesTable& train_segment) {
    DataNorm n;
    n.enabled = true;
    n.mean.assign(static_cast<std::size_t>(train_segment.cols), 0.0);
    n.stdev.assign(static_cast<std::size_t>(train_segment.cols), 1.0);
    if (train_segment.rows == 0) throw DataError("cannot fit normalization on an empty split");
    for (long c = 0; c < train_segment.cols; ++c) {
        double m = 0;
        for (long t = 0; t < train_segment.rows; ++t) m += train_segment.at(t, c);
        m /= static_cast<double>(train_segment.rows);
        double var = 0;
        for (long t = 0; t < train_segment.rows; ++t) {
            const double d = train_segment.at(t, c) - m;
            var += d * d;
        }
        var /= static_cast<double>(train_segment.rows);
        n.mean[static_cast<std::size_t>(c)] = m;
        n.stdev[static_cast<std::size_t>(c)] = var > 0 ? std::sqrt(var) : 1.0;
    }
    return n;
}

void apply_norm(SeriesTable& table, const DataNorm& norm) {
    if (!norm.enabled) return;
    if (static_cast<long>(norm.mean.size()) != table.cols)
        throw DataError("normalization stats have " + std::to_string(norm.mean.size()) +
                        " channels, table has " + std::to_string(table.cols));
    for (long r = 0; r < table.rows; ++r)
        for (long c = 0; c < table.cols; ++c) {
            double& v = table.values[static_cast<std::size_t>(r * table.cols + c)];
            v = (v - norm.mean[static_cast<std::size_t>(c)]) / norm.stdev[static_cast<std::size_t>(c)];
        }
}

void denorm_row(double* row, long channels, const DataNorm& norm) {
    if (!norm.enabled) return;
    for (long c = 0; c < channels; ++c)
        row[c] = row[c] * norm.stdev[static_cast<std::size_t>(c)] + norm.mean[static_cast<std::size_t>(c)];
}

}  // namespace penguin

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace penguin {

// Channel-major numeric series. Timestamps are carried through verbatim when
// the source has a date column; they are never interpreted.
struct SeriesTable {
    std::vector<std::string> timestamps;     // empty, or one per row
    std::vector<std::string> channel_names;  // one per column
    std::vector<double> values;              // row-major rows x cols
    long rows = 0;
    long cols = 0;

    double at(long r, long c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
    bool has_dates() const { return !timestamps.empty(); }
};

// Header row required; a first column named "date" is excluded from values.
// Ragged rows, empty files and non-numeric or non-finite cells are data
// errors naming the offending row/column.
SeriesTable load_csv(const std::string& path);
void write_csv(const SeriesTable& table, const std::string& path);

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct SplitResult {
    SeriesTable train, val, test;
};

// Contiguous, ordered, non-overlapping prefix split; boundaries at
// floor(cumulative ratio * rows). Non-empty segments shorter than min_rows
// are errors; empty segments only pass with allow_empty.
SplitResult chronological_split(const SeriesTable& table, const SplitRatios& ratios,
                                long min_rows = 0, bool allow_empty = false);

// Stride-1 chronological windows: sample i reads input rows [i, i+L) and
// target rows [i+L, i+L+H) of the owned segment.
struct WindowedDataset {
    long lookback = 0;
    long horizon = 0;
    SeriesTable segment;

    long channels() const { return segment.cols; }
    long count() const {
        const long c = segment.rows - lookback - horizon + 1;
        return c > 0 ? c : 0;
    }
    const double* input_ptr(long i) const {
        return segment.values.data() + i * segment.cols;
    }
    const double* target_ptr(long i) const {
        return segment.values.data() + (i + lookback) * segment.cols;
    }
};

WindowedDataset make_windows(SeriesTable segment, long lookback, long horizon);

// x_t = sum_i amp_i * sin(2 pi t / period_i + phase_i + channel phase) +
//       slope * t + gaussian(0, sigma^2), deterministic per seed
struct SynthComponent {
    long period = 24;
    double amplitude = 1.0;
    double phase = 0.0;
};

SeriesTable synth_series(long length, long channels, const std::vector<SynthComponent>& components,
                         double trend_slope, double noise_sigma, std::uint64_t seed);

// Sample autocorrelation, biased estimator on the mean-removed series;
// returns r(0..max_lag). A constant series yields all zeros.
std::vector<double> autocorrelation(const double* x, long len, long max_lag);

struct PeriodHit {
    long lag = 0;
    double correlation = 0.0;
};

// Local maxima of r(tau) for tau in [1, max_lag) above the threshold, sorted
// by correlation descending, at most top_k entries.
std::vector<PeriodHit> detect_periods_acf(const double* x, long len, long max_lag, long top_k,
                                          double threshold = 0.1);

// Whole-series z-scoring with train-split statistics (benchmark convention).
struct DataNorm {
    bool enabled = false;
    std::vector<double> mean;
    std::vector<double> stdev;
};

DataNorm fit_norm(const SeriesTable& train_segment);
void apply_norm(SeriesTable& table, const DataNorm& norm);
// restores a prediction row in place: x = x * stdev + mean per channel
void denorm_row(double* row, long channels, const DataNorm& norm);

}  // namespace penguin

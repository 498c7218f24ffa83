#pragma once

#include <string>
#include <vector>

#include "penguin/tensor.hpp"

namespace penguin {

// Relative attention bias construction. All matrices are additive pre-softmax
// penalties: entries are <= 0, encoder matrices (offset 0) are symmetric
// Toeplitz. Periodic matrices follow a triangular wave that returns to zero
// at multiples of the patched period.

enum class BiasRegime { NoBias, NonPeriodic, Periodic, Both };

BiasRegime parse_regime(const std::string& name);        // throws ConfigError
std::string regime_name(BiasRegime regime);

enum class BiasKind { None, NonPeriodic, Periodic };

// Raw periods (timesteps) plus the patch stride; patched periods are the raw
// ones divided by the stride, deduplicated and ascending. The stride must
// divide every raw period exactly.
struct PeriodSet {
    std::vector<long> raw;
    long stride = 1;
    std::vector<long> patched;

    static PeriodSet from_raw(std::vector<long> raw_periods, long stride);
    bool empty() const { return patched.empty(); }
    long count() const { return static_cast<long>(patched.size()); }
};

// m_k = 2^(-8/k), strictly increasing in k, shared across groups.
struct SlopeVector {
    long n = 0;
    std::vector<double> m;

    static SlopeVector make(long heads_per_group);
};

// slope for within-group head index k in [1, n]
double head_slope(long k, long n);

struct BiasSpec {
    BiasKind kind = BiasKind::None;
    long period = 0;          // patched period, Periodic only
    double slope = 0.0;       // m_k
    long decoder_offset = 0;  // 0 for encoder use
};

struct BiasMatrix {
    long rows = 0;
    long cols = 0;
    std::vector<double> v;  // row-major, all entries <= 0

    double at(long i, long j) const { return v[static_cast<std::size_t>(i * cols + j)]; }
};

struct HeadBias {
    long head = 0;   // 1-based global head index
    long group = 0;  // 1-based group index
    long k = 0;      // within-group index, 1-based
    BiasSpec spec;
    BiasMatrix mat;
};

// Triangular wave distance: u = d mod period, then u if u < period/2 else
// period - u. Equals min over integers m of |d - m*period|.
long triangular_distance(long d, long period);

// entry(i,j) = -m_k * |i + decoder_offset - j|, rows x cols
BiasMatrix build_nonperiodic(long rows, long cols, double m_k, long decoder_offset);

// entry(i,j) = -m_k * triangular_distance(|i + decoder_offset - j|, period)
BiasMatrix build_periodic(long rows, long cols, double m_k, long period, long decoder_offset);

// Heads are partitioned into g groups of n = heads/g; within a group the head
// with index k uses slope m_k. Group count is fixed by the regime:
//   NoBias, NonPeriodic -> g = 1; Periodic -> g = periods; Both -> g = periods + 1
// (Both assigns group 1 the non-periodic bias and one period to each rest).
std::vector<HeadBias> assemble_bias_stack(long heads, BiasRegime regime, const PeriodSet& periods,
                                          long n_tokens, long decoder_offset = 0);

// position (i,j) allowed iff j <= i + decoder_offset
Mask causal_mask(long n_rows, long n_cols, long decoder_offset = 0);

// dump formats used by the bias-dump command
void write_bias_csv(const BiasMatrix& m, const std::string& path);
void write_bias_pgm(const BiasMatrix& m, const std::string& path);  // [min,0] -> [0,255]

}  // namespace penguin

#include "penguin/bias.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "penguin/errors.hpp"

namespace penguin {

BiasRegime parse_regime(const std::string& name) {
    if (name == "nobias" || name == "none") return BiasRegime::NoBias;
    if (name == "nonperiodic") return BiasRegime::NonPeriodic;
    if (name == "periodic") return BiasRegime::Periodic;
    if (name == "both") return BiasRegime::Both;
    throw ConfigError("unknown bias regime '" + name +
                      "' (expected nobias|nonperiodic|periodic|both)");
}

std::string regime_name(BiasRegime regime) {
    switch (regime) {
        case BiasRegime::NoBias: return "nobias";
        case BiasRegime::NonPeriodic: return "nonperiodic";
        case BiasRegime::Periodic: return "periodic";
        case BiasRegime::Both: return "both";
    }
    return "?";
}

PeriodSet PeriodSet::from_raw(std::vector<long> raw_periods, long stride) {
    if (stride < 1) throw ConfigError("stride must be >= 1");
    PeriodSet ps;
    ps.raw = std::move(raw_periods);
    ps.stride = stride;
    for (long p : ps.raw) {
        if (p < 1) throw ConfigError("period must be positive, got " + std::to_string(p));
        if (p % stride != 0)
            throw ConfigError("stride " + std::to_string(stride) + " does not divide period " +
                              std::to_string(p));
        ps.patched.push_back(p / stride);
    }
    std::sort(ps.patched.begin(), ps.patched.end());
    ps.patched.erase(std::unique(ps.patched.begin(), ps.patched.end()), ps.patched.end());
    return ps;
}

double head_slope(long k, long n) {
    if (k < 1 || k > n)
        throw ConfigError("head index " + std::to_string(k) + " outside [1, " + std::to_string(n) +
                          "]");
    return std::exp2(-8.0 / static_cast<double>(k));
}

SlopeVector SlopeVector::make(long heads_per_group) {
    if (heads_per_group < 1) throw ConfigError("heads per group must be >= 1");
    SlopeVector sv;
    sv.n = heads_per_group;
    for (long k = 1; k <= heads_per_group; ++k) sv.m.push_back(head_slope(k, heads_per_group));
    return sv;
}

long triangular_distance(long d, long period) {
    if (period < 2) throw ConfigError("periodic bias needs period >= 2, got " + std::to_string(period));
    if (d < 0) throw ConfigError("triangular_distance on negative distance");
    const long u = d % period;
    return 2 * u < period ? u : period - u;
}

BiasMatrix build_nonperiodic(long rows, long cols, double m_k, long decoder_offset) {
    if (rows < 1 || cols < 1) throw ConfigError("bias matrix extents must be >= 1");
    if (decoder_offset < 0) throw ConfigError("decoder offset must be >= 0");
    BiasMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.v.resize(static_cast<std::size_t>(rows * cols));
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j)
            m.v[static_cast<std::size_t>(i * cols + j)] =
                // + 0.0 keeps zero-distance entries at +0.0
                -m_k * static_cast<double>(std::labs(i + decoder_offset - j)) + 0.0;
    return m;
}

BiasMatrix build_periodic(long rows, long cols, double m_k, long period, long decoder_offset) {
    if (rows < 1 || cols < 1) throw ConfigError("bias matrix extents must be >= 1");
    if (decoder_offset < 0) throw ConfigError("decoder offset must be >= 0");
    if (period < 2) throw ConfigError("periodic bias needs period >= 2, got " + std::to_string(period));
    BiasMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.v.resize(static_cast<std::size_t>(rows * cols));
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j)
            m.v[static_cast<std::size_t>(i * cols + j)] =
                -m_k * static_cast<double>(
                           triangular_distance(std::labs(i + decoder_offset - j), period)) +
                0.0;
    return m;
}

std::vector<HeadBias> assemble_bias_stack(long heads, BiasRegime regime, const PeriodSet& periods,
                                          long n_tokens, long decoder_offset) {
    if (heads < 1) throw ConfigError("head count must be >= 1");
    if (n_tokens < 1) throw ConfigError("token count must be >= 1");

    long groups = 1;
    switch (regime) {
        case BiasRegime::NoBias:
        case BiasRegime::NonPeriodic: groups = 1; break;
        case BiasRegime::Periodic:
            if (periods.empty()) throw ConfigError("periodic regime requires at least one period");
            groups = periods.count();
            break;
        case BiasRegime::Both:
            if (periods.empty()) throw ConfigError("both regime requires at least one period");
            groups = periods.count() + 1;
            break;
    }
    if (heads % groups != 0)
        throw ConfigError("group count " + std::to_string(groups) + " does not divide head count " +
                          std::to_string(heads));
    const long per_group = heads / groups;

    std::vector<HeadBias> stack;
    stack.reserve(static_cast<std::size_t>(heads));
    for (long h = 1; h <= heads; ++h) {
        HeadBias hb;
        hb.head = h;
        hb.group = (h - 1) / per_group + 1;
        hb.k = (h - 1) % per_group + 1;  // within-group index, slopes assigned in order
        const double m_k = head_slope(hb.k, per_group);
        hb.spec.slope = m_k;
        hb.spec.decoder_offset = decoder_offset;

        BiasKind kind = BiasKind::None;
        long period = 0;
        switch (regime) {
            case BiasRegime::NoBias: kind = BiasKind::None; break;
            case BiasRegime::NonPeriodic: kind = BiasKind::NonPeriodic; break;
            case BiasRegime::Periodic:
                kind = BiasKind::Periodic;
                period = periods.patched[static_cast<std::size_t>(hb.group - 1)];
                break;
            case BiasRegime::Both:
                if (hb.group == 1) {
                    kind = BiasKind::NonPeriodic;
                } else {
                    kind = BiasKind::Periodic;
                    period = periods.patched[static_cast<std::size_t>(hb.group - 2)];
                }
                break;
        }
        hb.spec.kind = kind;
        hb.spec.period = period;
        switch (kind) {
            case BiasKind::None: {
                hb.mat.rows = n_tokens;
                hb.mat.cols = n_tokens;
                hb.mat.v.assign(static_cast<std::size_t>(n_tokens * n_tokens), 0.0);
                break;
            }
            case BiasKind::NonPeriodic:
                hb.mat = build_nonperiodic(n_tokens, n_tokens, m_k, decoder_offset);
                break;
            case BiasKind::Periodic:
                hb.mat = build_periodic(n_tokens, n_tokens, m_k, period, decoder_offset);
                break;
        }
        stack.push_back(std::move(hb));
    }
    return stack;
}

Mask causal_mask(long n_rows, long n_cols, long decoder_offset) {
    if (n_rows < 1 || n_cols < 1) throw ConfigError("mask extents must be >= 1");
    Mask m;
    m.shape = {n_rows, n_cols};
    m.allowed.resize(static_cast<std::size_t>(n_rows * n_cols));
    for (long i = 0; i < n_rows; ++i)
        for (long j = 0; j < n_cols; ++j)
            m.allowed[static_cast<std::size_t>(i * n_cols + j)] =
                (j <= i + decoder_offset) ? 1 : 0;
    return m;
}

void write_bias_csv(const BiasMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    char buf[64];
    for (long i = 0; i < m.rows; ++i) {
        for (long j = 0; j < m.cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.at(i, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

void write_bias_pgm(const BiasMatrix& m, const std::string& path) {
    double lo = 0.0;
    for (double x : m.v) lo = std::min(lo, x);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "P5\n" << m.cols << " " << m.rows << "\n255\n";
    for (double x : m.v) {
        // min -> 0 (black), 0 -> 255 (white)
        int px = lo < 0.0 ? static_cast<int>(std::lround((x - lo) / (0.0 - lo) * 255.0)) : 255;
        px = std::clamp(px, 0, 255);
        out.put(static_cast<char>(static_cast<unsigned char>(px)));
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace penguin

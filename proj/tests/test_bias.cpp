#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "penguin/bias.hpp"
#include "support/oracles.hpp"

using namespace penguin;

TEST_CASE("triangular distance examples and oracle equivalence") {
    CHECK(triangular_distance(0, 3) == 0);
    CHECK(triangular_distance(4, 3) == 1);
    CHECK(triangular_distance(10, 21) == 10);
    CHECK(triangular_distance(11, 21) == 10);
    CHECK_THROWS_AS(triangular_distance(3, 1), ConfigError);

    for (long period : {2, 3, 5, 21, 24})
        for (long d = 0; d < 5 * period; ++d) {
            CHECK(triangular_distance(d, period) == oracles::tri_min_over_multiples(d, period));
            CHECK(triangular_distance(d, period) == triangular_distance(d + period, period));
            CHECK(triangular_distance(d, period) <= period / 2);
            CHECK((triangular_distance(d, period) == 0) == (d % period == 0));
        }
}

TEST_CASE("slope table") {
    CHECK(head_slope(1, 12) == 0.00390625);
    CHECK(head_slope(2, 12) == 0.0625);
    CHECK(head_slope(8, 12) == 0.5);
    const SlopeVector sv = SlopeVector::make(12);
    for (long k = 1; k < 12; ++k) CHECK(sv.m[k - 1] < sv.m[k]);
    for (double m : sv.m) {
        CHECK(m > 0.0);
        CHECK(m < 1.0);
    }
    CHECK_THROWS_AS(head_slope(0, 4), ConfigError);
    CHECK_THROWS_AS(head_slope(5, 4), ConfigError);
}

TEST_CASE("non-periodic bias matrices") {
    BiasMatrix m = build_nonperiodic(3, 3, 1.0, 0);
    const std::vector<double> expect{0, -1, -2, -1, 0, -1, -2, -1, 0};
    CHECK(m.v == expect);

    BiasMatrix one = build_nonperiodic(1, 1, 0.7, 0);
    CHECK(one.v == std::vector<double>{0});

    // decoder rows: entry(i,j) = -|i + 3 - j| against direct enumeration
    BiasMatrix dec = build_nonperiodic(2, 3, 1.0, 3);
    for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 3; ++j) CHECK(dec.at(i, j) == -std::labs(i + 3 - j));
}

TEST_CASE("periodic bias matrices") {
    BiasMatrix m = build_periodic(4, 4, 1.0, 3, 0);
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(0, 1) == -1.0);
    CHECK(m.at(0, 2) == -1.0);
    CHECK(m.at(0, 3) == 0.0);

    BiasMatrix stripes = build_periodic(6, 6, 0.5, 2, 0);
    for (long i = 0; i < 6; ++i)
        for (long j = 0; j < 6; ++j)
            CHECK(stripes.at(i, j) == ((i - j) % 2 == 0 ? 0.0 : -0.5));

    // weekly Traffic period after patching: 168/8 = 21 at N=42
    const double mk = 0.25;
    BiasMatrix weekly = build_periodic(42, 42, mk, 21, 0);
    CHECK(weekly.at(0, 21) == 0.0);
    CHECK(weekly.at(0, 10) == -10 * mk);
    for (long i = 0; i < 42; ++i)
        for (long j = 0; j < 42; ++j)
            CHECK(weekly.at(i, j) ==
                  -mk * oracles::tri_min_over_multiples(std::labs(i - j), 21));

    CHECK_THROWS_AS(build_periodic(4, 4, 1.0, 1, 0), ConfigError);
}

TEST_CASE("period sets: divisibility, dedup, ordering") {
    PeriodSet ps = PeriodSet::from_raw({168, 24}, 8);
    CHECK(ps.patched == std::vector<long>{3, 21});
    CHECK_THROWS_AS(PeriodSet::from_raw({25}, 8), ConfigError);

    PeriodSet fig4 = PeriodSet::from_raw({12}, 4);
    CHECK(fig4.patched == std::vector<long>{3});

    PeriodSet dup = PeriodSet::from_raw({24, 48, 24}, 8);
    CHECK(dup.patched == std::vector<long>{3, 6});
}

TEST_CASE("bias stack assembly: groups, kinds, slopes") {
    const PeriodSet ps = PeriodSet::from_raw({24, 168}, 8);  // patched {3, 21}
    auto stack = assemble_bias_stack(12, BiasRegime::Both, ps, 8);
    REQUIRE(stack.size() == 12);
    const double expect_slopes[4] = {std::exp2(-8.0), std::exp2(-4.0), std::exp2(-8.0 / 3),
                                     std::exp2(-2.0)};
    for (long h = 0; h < 12; ++h) {
        const auto& hb = stack[static_cast<std::size_t>(h)];
        CHECK(hb.head == h + 1);
        CHECK(hb.group == h / 4 + 1);
        CHECK(hb.k == h % 4 + 1);
        CHECK(hb.spec.slope == expect_slopes[h % 4]);
        if (hb.group == 1) CHECK(hb.spec.kind == BiasKind::NonPeriodic);
        if (hb.group == 2) {
            CHECK(hb.spec.kind == BiasKind::Periodic);
            CHECK(hb.spec.period == 3);
        }
        if (hb.group == 3) {
            CHECK(hb.spec.kind == BiasKind::Periodic);
            CHECK(hb.spec.period == 21);
        }
    }

    auto zero = assemble_bias_stack(4, BiasRegime::NoBias, PeriodSet::from_raw({}, 1), 5);
    REQUIRE(zero.size() == 4);
    for (const auto& hb : zero) {
        CHECK(hb.group == 1);
        for (double v : hb.mat.v) CHECK(v == 0.0);
    }

    auto single = assemble_bias_stack(12, BiasRegime::Periodic, PeriodSet::from_raw({3}, 1), 6);
    REQUIRE(single.size() == 12);
    for (long h = 0; h < 12; ++h) {
        CHECK(single[static_cast<std::size_t>(h)].group == 1);
        CHECK(single[static_cast<std::size_t>(h)].spec.slope == head_slope(h + 1, 12));
    }

    CHECK_THROWS_AS(assemble_bias_stack(12, BiasRegime::Periodic, PeriodSet::from_raw({}, 1), 6),
                    ConfigError);
    // 2 periods + both -> g=3 does not divide 8
    CHECK_THROWS_AS(assemble_bias_stack(8, BiasRegime::Both, ps, 6), ConfigError);
}

TEST_CASE("encoder bias invariants: symmetric Toeplitz, non-positive, bounded") {
    const PeriodSet ps = PeriodSet::from_raw({6, 14}, 2);
    for (auto regime : {BiasRegime::NonPeriodic, BiasRegime::Periodic, BiasRegime::Both}) {
        auto stack = assemble_bias_stack(12, regime, ps, 9);
        for (const auto& hb : stack) {
            const auto& m = hb.mat;
            for (long i = 0; i < m.rows; ++i)
                for (long j = 0; j < m.cols; ++j) {
                    CHECK(m.at(i, j) <= 0.0);
                    CHECK(m.at(i, j) == m.at(j, i));
                    if (i + 1 < m.rows && j + 1 < m.cols) CHECK(m.at(i, j) == m.at(i + 1, j + 1));
                    if (hb.spec.kind == BiasKind::Periodic)
                        CHECK(m.at(i, j) >= -hb.spec.slope * (hb.spec.period / 2));
                    else
                        CHECK(m.at(i, j) >= -hb.spec.slope * (m.rows - 1));
                }
            if (hb.spec.kind == BiasKind::NonPeriodic)
                for (long i = 0; i < m.rows; ++i) CHECK(m.at(i, i) == 0.0);
        }
    }
}

TEST_CASE("decoder-side bias is a shifted encoder block") {
    const long n = 5, m_rows = 3;
    BiasMatrix dec = build_periodic(m_rows, n, 0.3, 4, n);
    BiasMatrix enc = build_periodic(n + m_rows, n + m_rows, 0.3, 4, 0);
    for (long i = 0; i < m_rows; ++i)
        for (long j = 0; j < n; ++j) CHECK(dec.at(i, j) == enc.at(i + n, j));

    BiasMatrix dec_np = build_nonperiodic(m_rows, n, 0.3, n);
    BiasMatrix enc_np = build_nonperiodic(n + m_rows, n + m_rows, 0.3, 0);
    for (long i = 0; i < m_rows; ++i)
        for (long j = 0; j < n; ++j) CHECK(dec_np.at(i, j) == enc_np.at(i + n, j));
}

TEST_CASE("causal mask") {
    Mask m = causal_mask(3, 3);
    for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 3; ++j) CHECK(m.allowed[i * 3 + j] == (j <= i ? 1 : 0));

    Mask one = causal_mask(1, 1);
    CHECK(one.allowed == std::vector<std::uint8_t>{1});

    Mask dec = causal_mask(2, 5, 3);
    for (long j = 0; j < 5; ++j) {
        CHECK(dec.allowed[0 * 5 + j] == (j <= 3 ? 1 : 0));
        CHECK(dec.allowed[1 * 5 + j] == (j <= 4 ? 1 : 0));
    }
}

TEST_CASE("bias dump formats") {
    BiasMatrix m = build_nonperiodic(4, 4, 0.5, 0);
    const std::string csv = "/tmp/penguin_test_bias.csv";
    const std::string pgm = "/tmp/penguin_test_bias.pgm";
    write_bias_csv(m, csv);
    write_bias_pgm(m, pgm);

    std::ifstream in(csv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line.substr(0, 2) == "0,");

    std::ifstream pin(pgm, std::ios::binary);
    std::string header;
    pin >> header;
    CHECK(header == "P5");
    long w, h, maxv;
    pin >> w >> h >> maxv;
    CHECK(w == 4);
    CHECK(h == 4);
    CHECK(maxv == 255);
    pin.get();  // single whitespace after header
    std::vector<unsigned char> px(16);
    pin.read(reinterpret_cast<char*>(px.data()), 16);
    CHECK(px[0] == 255);  // diagonal zero maps to white
    CHECK(px[3] == 0);    // most negative maps to black
    std::remove(csv.c_str());
    std::remove(pgm.c_str());

    // an all-zero matrix renders as a uniform white heatmap
    BiasMatrix zero;
    zero.rows = 2;
    zero.cols = 2;
    zero.v.assign(4, 0.0);
    const std::string zpath = "/tmp/penguin_test_zero.pgm";
    write_bias_pgm(zero, zpath);
    std::ifstream zin(zpath, std::ios::binary);
    std::string zheader;
    long zw, zh, zmax;
    zin >> zheader >> zw >> zh >> zmax;
    zin.get();
    std::vector<unsigned char> zpx(4);
    zin.read(reinterpret_cast<char*>(zpx.data()), 4);
    for (unsigned char p : zpx) CHECK(p == 255);
    std::remove(zpath.c_str());
}

TEST_CASE("regime names round-trip") {
    for (auto r : {BiasRegime::NoBias, BiasRegime::NonPeriodic, BiasRegime::Periodic,
                   BiasRegime::Both})
        CHECK(parse_regime(regime_name(r)) == r);
    CHECK_THROWS_AS(parse_regime("sometimes"), ConfigError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "penguin/tensor.hpp"
#include "support/oracles.hpp"

using namespace penguin;
using D = Tensor<double>;

namespace {

D leaf(Tape<double>& tape, Shape shape, std::vector<double> v) {
    return D::leaf(std::move(shape), std::move(v), tape);
}

// random leaf away from zero so relu kinks are not sampled
D random_leaf(Tape<double>& tape, Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    auto v = oracles::random_vec(rng, shape_numel(shape), lo, hi);
    return D::leaf(std::move(shape), std::move(v), tape);
}

// scalar probe loss: mean(out * R) with fixed random R
D probe_loss(const D& out, const std::vector<double>& r) {
    D rt = D::from(out.shape(), r);
    return mean(mul(out, rt));
}

}  // namespace

TEST_CASE("matmul identity and direct arithmetic") {
    D a = D::from({2, 2}, {1, 0, 0, 1});
    D b = D::from({2, 2}, {3, 4, 5, 6});
    CHECK(matmul(a, b).values() == std::vector<double>{3, 4, 5, 6});

    D r = D::from({1, 2}, {1, 2});
    D c = D::from({2, 1}, {3, 4});
    CHECK(matmul(r, c).values() == std::vector<double>{11});
}

TEST_CASE("matmul matches the naive triple loop, all batch forms") {
    Rng rng(11);
    // 2D x 2D
    auto av = oracles::random_vec(rng, 3 * 4), bv = oracles::random_vec(rng, 4 * 2);
    D a = D::from({3, 4}, av), b = D::from({4, 2}, bv);
    auto expect = oracles::matmul_naive(av, bv, 3, 4, 2);
    auto got = matmul(a, b).values();
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));

    // ND x 2D: each batch slab against the naive product
    auto cv = oracles::random_vec(rng, 2 * 3 * 4);
    D c = D::from({2, 3, 4}, cv);
    auto got2 = matmul(c, b).values();
    for (long t = 0; t < 2; ++t) {
        std::vector<double> slab(cv.begin() + t * 12, cv.begin() + (t + 1) * 12);
        auto e = oracles::matmul_naive(slab, bv, 3, 4, 2);
        for (long i = 0; i < 6; ++i) CHECK(got2[t * 6 + i] == doctest::Approx(e[i]).epsilon(1e-12));
    }

    // ND x ND with equal leading dims
    auto dv = oracles::random_vec(rng, 2 * 4 * 2);
    D d = D::from({2, 4, 2}, dv);
    auto got3 = matmul(c, d).values();
    for (long t = 0; t < 2; ++t) {
        std::vector<double> slab_a(cv.begin() + t * 12, cv.begin() + (t + 1) * 12);
        std::vector<double> slab_b(dv.begin() + t * 8, dv.begin() + (t + 1) * 8);
        auto e = oracles::matmul_naive(slab_a, slab_b, 3, 4, 2);
        for (long i = 0; i < 6; ++i) CHECK(got3[t * 6 + i] == doctest::Approx(e[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul shape errors name both shapes") {
    Rng rng(1);
    D a = D::from({2, 3}, oracles::random_vec(rng, 6));
    D b = D::from({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x2]"), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences at 1e-6") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        Rng rng(seed);
        Tape<double> tape;
        D a = random_leaf(tape, rng, {3, 4});
        D b = random_leaf(tape, rng, {4, 2});
        auto r = oracles::random_vec(rng, 6);
        const double err =
            oracles::max_grad_rel_err({&a, &b}, [&]() { return probe_loss(matmul(a, b), r); });
        CHECK(err < 1e-6);
    }
}

TEST_CASE("softmax examples") {
    D one = D::from({1}, {5.0});
    CHECK(softmax_lastdim(one).values()[0] == doctest::Approx(1.0));

    D sym = softmax_lastdim(D::from({3}, {0, 0, 0}));
    for (double w : sym.values()) CHECK(w == doctest::Approx(1.0 / 3));

    // masked tail equals the brute-force softmax of the surviving entries
    D x = D::from({3}, {1, 2, 3});
    Mask m;
    m.shape = {3};
    m.allowed = {1, 1, 0};
    auto got = softmax_lastdim(x, m).values();
    auto expect = oracles::softmax_row({1, 2}, {});
    CHECK(got[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(got[1] == doctest::Approx(expect[1]).epsilon(1e-12));
    CHECK(got[2] == 0.0);  // exactly
}

TEST_CASE("softmax properties: row sums, shift invariance, masked zeros") {
    for (std::uint64_t seed : {7, 8, 9, 10, 11}) {
        Rng rng(seed);
        D x = D::from({4, 6}, oracles::random_vec(rng, 24, -3, 3));
        auto w = softmax_lastdim(x).values();
        for (long r = 0; r < 4; ++r) {
            double s = 0;
            for (long j = 0; j < 6; ++j) s += w[r * 6 + j];
            CHECK(std::fabs(s - 1.0) < 1e-9);
        }
        // add a constant to one whole row
        auto shifted = x.values();
        for (long j = 0; j < 6; ++j) shifted[2 * 6 + j] += 17.5;
        auto w2 = softmax_lastdim(D::from({4, 6}, shifted)).values();
        for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::fabs(w[i] - w2[i]) < 1e-9);
    }
    Mask m;
    m.shape = {4};
    m.allowed = {0, 0, 0, 0};
    CHECK_THROWS_AS(softmax_lastdim(D::from({4}, {1, 2, 3, 4}), m), NumericError);
}

TEST_CASE("softmax gradient, masked and unmasked") {
    for (std::uint64_t seed : {3, 4, 5, 6, 7}) {
        Rng rng(seed);
        Tape<double> tape;
        D x = random_leaf(tape, rng, {3, 5}, -2, 2);
        auto r = oracles::random_vec(rng, 15);
        CHECK(oracles::max_grad_rel_err(
                  {&x}, [&]() { return probe_loss(softmax_lastdim(x), r); }) < 1e-4);

        Mask m;
        m.shape = {5};
        m.allowed = {1, 0, 1, 1, 0};
        CHECK(oracles::max_grad_rel_err(
                  {&x}, [&]() { return probe_loss(softmax_lastdim(x, m), r); }) < 1e-4);
    }
}

TEST_CASE("elementwise examples") {
    CHECK(relu(D::from({3}, {-1, 0, 2})).values() == std::vector<double>{0, 0, 2});
    CHECK(mean(D::from({3}, {2, 4, 6})).item() == doctest::Approx(4.0));
    Rng rng(5);
    D a = D::from({2, 3}, oracles::random_vec(rng, 6));
    D b = D::from({2, 5}, oracles::random_vec(rng, 10));
    CHECK(concat_lastdim(a, b).shape() == Shape{2, 8});
    CHECK_THROWS_AS(add(a, b), ShapeError);

    // scalar against tensor
    D s = D::scalar(2.0);
    CHECK(mul(a, s).values()[3] == doctest::Approx(a.values()[3] * 2.0));
    CHECK(sub(s, s).item() == 0.0);
}

TEST_CASE("gradients of every primitive vs finite differences") {
    // linear ops at 1e-6, curved ops at 1e-4
    for (std::uint64_t seed : {21, 22, 23, 24, 25}) {
        Rng rng(seed);
        Tape<double> tape;
        D x = random_leaf(tape, rng, {2, 3, 4});
        D y = random_leaf(tape, rng, {2, 3, 4});
        D v = random_leaf(tape, rng, {4});
        D w2d = random_leaf(tape, rng, {4, 3});
        D g = random_leaf(tape, rng, {4}, 0.5, 1.5);
        auto r12 = oracles::random_vec(rng, 12);
        auto r24 = oracles::random_vec(rng, 24);
        auto r18 = oracles::random_vec(rng, 18);
        auto r48 = oracles::random_vec(rng, 48);
        auto r8 = oracles::random_vec(rng, 8);

        auto lin = [&](auto&& fn, const std::vector<double>& r) {
            return oracles::max_grad_rel_err({&x, &y, &v, &w2d},
                                             [&]() { return probe_loss(fn(), r); });
        };
        CHECK(lin([&]() { return add(x, y); }, r24) < 1e-6);
        CHECK(lin([&]() { return sub(x, y); }, r24) < 1e-6);
        CHECK(lin([&]() { return mul(x, y); }, r24) < 1e-6);
        CHECK(lin([&]() { return scale(x, 2.5); }, r24) < 1e-6);
        CHECK(lin([&]() { return transpose_last2(x); }, r24) < 1e-6);
        CHECK(lin([&]() { return reshape(x, {6, 4}); }, r24) < 1e-6);
        CHECK(lin([&]() { return slice_lastdim(x, 1, 2); }, r12) < 1e-6);
        CHECK(lin([&]() { return concat_lastdim(x, y); }, r48) < 1e-6);
        CHECK(lin([&]() { return repeat_leading(v, 2); }, r8) < 1e-6);
        CHECK(lin([&]() { return matmul(x, w2d); }, r18) < 1e-6);
        CHECK(oracles::max_grad_rel_err({&x}, [&]() {
                  auto m = mean(x);
                  return m;  // scalar loss directly
              }) < 1e-6);

        // curved
        Tape<double> tape2;
        D xr = random_leaf(tape2, rng, {2, 3, 4}, 0.2, 1.5);  // relu-safe, positive
        D xs = random_leaf(tape2, rng, {2, 3, 4}, -2, 2);
        D gg = random_leaf(tape2, rng, {4}, 0.5, 1.5);
        CHECK(oracles::max_grad_rel_err({&xr}, [&]() { return probe_loss(relu(xr), r24); }) < 1e-6);
        CHECK(oracles::max_grad_rel_err(
                  {&xs}, [&]() { return probe_loss(softmax_lastdim(xs), r24); }) < 1e-4);
        CHECK(oracles::max_grad_rel_err(
                  {&xs, &gg}, [&]() { return probe_loss(rms_norm(xs, gg, 1e-5), r24); }) < 1e-4);
    }
}

TEST_CASE("backward mechanics") {
    // d/dw sum(w*w) = 2w
    Tape<double> tape;
    D w = leaf(tape, {2}, {1, 2});
    D loss = scale(mean(mul(w, w)), 2.0);  // sum = mean * numel
    backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(2.0));
    CHECK(w.grad()[1] == doctest::Approx(4.0));
    CHECK(tape.empty());  // cleared

    // loss detached from w leaves grad at zero
    Tape<double> tape2;
    D w2 = leaf(tape2, {2}, {1, 2});
    D u = leaf(tape2, {2}, {3, 4});
    backward(mean(mul(u, u)));
    CHECK(w2.grad() == std::vector<double>{0, 0});

    // non-scalar loss is an error; so is an empty tape
    Tape<double> tape3;
    D w3 = leaf(tape3, {2}, {1, 2});
    D y = mul(w3, w3);
    CHECK_THROWS_AS(backward(y), NumericError);
    Tape<double> tape4;
    D c = leaf(tape4, {1}, {5});
    CHECK_THROWS_AS(backward(c), NumericError);  // nothing recorded
}

TEST_CASE("gradient accumulates when a tensor is reused") {
    Tape<double> tape;
    D w = leaf(tape, {2}, {3, 5});
    // loss = sum(w*w) + sum(2*w) -> grad = 2w + 2
    D s1 = scale(mean(mul(w, w)), 2.0);
    D s2 = scale(mean(scale(w, 2.0)), 2.0);
    backward(add(s1, s2));
    CHECK(w.grad()[0] == doctest::Approx(2 * 3 + 2));
    CHECK(w.grad()[1] == doctest::Approx(2 * 5 + 2));

    w.zero_grad();
    CHECK(w.grad() == std::vector<double>{0, 0});
}

TEST_CASE("view and stacking ops reject bad arguments") {
    Rng rng(55);
    D a = D::from({2, 3}, oracles::random_vec(rng, 6));
    D b = D::from({3, 3}, oracles::random_vec(rng, 9));
    CHECK_THROWS_AS(concat_lastdim(a, b), ShapeError);           // leading dims differ
    CHECK_THROWS_AS(slice_lastdim(a, 2, 2), ShapeError);         // runs past the end
    CHECK_THROWS_AS(slice_lastdim(a, -1, 1), ShapeError);
    CHECK_THROWS_AS(slice_lastdim(a, 0, 0), ShapeError);
    CHECK_THROWS_AS(repeat_leading(a, 0), ShapeError);
    CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);             // element count changes
    CHECK_THROWS_AS(rms_norm(a, D::from({2}, {1, 1}), 1e-5), ShapeError);  // gain width
    CHECK_THROWS_AS(D::from({2, 2}, {1, 2, 3}), ShapeError);     // data length
}

TEST_CASE("operations on different tapes are rejected") {
    Tape<double> t1, t2;
    D a = leaf(t1, {2}, {1, 2});
    D b = leaf(t2, {2}, {3, 4});
    CHECK_THROWS_AS(add(a, b), NumericError);
}

TEST_CASE("no-grad guard suppresses recording") {
    Tape<double> tape;
    D a = leaf(tape, {2}, {1, 2});
    {
        NoGradGuard ng;
        D out = mul(a, a);
        CHECK_FALSE(out.requires_grad());
    }
    CHECK(tape.empty());
}

TEST_CASE("deterministic forward: same inputs give bit-identical outputs") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        D x = D::from({4, 4}, oracles::random_vec(rng, 16));
        D y = D::from({4, 4}, oracles::random_vec(rng, 16));
        return softmax_lastdim(matmul(x, transpose_last2(y))).values();
    };
    CHECK(run(99) == run(99));
}

TEST_CASE("float32 softmax rows sum within 1e-5") {
    Rng rng(31);
    std::vector<float> v(40);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-3, 3));
    Tensor<float> x = Tensor<float>::from({5, 8}, v);
    auto w = softmax_lastdim(x).values();
    for (long r = 0; r < 5; ++r) {
        float s = 0;
        for (long j = 0; j < 8; ++j) s += w[r * 8 + j];
        CHECK(std::fabs(s - 1.0f) < 1e-5f);
    }
}

#include "effattn/errors.hpp"
#include "effattn/tensor.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace effattn;
using effattn::testing::col_sum;
using effattn::testing::naive_matmul;
using effattn::testing::row_sum;

TEST_CASE("tensor construction enforces shape invariants") {
    CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    const Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
}

TEST_CASE("matmul") {
    Rng rng(1);
    SUBCASE("identity") {
        const Tensor a = rand_tensor(rng, {3, 5});
        CHECK(matmul(Tensor::identity(3), a) == a);
    }
    SUBCASE("zero annihilator") {
        CHECK(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {0}})) ==
              Tensor::matrix({{0}, {0}}));
    }
    SUBCASE("matches triple loop") {
        const Tensor a = rand_tensor(rng, {3, 4});
        const Tensor b = rand_tensor(rng, {4, 2});
        CHECK(max_abs_difference(matmul(a, b), naive_matmul(a, b)) <= 1e-15);
    }
    SUBCASE("dimension error names both shapes") {
        try {
            matmul(Tensor({2, 3}), Tensor({2, 3}));
            FAIL("expected DimensionError");
        } catch (const DimensionError& e) {
            const std::string what = e.what();
            CHECK(what.find("[2x3] x [2x3]") != std::string::npos);
        }
    }
    SUBCASE("associativity") {
        for (int trial = 0; trial < 50; ++trial) {
            const auto m = rng.uniform_int(1, 12), k = rng.uniform_int(1, 12), p = rng.uniform_int(1, 12),
                       r = rng.uniform_int(1, 12);
            const Tensor a = rand_tensor(rng, {m, k});
            const Tensor b = rand_tensor(rng, {k, p});
            const Tensor c = rand_tensor(rng, {p, r});
            const double bound = 1e-10 * max_abs(a) * max_abs(b) * max_abs(c);
            CHECK(max_abs_difference(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= bound);
        }
    }
}

TEST_CASE("transpose") {
    CHECK(transpose(Tensor::matrix({{1, 2, 3}})) == Tensor::matrix({{1}, {2}, {3}}));
    Rng rng(2);
    const Tensor a = rand_tensor(rng, {5, 3});
    CHECK(transpose(transpose(a)) == a);
    const Tensor t = transpose(a);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(t[j * 5 + i] == a[i * 3 + j]);
    CHECK_THROWS_AS(transpose(Tensor({2, 2, 2})), ShapeError);
}

TEST_CASE("softmax along rows and columns") {
    CHECK(softmax_rows(Tensor::matrix({{0, 0}})) == Tensor::matrix({{0.5, 0.5}}));
    CHECK(softmax_cols(Tensor::matrix({{0}, {0}})) == Tensor::matrix({{0.5}, {0.5}}));

    const Tensor big = softmax_rows(Tensor::matrix({{1000.0, 1000.0 + std::numbers::ln2}}));
    CHECK(std::abs(big(0, 0) - 1.0 / 3.0) <= 1e-12);
    CHECK(std::abs(big(0, 1) - 2.0 / 3.0) <= 1e-12);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = rand_tensor(rng, {4, 4}, Distribution::Normal, 5.0);
        const Tensor r = softmax_rows(a);
        const Tensor c = softmax_cols(a);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(std::abs(row_sum(r, i) - 1.0) <= 1e-12);
            CHECK(std::abs(col_sum(c, i) - 1.0) <= 1e-12);
        }
        for (double x : r.data()) CHECK((x > 0.0 && x < 1.0));
        CHECK(c == transpose(softmax_rows(transpose(a))));
    }

    CHECK_THROWS_AS(softmax_rows(Tensor::matrix({{0, NAN}})), NumericError);
    CHECK_THROWS_AS(softmax_cols(Tensor::matrix({{INFINITY}, {0}})), NumericError);
}

TEST_CASE("operations leave inputs untouched") {
    Rng rng(4);
    const Tensor a = rand_tensor(rng, {3, 3});
    const Tensor before = a;
    (void)softmax_rows(a);
    (void)softmax_cols(a);
    (void)scale(a, 2.0);
    (void)divide(a, 3.0);
    (void)transpose(a);
    (void)matmul(a, a);
    CHECK(a == before);
}

TEST_CASE("scale and divide") {
    Rng rng(5);
    const Tensor a = rand_tensor(rng, {4, 3});
    CHECK(scale(a, 1.0) == a);
    CHECK(scale(Tensor::matrix({{2, 4}}), 0.5) == Tensor::matrix({{1, 2}}));
    const double n = 37.0;
    const Tensor twice = scale(scale(a, 1.0 / std::sqrt(n)), 1.0 / std::sqrt(n));
    CHECK(max_abs_difference(twice, scale(a, 1.0 / n)) <= 1e-15);
    CHECK_THROWS_AS(divide(a, 0.0), NumericError);
    CHECK_THROWS_AS(scale(a, INFINITY), NumericError);
}

TEST_CASE("rand_tensor is seed-deterministic") {
    Rng a(42), b(42), c(43);
    const Tensor x = rand_tensor(a, {8, 8});
    const Tensor y = rand_tensor(b, {8, 8});
    const Tensor z = rand_tensor(c, {8, 8});
    CHECK(x == y);
    CHECK_FALSE(x == z);
    for (double v : x.data()) CHECK((v >= -1.0 && v <= 1.0));
    CHECK_THROWS_AS(rand_tensor(a, {}), ShapeError);
}

TEST_CASE("rng stream is pinned") {
    // First outputs of xoshiro256** seeded through splitmix64(0); pinned so
    // that any change to the generator shows up as a test failure.
    Rng rng(0);
    const std::uint64_t first = rng.next_u64();
    Rng again(0);
    CHECK(again.next_u64() == first);
    CHECK(first == 0x99ec5f36cb75f2b4ULL);
}

TEST_CASE("normal draws have the right moments") {
    Rng rng(7);
    const Tensor x = rand_tensor(rng, {100000}, Distribution::Normal, 1.0);
    const double mean = sum(x) / 1e5;
    double var = 0.0;
    for (double v : x.data()) var += (v - mean) * (v - mean);
    var /= 1e5 - 1;
    CHECK(std::abs(mean) <= 0.02);
    CHECK(std::abs(var - 1.0) <= 0.05);
}

TEST_CASE("instrumentation counts matmul work and live buffers") {
    Rng rng(8);
    const Tensor a = rand_tensor(rng, {3, 4});
    const Tensor b = rand_tensor(rng, {4, 5});
    InstrumentedCounters c;
    {
        InstrumentScope scope;
        const Tensor out = matmul(a, b);
        c = scope.counters();
    }
    CHECK(c.total_macc == 3 * 4 * 5);
    CHECK(c.peak_live_floats == 3 * 5);

    SUBCASE("budget rejects an allocation before it happens") {
        InstrumentScope scope(100 * sizeof(double));
        const Tensor small({10, 10});
        CHECK_THROWS_AS(Tensor({1}), ResourceBudgetError);
        CHECK(scope.counters().live_floats == 100);
    }
    SUBCASE("nested scopes forward to the outer one") {
        InstrumentScope outer;
        {
            InstrumentScope inner(1'000'000);
            const Tensor t({10, 10});
            CHECK(inner.counters().peak_live_floats == 100);
        }
        CHECK(outer.counters().peak_live_floats == 100);
        CHECK(outer.counters().live_floats == 0);
    }
}

#include "effattn/attention.hpp"
#include "effattn/errors.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace effattn;
using effattn::testing::loop_softmax_attention;
using effattn::testing::row_sum;

namespace {

QkvTriple random_qkv(Rng& rng, std::size_t n, std::size_t dk, std::size_t dv, double range = 1.0) {
    return {rand_uniform(rng, {n, dk}, -range, range), rand_uniform(rng, {n, dk}, -range, range),
            rand_uniform(rng, {n, dv}, -range, range)};
}

Tensor permute_rows(const Tensor& a, const std::vector<std::size_t>& perm) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(perm[i], j);
    return out;
}

} // namespace

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(dot_product_attention(Tensor({4, 2}), Tensor({4, 3}), Tensor({4, 2}), Normalization::Softmax),
                    DimensionError);
    CHECK_THROWS_AS(efficient_attention(Tensor({4, 2}), Tensor({5, 2}), Tensor({4, 2}), Normalization::Scaling),
                    DimensionError);
    CHECK_THROWS_AS(efficient_attention(Tensor({4, 2}), Tensor({4, 2}), Tensor({3, 2}), Normalization::Scaling),
                    DimensionError);
    CHECK_THROWS_AS(global_context(Tensor({4, 2}), Tensor({3, 2}), Normalization::Softmax), DimensionError);
}

TEST_CASE("zero values give zero output") {
    Rng rng(11);
    const auto t = random_qkv(rng, 6, 3, 4);
    const Tensor zeros({6, 4});
    for (auto norm : {Normalization::Scaling, Normalization::Softmax}) {
        CHECK(max_abs(dot_product_attention(t.q, t.k, zeros, norm)) == 0.0);
        CHECK(max_abs(efficient_attention(t.q, t.k, zeros, norm)) == 0.0);
        CHECK(max_abs(global_context(t.k, zeros, norm)) == 0.0);
    }
}

TEST_CASE("single position under scaling is plain multiplication") {
    const double q = 0.7, k = -1.3, v = 2.5;
    const Tensor out = dot_product_attention(Tensor::matrix({{q}}), Tensor::matrix({{k}}), Tensor::matrix({{v}}),
                                             Normalization::Scaling);
    CHECK(out(0, 0) == doctest::Approx(q * k * v).epsilon(1e-15));
    CHECK(effective_attention_matrix(Tensor::matrix({{q}}), Tensor::matrix({{k}}), Normalization::Softmax) ==
          Tensor::matrix({{1.0}}));
}

TEST_CASE("dot-product softmax matches a per-position loop") {
    Rng rng(12);
    const auto t = random_qkv(rng, 6, 2, 3);
    const Tensor out = dot_product_attention(t, Normalization::Softmax);
    CHECK(max_abs_difference(out, loop_softmax_attention(t.q, t.k, t.v)) <= 1e-12);
}

TEST_CASE("efficient equals dot-product under scaling") {
    Rng rng(13);
    const auto t = random_qkv(rng, 8, 3, 4);
    CHECK(max_relative_difference(efficient_attention(t, Normalization::Scaling),
                                  dot_product_attention(t, Normalization::Scaling)) <= 1e-10);

    // The implied mixing matrix is Q K^T / n.
    const Tensor implied = effective_attention_matrix(t.q, t.k, Normalization::Scaling);
    const Tensor direct = scale(matmul(t.q, transpose(t.k)), 1.0 / 8.0);
    CHECK(max_abs_difference(implied, direct) <= 1e-15);
}

TEST_CASE("softmax effective attention matrices are row-stochastic") {
    Rng rng(14);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = rng.uniform_int(1, 20), dk = rng.uniform_int(1, 6);
        const auto t = random_qkv(rng, n, dk, 1, 3.0);
        for (auto mech : {Mechanism::Efficient, Mechanism::DotProduct}) {
            const Tensor m = effective_attention_matrix(t.q, t.k, Normalization::Softmax, mech);
            for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(row_sum(m, i) - 1.0) <= 1e-12);
            CHECK(*std::min_element(m.data().begin(), m.data().end()) >= 0.0);
        }
    }
}

TEST_CASE("global context") {
    Rng rng(15);
    const auto t = random_qkv(rng, 9, 3, 1);
    const Tensor ones = Tensor::filled({9, 1}, 1.0);
    const Tensor g = global_context(t.k, ones, Normalization::Softmax);
    for (double x : g.data()) CHECK(std::abs(x - 1.0) <= 1e-12);

    const auto u = random_qkv(rng, 7, 3, 5);
    for (auto norm : {Normalization::Scaling, Normalization::Softmax}) {
        const Tensor decomposed = matmul(normalize_queries(u.q, norm), global_context(u.k, u.v, norm));
        CHECK(max_abs_difference(efficient_attention(u, norm), decomposed) <= 1e-15);
    }
}

TEST_CASE("template attention maps") {
    Rng rng(16);
    Tensor k = rand_tensor(rng, {10, 3});
    for (std::size_t i = 0; i < 10; ++i) k(i, 1) = 0.25;
    const Tensor maps = template_attention_maps(k, Normalization::Softmax);
    CHECK(maps.shape() == Shape{3, 10});
    for (std::size_t i = 0; i < 10; ++i) CHECK(maps(1, i) == doctest::Approx(0.1).epsilon(1e-14));
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(row_sum(maps, j) - 1.0) <= 1e-12);

    const Tensor scaled = template_attention_maps(k, Normalization::Scaling);
    CHECK(max_abs_difference(scaled, scale(transpose(k), 1.0 / std::sqrt(10.0))) <= 1e-16);
}

TEST_CASE("pairwise similarity") {
    const Tensor q = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK(pairwise_similarity(q, q) == Tensor::identity(3));

    Rng rng(17);
    const auto t = random_qkv(rng, 5, 2, 1);
    const Tensor s = pairwise_similarity(t.q, t.k);
    CHECK(s == matmul(t.q, transpose(t.k)));
    bool asymmetric = false;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) asymmetric = asymmetric || s(i, j) != s(j, i);
    CHECK(asymmetric);
}

TEST_CASE("permutation equivariance") {
    Rng rng(18);
    const auto t = random_qkv(rng, 7, 3, 2);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.begin() + 4);
    std::swap(perm[5], perm[6]);
    for (auto mech : {Mechanism::Efficient, Mechanism::DotProduct}) {
        for (auto norm : {Normalization::Scaling, Normalization::Softmax}) {
            const Tensor out = attend(mech, t.q, t.k, t.v, norm);
            const Tensor permuted = attend(mech, permute_rows(t.q, perm), permute_rows(t.k, perm),
                                           permute_rows(t.v, perm), norm);
            CHECK(max_abs_difference(permuted, permute_rows(out, perm)) <= 1e-13);
        }
    }
}

TEST_CASE("softmax outputs are convex combinations of values") {
    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = random_qkv(rng, 12, 4, 3, 2.0);
        const Tensor v = rand_uniform(rng, {12, 3}, -0.5, 1.5);
        for (auto mech : {Mechanism::Efficient, Mechanism::DotProduct}) {
            const Tensor out = attend(mech, t.q, t.k, v, Normalization::Softmax);
            const double lo = *std::min_element(v.data().begin(), v.data().end());
            const double hi = *std::max_element(v.data().begin(), v.data().end());
            for (double x : out.data()) CHECK((x >= lo - 1e-12 && x <= hi + 1e-12));
        }
    }
}

TEST_CASE("softmax approximation gap is reported, and nonzero in general") {
    Rng rng(20);
    const auto t = random_qkv(rng, 8, 3, 1);
    CHECK(softmax_approximation_gap(t.q, t.k) > 0.0);
}

TEST_CASE("efficient attention allocates nothing quadratic") {
    Rng rng(21);
    const std::size_t dk = 4, dv = 8;
    for (std::size_t n : {64u, 256u, 1024u}) {
        const auto t = random_qkv(rng, n, dk, dv);
        InstrumentedCounters eff, dot;
        {
            InstrumentScope s;
            (void)efficient_attention(t, Normalization::Softmax);
            eff = s.counters();
        }
        {
            InstrumentScope s;
            (void)dot_product_attention(t, Normalization::Softmax);
            dot = s.counters();
        }
        CHECK(eff.total_macc == 2 * n * dk * dv);
        CHECK(dot.total_macc == n * dk * n + n * n * dv);
        CHECK(eff.peak_live_floats < 4 * n * (dk + dv));
        CHECK(dot.peak_live_floats >= n * n);
    }
}

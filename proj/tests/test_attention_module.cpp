#include "effattn/attention_module.hpp"
#include "effattn/errors.hpp"
#include "effattn/resource_model.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace effattn;
using effattn::testing::naive_matmul;

TEST_CASE("flatten follows row-major spatial order") {
    // Channel c of position (r, s) holds 100 r + 10 s + c.
    Tensor t({2, 3, 2});
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t c = 0; c < 2; ++c) t[(r * 3 + s) * 2 + c] = 100.0 * r + 10.0 * s + c;
    const FeatureMap x(t);
    const Tensor flat = flatten(x);
    CHECK(flat.shape() == Shape{6, 2});
    std::size_t row = 0;
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t s = 0; s < 3; ++s, ++row)
            for (std::size_t c = 0; c < 2; ++c) CHECK(flat(row, c) == 100.0 * r + 10.0 * s + c);

    CHECK(unflatten(flat, x.spatial()) == x);

    const FeatureMap single(Tensor({1, 1, 3}, {1.0, 2.0, 3.0}));
    CHECK(flatten(single) == Tensor::matrix({{1, 2, 3}}));
}

TEST_CASE("project") {
    Rng rng(31);
    const Tensor x = rand_tensor(rng, {5, 3});
    ModuleWeights id{Tensor::identity(3), Tensor::identity(3), Tensor::identity(3), std::nullopt};
    const QkvTriple same = project(x, id);
    CHECK(same.q == x);
    CHECK(same.k == x);
    CHECK(same.v == x);

    const ModuleWeights w = init_weights(rng, 3, 2, 4);
    const QkvTriple zero = project(Tensor({5, 3}), w);
    CHECK(max_abs(zero.q) + max_abs(zero.k) + max_abs(zero.v) == 0.0);

    const QkvTriple t = project(x, w);
    CHECK(max_abs_difference(t.q, naive_matmul(x, w.w_q)) <= 1e-15);
    CHECK(max_abs_difference(t.k, naive_matmul(x, w.w_k)) <= 1e-15);
    CHECK(max_abs_difference(t.v, naive_matmul(x, w.w_v)) <= 1e-15);
}

TEST_CASE("module forward with a silent attention branch is the identity") {
    Rng rng(32);
    const FeatureMap x(rand_tensor(rng, {4, 5, 6}));
    for (auto mech : {Mechanism::Efficient, Mechanism::DotProduct}) {
        for (auto norm : {Normalization::Scaling, Normalization::Softmax}) {
            const AttentionConfig cfg{3, 4, norm, mech, true};
            CHECK(module_forward(x, zero_weights(6, 3, 4), cfg) == x);
        }
    }
}

TEST_CASE("module mechanisms agree under scaling") {
    Rng rng(33);
    const FeatureMap x(rand_tensor(rng, {5, 6, 8}));
    const ModuleWeights w = init_weights(rng, 8, 4, 6);
    AttentionConfig cfg{4, 6, Normalization::Scaling, Mechanism::Efficient, true};
    const FeatureMap eff = module_forward(x, w, cfg);
    cfg.mechanism = Mechanism::DotProduct;
    const FeatureMap dot = module_forward(x, w, cfg);
    CHECK(max_relative_difference(eff.tensor(), dot.tensor()) <= 1e-10);
    CHECK(eff.tensor().shape() == x.tensor().shape());
}

TEST_CASE("module forward matches a per-position loop oracle") {
    Rng rng(34);
    const std::size_t h = 4, wd = 4, d = 8, dk = 4, dv = 4, n = h * wd;
    const FeatureMap x(rand_tensor(rng, {h, wd, d}));
    const ModuleWeights w = init_weights(rng, d, dk, dv);
    const FeatureMap out = module_forward(x, w, {dk, dv, Normalization::Softmax, Mechanism::Efficient, true});

    const Tensor& xt = x.tensor();
    auto proj = [&](std::size_t i, const Tensor& m, std::size_t c) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) s += xt[i * d + t] * m(t, c);
        return s;
    };
    // Column-softmax denominators of the keys.
    std::vector<double> key_z(dk, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t m = 0; m < dk; ++m) key_z[m] += std::exp(proj(j, w.w_k, m));

    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> a(dk);
        double qz = 0.0;
        for (std::size_t m = 0; m < dk; ++m) qz += (a[m] = std::exp(proj(i, w.w_q, m)));
        for (auto& v : a) v /= qz;

        std::vector<double> mixed(dv, 0.0);
        double weight_total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double wij = 0.0;
            for (std::size_t m = 0; m < dk; ++m) wij += a[m] * std::exp(proj(j, w.w_k, m)) / key_z[m];
            weight_total += wij;
            for (std::size_t c = 0; c < dv; ++c) mixed[c] += wij * proj(j, w.w_v, c);
        }
        CHECK(weight_total == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t c = 0; c < d; ++c) {
            double expected = xt[i * d + c];
            for (std::size_t t = 0; t < dv; ++t) expected += mixed[t] * (*w.w_o)(t, c);
            CHECK(std::abs(out.tensor()[i * d + c] - expected) <= 1e-12);
        }
    }
}

TEST_CASE("spatial rank does not matter to the module") {
    Rng rng(35);
    const Tensor data = rand_tensor(rng, {2, 3, 4, 5});
    const FeatureMap volume(data);
    const FeatureMap map(data.reshaped({6, 4, 5}));
    const ModuleWeights w = init_weights(rng, 5, 2, 3);
    const AttentionConfig cfg{2, 3, Normalization::Softmax, Mechanism::Efficient, true};
    CHECK(flatten(module_forward(volume, w, cfg)) == flatten(module_forward(map, w, cfg)));
}

TEST_CASE("weight validation") {
    Rng rng(36);
    const FeatureMap x(rand_tensor(rng, {3, 3, 4}));
    SUBCASE("missing reprojection") {
        ModuleWeights w = init_weights(rng, 4, 2, 3);
        w.w_o.reset();
        CHECK_THROWS_AS(module_forward(x, w, {2, 3, Normalization::Softmax, Mechanism::Efficient, false}),
                        DimensionError);
    }
    SUBCASE("reprojection disabled and d_v == d") {
        const ModuleWeights w = init_weights(rng, 4, 2, 4, InitScheme::Uniform, false);
        CHECK_FALSE(w.w_o.has_value());
        const FeatureMap out = module_forward(x, w, {2, 4, Normalization::Softmax, Mechanism::Efficient, false});
        CHECK(out.tensor().shape() == x.tensor().shape());
    }
    SUBCASE("wrong key width") {
        const ModuleWeights w = init_weights(rng, 4, 2, 4);
        CHECK_THROWS_AS(module_forward(x, w, {3, 4, Normalization::Softmax, Mechanism::Efficient, true}),
                        DimensionError);
    }
}

TEST_CASE("budget turns the quadratic buffer into a resource error") {
    Rng rng(37);
    const FeatureMap x(rand_tensor(rng, {32, 32, 8}));
    const ModuleWeights w = init_weights(rng, 8, 4, 8);
    AttentionConfig cfg{4, 8, Normalization::Softmax, Mechanism::DotProduct, true};
    // n = 1024: the similarity matrix alone is 8 MiB in binary64.
    const std::uint64_t budget = 2'000'000;
    CHECK_THROWS_AS(module_forward(x, w, cfg, budget), ResourceBudgetError);
    cfg.mechanism = Mechanism::Efficient;
    CHECK_NOTHROW(module_forward(x, w, cfg, budget));
}

TEST_CASE("init_weights") {
    Rng a(38), b(38);
    const ModuleWeights wa = init_weights(a, 16, 8, 16);
    const ModuleWeights wb = init_weights(b, 16, 8, 16);
    CHECK(wa.w_q == wb.w_q);
    CHECK(wa.w_o == wb.w_o);
    const double bound = 1.0 / 4.0;
    for (const Tensor* t : {&wa.w_q, &wa.w_k, &wa.w_v, &*wa.w_o})
        for (double v : t->data()) CHECK(std::abs(v) <= bound);

    Rng c(39);
    const ModuleWeights normal = init_weights(c, 64, 64, 64, InitScheme::Normal);
    double s = 0.0, s2 = 0.0, count = 0.0;
    for (const Tensor* t : {&normal.w_q, &normal.w_k, &normal.w_v, &*normal.w_o})
        for (double v : t->data()) {
            s += v;
            s2 += v * v;
            count += 1.0;
        }
    const double mean = s / count;
    const double var = (s2 - count * mean * mean) / (count - 1.0);
    CHECK(count >= 1e4);
    CHECK(std::abs(var - 1.0 / 64.0) <= 0.2 / 64.0);
    CHECK_THROWS_AS(init_weights(c, 0, 1, 1), PreconditionError);
}

TEST_CASE("module MACCs grow strictly with d_k") {
    Rng rng(40);
    const FeatureMap x(rand_tensor(rng, {8, 8, 16}));
    for (auto mech : {Mechanism::Efficient, Mechanism::DotProduct}) {
        std::uint64_t previous = 0;
        for (std::size_t dk = 1; dk <= 16; dk *= 2) {
            const ModuleWeights w = init_weights(rng, 16, dk, 16);
            const AttentionConfig cfg{dk, 16, Normalization::Softmax, mech, true};
            const auto c = measure([&] { (void)module_forward(x, w, cfg); });
            CHECK(c.total_macc == module_matmul_macc(mech, 64, 16, dk, 16, true));
            CHECK(c.total_macc > previous);
            previous = c.total_macc;
        }
    }
}

#include "convotts/grad_check.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace convotts;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lim = 1.0) {
    return uniform_init(std::move(shape), lim, rng);
}

}  // namespace

// Every primitive op: analytic vs central finite differences at h=1e-5,
// inputs in [-1,1], >=20 seeds, max rel err <= 1e-4.
TEST(GradCheck, PrimitiveOpsOverSeeds) {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        Param a("a", random_tensor({3, 4}, rng));
        Param b("b", random_tensor({3, 4}, rng));
        Param w("w", random_tensor({4, 2}, rng));
        Param r("r", random_tensor({1, 4}, rng));

        std::vector<Param*> ab{&a, &b};
        std::vector<Param*> aw{&a, &w};
        std::vector<Param*> ar{&a, &r};
        std::vector<Param*> just_a{&a};

        auto check = [&](std::span<Param* const> ps, auto build) {
            auto report = grad_check(ps, build, 1e-4);
            EXPECT_TRUE(report.pass()) << "worst rel err " << report.worst();
        };

        check(ab, [&](Graph& g) { return sum(add(g.param(a), g.param(b))); });
        check(ab, [&](Graph& g) { return sum(sub(g.param(a), g.param(b))); });
        check(ab, [&](Graph& g) { return mean(mul(g.param(a), g.param(b))); });
        check(just_a, [&](Graph& g) { return sum(scale(g.param(a), -1.7)); });
        check(just_a, [&](Graph& g) { return mean(tanh(g.param(a))); });
        check(just_a, [&](Graph& g) { return mean(sigmoid(g.param(a))); });
        check(just_a, [&](Graph& g) { return mean(abs(g.param(a))); });
        check(aw, [&](Graph& g) { return mean(matmul(g.param(a), g.param(w))); });
        check(ar, [&](Graph& g) { return mean(add_rowwise(g.param(a), g.param(r))); });
    }
}

// Gradient of sum(a*b) w.r.t. a matches central differences within 1e-6.
TEST(GradCheck, MatmulTightTolerance) {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 100);
        Param a("a", random_tensor({2, 3}, rng));
        Tensor b = random_tensor({3, 2}, rng);
        std::vector<Param*> ps{&a};
        auto report = grad_check(
            std::span<Param* const>(ps),
            [&](Graph& g) { return sum(matmul(g.param(a), g.input(b))); }, 1e-6);
        EXPECT_TRUE(report.pass()) << "worst rel err " << report.worst();
    }
}

// Softmax Jacobian-vector product vs finite differences, rel err <= 1e-6.
TEST(GradCheck, SoftmaxJacobian) {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 200);
        Param x("x", random_tensor({1, 5}, rng));
        Tensor probe = random_tensor({1, 5}, rng);
        std::vector<Param*> ps{&x};
        auto report = grad_check(
            std::span<Param* const>(ps),
            [&](Graph& g) { return sum(mul(softmax(g.param(x)), g.input(probe))); }, 1e-6);
        EXPECT_TRUE(report.pass()) << "worst rel err " << report.worst();
    }
}

TEST(GradCheck, MaskedSoftmaxIgnoresMaskedSlots) {
    std::mt19937_64 rng(5);
    Param x("x", random_tensor({1, 4}, rng));
    Tensor probe = random_tensor({1, 4}, rng);
    std::vector<std::uint8_t> keep{1, 0, 1, 1};
    std::vector<Param*> ps{&x};
    auto report = grad_check(
        std::span<Param* const>(ps),
        [&](Graph& g) { return sum(mul(masked_softmax(g.param(x), keep), g.input(probe))); },
        1e-6);
    EXPECT_TRUE(report.pass());

    // Masked slot output exactly zero, gradient into it exactly zero.
    x.zero_grad();
    Graph g;
    Value out = masked_softmax(g.param(x), keep);
    EXPECT_EQ(out.value()[1], 0.0);
    g.backward(sum(mul(out, g.input(probe))));
    EXPECT_EQ(x.grad[1], 0.0);
}

// loss = MSE(w*x, y) for one linear layer.
TEST(GradCheck, LinearLayerMse) {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 300);
        Param w("w", random_tensor({4, 3}, rng));
        Tensor x = random_tensor({2, 4}, rng);
        Tensor y = random_tensor({2, 3}, rng);
        std::vector<Param*> ps{&w};
        auto report = grad_check(
            std::span<Param* const>(ps),
            [&](Graph& g) {
                Value diff = sub(matmul(g.input(x), g.param(w)), g.input(y));
                return mean(mul(diff, diff));
            },
            1e-5);
        EXPECT_TRUE(report.pass()) << "worst rel err " << report.worst();
    }
}

TEST(GradCheck, ConcatAndGatherPaths) {
    std::mt19937_64 rng(11);
    Param table("table", random_tensor({5, 3}, rng));
    Param v("v", random_tensor({1, 3}, rng));
    std::vector<std::size_t> ids{4, 1, 1, 0};
    std::vector<Param*> ps{&table, &v};
    auto report = grad_check(
        std::span<Param* const>(ps),
        [&](Graph& g) {
            Value rowsv = gather_rows(g.param(table), ids);
            Value joined = add_rowwise(rowsv, g.param(v));
            std::vector<Value> parts{mean(joined), sum(tanh(g.param(v)))};
            return sum(concat_cols(parts));
        },
        1e-4);
    EXPECT_TRUE(report.pass()) << "worst rel err " << report.worst();
}

TEST(GradCheck, ImpossibleToleranceFails) {
    std::mt19937_64 rng(3);
    Param w("w", random_tensor({3, 3}, rng));
    Tensor x = random_tensor({1, 3}, rng);
    std::vector<Param*> ps{&w};
    auto report = grad_check(
        std::span<Param* const>(ps),
        [&](Graph& g) { return mean(tanh(matmul(g.input(x), g.param(w)))); }, 1e-12);
    EXPECT_FALSE(report.pass());
}

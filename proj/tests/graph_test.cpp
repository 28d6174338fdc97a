#include "convotts/graph.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace convotts;

TEST(Tensor, ShapeAndData) {
    Tensor t({2, 3});
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    t.at(1, 2) = 5.0;
    EXPECT_DOUBLE_EQ(t[5], 5.0);
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, FiniteCheck) {
    Tensor t = Tensor::row({1.0, 2.0});
    EXPECT_TRUE(t.all_finite());
    t[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(t.all_finite());
}

TEST(Matmul, IdentityCase) {
    Graph g;
    Value id = g.input(Tensor::matrix({{1, 0}, {0, 1}}));
    Value v = g.input(Tensor::matrix({{3}, {4}}));
    Value out = matmul(id, v);
    EXPECT_EQ(out.value(), Tensor::matrix({{3}, {4}}));
}

TEST(Matmul, HandArithmetic) {
    Graph g;
    Value a = g.input(Tensor::matrix({{1, 2}}));
    Value b = g.input(Tensor::matrix({{3}, {4}}));
    EXPECT_EQ(matmul(a, b).value(), Tensor::matrix({{11}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Graph g;
    Value a = g.input(Tensor::zeros({2, 3}));
    Value b = g.input(Tensor::zeros({2, 3}));
    try {
        matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    }
}

TEST(Elementwise, TanhAtZero) {
    Graph g;
    Value out = tanh(g.input(Tensor::zeros({1, 4})));
    for (double v : out.value().data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Elementwise, SigmoidAtZero) {
    Graph g;
    Value out = sigmoid(g.input(Tensor::zeros({1, 4})));
    for (double v : out.value().data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Elementwise, TanhDerivativeAtZeroIsOne) {
    Param x("x", Tensor::scalar(0.0));
    Graph g;
    Value out = sum(tanh(g.param(x)));
    g.backward(out);
    EXPECT_DOUBLE_EQ(x.grad[0], 1.0);
}

TEST(Elementwise, ShapeMismatch) {
    Graph g;
    Value a = g.input(Tensor::zeros({1, 2}));
    Value b = g.input(Tensor::zeros({1, 3}));
    EXPECT_THROW(add(a, b), ShapeError);
    EXPECT_THROW(mul(a, b), ShapeError);
    EXPECT_THROW(sub(a, b), ShapeError);
}

TEST(Softmax, SymmetricPair) {
    Graph g;
    Value out = softmax(g.input(Tensor::row({0.0, 0.0})));
    EXPECT_DOUBLE_EQ(out.value()[0], 0.5);
    EXPECT_DOUBLE_EQ(out.value()[1], 0.5);
}

TEST(Softmax, ClosedForm) {
    Graph g;
    Value out = softmax(g.input(Tensor::row({std::log(2.0), 0.0})));
    EXPECT_NEAR(out.value()[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(out.value()[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SumsToOneAndPermutationEquivariant) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> xs(6);
        for (double& v : xs) v = dist(rng);

        Graph g;
        Value out = softmax(g.input(Tensor::row(xs)));
        double total = 0.0;
        for (double v : out.value().data()) {
            EXPECT_GE(v, 0.0);
            total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);

        std::vector<double> rev(xs.rbegin(), xs.rend());
        Graph g2;
        Value out2 = softmax(g2.input(Tensor::row(rev)));
        for (std::size_t i = 0; i < xs.size(); ++i)
            EXPECT_DOUBLE_EQ(out.value()[i], out2.value()[xs.size() - 1 - i]);
    }
}

TEST(Backward, SumOfParameterGivesOnes) {
    Param p("p", Tensor::zeros({2, 3}));
    Graph g;
    g.backward(sum(g.param(p)));
    for (double v : p.grad.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Backward, NonScalarLossRejected) {
    Graph g;
    Value v = g.input(Tensor::zeros({1, 2}));
    EXPECT_THROW(g.backward(v), ShapeError);
}

TEST(Backward, RepeatedCallsAccumulate) {
    Param p("p", Tensor::row({1.0, 2.0}));
    Graph g;
    Value loss = sum(g.param(p));
    g.backward(loss);
    g.backward(loss);
    for (double v : p.grad.data()) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Backward, ZeroGradBetweenCallsGivesIdenticalGrads) {
    Param w("w", Tensor::matrix({{0.3, -0.2}, {0.1, 0.7}}));
    auto run = [&]() {
        w.zero_grad();
        Graph g;
        Value x = g.input(Tensor::matrix({{1.0, -1.5}}));
        Value y = g.input(Tensor::matrix({{0.2, 0.4}}));
        Value diff = sub(matmul(x, g.param(w)), y);
        g.backward(mean(mul(diff, diff)));
        return w.grad;
    };
    Tensor g1 = run();
    Tensor g2 = run();
    EXPECT_EQ(g1, g2);
}

TEST(Backward, FanOutAccumulatesThroughSharedNode) {
    // loss = sum(x*x) with the same node used twice: d/dx = 2x
    Param x("x", Tensor::row({1.5, -2.0}));
    Graph g;
    Value v = g.param(x);
    g.backward(sum(mul(v, v)));
    EXPECT_DOUBLE_EQ(x.grad[0], 3.0);
    EXPECT_DOUBLE_EQ(x.grad[1], -4.0);
}

TEST(GatherRows, ForwardAndScatterBackward) {
    Param table("t", Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
    Graph g;
    std::vector<std::size_t> ids{2, 0, 2};
    Value out = gather_rows(g.param(table), ids);
    EXPECT_EQ(out.value(), Tensor::matrix({{5, 6}, {1, 2}, {5, 6}}));
    g.backward(sum(out));
    EXPECT_DOUBLE_EQ(table.grad.at(2, 0), 2.0);
    EXPECT_DOUBLE_EQ(table.grad.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(table.grad.at(1, 0), 0.0);

    Graph g2;
    std::vector<std::size_t> bad{3};
    EXPECT_THROW(gather_rows(g2.param(table), bad), VocabError);
}

TEST(Concat, ColsAndRows) {
    Graph g;
    Value a = g.input(Tensor::row({1, 2}));
    Value b = g.input(Tensor::row({3}));
    std::vector<Value> parts{a, b};
    EXPECT_EQ(concat_cols(parts).value(), Tensor::row({1, 2, 3}));

    Value m1 = g.input(Tensor::matrix({{1, 2}}));
    Value m2 = g.input(Tensor::matrix({{3, 4}, {5, 6}}));
    std::vector<Value> rows{m1, m2};
    EXPECT_EQ(concat_rows(rows).value(), Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
}

TEST(Determinism, ForwardBackwardBitIdentical) {
    auto run = [](unsigned seed) {
        std::mt19937_64 rng(seed);
        Param w("w", uniform_init({4, 3}, 0.5, rng));
        Graph g;
        Value x = g.input(uniform_init({2, 4}, 1.0, rng));
        Value loss = mean(tanh(matmul(x, g.param(w))));
        g.backward(loss);
        return std::make_pair(loss.value()[0], w.grad);
    };
    auto [l1, g1] = run(99);
    auto [l2, g2] = run(99);
    EXPECT_EQ(l1, l2);
    EXPECT_EQ(g1, g2);
}

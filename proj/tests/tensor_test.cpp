#include "scprompt/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "scprompt/rng.hpp"
#include "test_util.hpp"

using namespace scprompt;
using scprompt::testing::close_rel;
using scprompt::testing::finite_difference_check;
using scprompt::testing::random_tensor;

TEST(Matmul, IdentityCase) {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(nullptr, eye, m);
    EXPECT_EQ(out.data_vec(), m.data_vec());
}

TEST(Matmul, BasisSelection) {
    Tensor a = Tensor::from_data({1, 2}, {1, 0});
    Tensor b = Tensor::from_data({2, 1}, {0, 5});
    Tensor out = matmul(nullptr, a, b);
    ASSERT_EQ(out.numel(), 1u);
    EXPECT_DOUBLE_EQ(out.value(), 0.0);
}

TEST(Matmul, ShapeMismatchThrows) {
    Tensor a({2, 3});
    Tensor b({2, 3});
    EXPECT_THROW(matmul(nullptr, a, b), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
    Rng rng(7);
    Tensor a = random_tensor(rng, {3, 4}, -1, 1, true);
    Tensor b = random_tensor(rng, {4, 2}, -1, 1, true);
    auto forward = [&] {
        Tape tape;
        return sum_all(&tape, matmul(&tape, a, b)).value();
    };
    Tape tape;
    Tensor loss = sum_all(&tape, matmul(&tape, a, b));
    backward(loss, tape);
    auto rep = finite_difference_check(forward, {&a, &b},
                                       {a.grad_vec(), b.grad_vec()});
    EXPECT_LT(rep.max_rel_err, 1e-6);
}

TEST(Softmax, SymmetricPair) {
    Tensor x = Tensor::from_data({2}, {0, 0});
    Tensor y = softmax_lastdim(nullptr, x);
    EXPECT_DOUBLE_EQ(y.at(0), 0.5);
    EXPECT_DOUBLE_EQ(y.at(1), 0.5);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    Tensor x = Tensor::from_data({2}, {1000, 0});
    Tensor y = softmax_lastdim(nullptr, x);
    EXPECT_TRUE(y.all_finite());
    EXPECT_NEAR(y.at(0), 1.0, 1e-12);
    EXPECT_NEAR(y.at(1), 0.0, 1e-12);
}

TEST(Softmax, MatchesExtendedPrecision) {
    Tensor x = Tensor::from_data({3}, {1, 2, 3});
    Tensor y = softmax_lastdim(nullptr, x);
    long double denom = 0.0L;
    for (int i = 1; i <= 3; ++i) denom += std::exp(static_cast<long double>(i));
    for (int i = 0; i < 3; ++i) {
        const long double want = std::exp(static_cast<long double>(i + 1)) / denom;
        EXPECT_LT(std::abs(y.at(static_cast<std::size_t>(i)) - static_cast<double>(want)),
                  1e-12);
    }
}

TEST(Softmax, EmptyThrows) {
    Tensor x({0});
    EXPECT_THROW(softmax_lastdim(nullptr, x), DimensionError);
}

TEST(Softmax, OutputsAreSimplexPoints) {
    Rng rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
        Tensor x = random_tensor(rng, {4}, -30, 30);
        Tensor y = softmax_lastdim(nullptr, x);
        double sum = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_GE(y.at(i), 0.0);
            sum += y.at(i);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(LogSoftmax, SymmetricPair) {
    Tensor x = Tensor::from_data({2}, {0, 0});
    Tensor y = log_softmax_lastdim(nullptr, x);
    EXPECT_NEAR(y.at(0), std::log(0.5), 1e-15);
    EXPECT_NEAR(y.at(1), std::log(0.5), 1e-15);
}

TEST(LogSoftmax, ComposeAndCompare) {
    Rng rng(13);
    for (int rep = 0; rep < 200; ++rep) {
        Tensor x = random_tensor(rng, {2, 5}, -5, 5);
        Tensor ls = log_softmax_lastdim(nullptr, x);
        Tensor s = softmax_lastdim(nullptr, x);
        for (std::size_t i = 0; i < x.numel(); ++i)
            EXPECT_NEAR(ls.data()[i], std::log(s.data()[i]), 1e-9);
    }
}

TEST(LogSoftmax, ExtremeInputsStayFinite) {
    Tensor x = Tensor::from_data({2}, {-1e4, 0});
    Tensor y = log_softmax_lastdim(nullptr, x);
    EXPECT_TRUE(std::isfinite(y.at(0)));
    EXPECT_TRUE(std::isfinite(y.at(1)));
}

TEST(LayerNorm, ConstantSliceGivesBias) {
    Tensor x = Tensor::from_data({1, 3}, {3, 3, 3});
    Tensor g = Tensor::from_data({3}, {2, 2, 2});
    Tensor b = Tensor::from_data({3}, {0.5, 0.5, 0.5});
    Tensor y = layer_norm(nullptr, x, g, b);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.at(0, i), 0.5, 1e-12);
}

TEST(LayerNorm, AlreadyNormalizedPassesThrough) {
    Tensor x = Tensor::from_data({1, 2}, {1, -1});
    Tensor g = Tensor::from_data({2}, {1, 1});
    Tensor b = Tensor::from_data({2}, {0, 0});
    Tensor y = layer_norm(nullptr, x, g, b);
    EXPECT_NEAR(y.at(0, 0), 1.0, 1e-4);
    EXPECT_NEAR(y.at(0, 1), -1.0, 1e-4);
}

TEST(LayerNorm, DimensionMismatchThrows) {
    Tensor x({2, 4});
    Tensor g({3});
    Tensor b({4});
    EXPECT_THROW(layer_norm(nullptr, x, g, b), DimensionError);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
    Rng rng(17);
    Tensor x = random_tensor(rng, {3, 5}, -2, 2, true);
    Tensor g = random_tensor(rng, {5}, 0.5, 1.5, true);
    Tensor b = random_tensor(rng, {5}, -0.5, 0.5, true);
    // Weighted sum keeps the loss sensitive to every coordinate.
    Tensor w = random_tensor(rng, {3, 5}, -1, 1);
    auto forward = [&] {
        Tape tape;
        return sum_all(&tape, mul(&tape, layer_norm(&tape, x, g, b), w)).value();
    };
    Tape tape;
    Tensor loss = sum_all(&tape, mul(&tape, layer_norm(&tape, x, g, b), w));
    backward(loss, tape);
    auto rep = finite_difference_check(forward, {&x, &g, &b},
                                       {x.grad_vec(), g.grad_vec(), b.grad_vec()});
    EXPECT_LT(rep.max_rel_err, 1e-6);
}

TEST(Backward, SumGivesOnes) {
    Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
    Tape tape;
    Tensor loss = sum_all(&tape, x);
    backward(loss, tape);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad_vec()[i], 1.0);
}

TEST(Backward, QuadraticGivesTwoX) {
    Tensor x = Tensor::from_data({3}, {1.5, -2.0, 0.25}, true);
    Tape tape;
    Tensor loss = sum_all(&tape, mul(&tape, x, x));
    backward(loss, tape);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(x.grad_vec()[i], 2.0 * x.at(i), 1e-12);
}

TEST(Backward, NonScalarLossThrows) {
    Tensor x({2, 2}, 1.0, true);
    Tape tape;
    Tensor y = scale(&tape, x, 2.0);
    EXPECT_THROW(backward(y, tape), ContractError);
}

TEST(Backward, FanOutAccumulates) {
    Tensor x = Tensor::from_data({2}, {3, 4}, true);
    Tape tape;
    Tensor y = add(&tape, x, x);  // dy/dx = 2
    Tensor loss = sum_all(&tape, y);
    backward(loss, tape);
    EXPECT_DOUBLE_EQ(x.grad_vec()[0], 2.0);
    EXPECT_DOUBLE_EQ(x.grad_vec()[1], 2.0);
}

TEST(Backward, DeterministicAcrossRuns) {
    Rng rng(23);
    Tensor a = random_tensor(rng, {4, 4}, -1, 1, true);
    Tensor b = random_tensor(rng, {4, 4}, -1, 1, true);
    auto run = [&] {
        a.clear_grad();
        b.clear_grad();
        Tape tape;
        Tensor h = gelu(&tape, matmul(&tape, a, b));
        Tensor loss = sum_all(&tape, softmax_lastdim(&tape, h));
        backward(loss, tape);
        return std::make_pair(a.grad_vec(), b.grad_vec());
    };
    auto first = run();
    auto second = run();
    EXPECT_EQ(first.first, second.first);
    EXPECT_EQ(first.second, second.second);
}

// Composed-graph gradient check over every primitive the model uses.
TEST(Backward, ComposedGraphGradientCheck) {
    Rng rng(29);
    Tensor x = random_tensor(rng, {3, 6}, -1, 1, true);
    Tensor w1 = random_tensor(rng, {6, 6}, -0.5, 0.5, true);
    Tensor b1 = random_tensor(rng, {6}, -0.1, 0.1, true);
    Tensor g = random_tensor(rng, {6}, 0.8, 1.2, true);
    Tensor b = random_tensor(rng, {6}, -0.1, 0.1, true);
    Tensor table = random_tensor(rng, {5, 6}, -1, 1, true);
    std::vector<int> ids{1, 4, 2};
    std::vector<int> targets{0, 3, 5};

    auto build = [&](Tape* tape) {
        Tensor e = gather_rows(tape, table, ids);
        Tensor h = add(tape, gelu(tape, add_row_broadcast(tape, matmul(tape, x, w1), b1)), e);
        Tensor n = layer_norm(tape, h, g, b);
        Tensor att = softmax_lastdim(tape, matmul_nt(tape, n, n), AttentionMask::causal);
        Tensor mixed = matmul(tape, att, n);
        Tensor cat = concat_cols(tape, {mixed, n});
        Tensor lp = log_softmax_lastdim(tape, cat);
        return nll_pick(tape, lp, targets);
    };
    auto forward = [&] {
        Tape tape;
        return build(&tape).value();
    };
    Tape tape;
    Tensor loss = build(&tape);
    backward(loss, tape);

    std::vector<Tensor*> params{&x, &w1, &b1, &g, &b, &table};
    std::vector<std::vector<double>> grads;
    for (auto* p : params) grads.push_back(p->grad_vec());
    auto rep = finite_difference_check(forward, params, grads);
    EXPECT_LT(rep.max_rel_err, 1e-4) << "worst param " << rep.worst_param << " index "
                                     << rep.worst_index;
}

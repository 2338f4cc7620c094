#include "scprompt/ctc.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "scprompt/rng.hpp"
#include "test_util.hpp"

using namespace scprompt;
using scprompt::testing::finite_difference_check;
using scprompt::testing::random_log_probs;

namespace {

Tensor log_probs_from(std::vector<std::size_t> shape, std::vector<double> probs) {
    for (auto& p : probs) p = std::log(p);
    return Tensor::from_data(std::move(shape), std::move(probs));
}

// All label sequences over {1..V-1} of the given length.
void enumerate_labels(std::size_t len, std::size_t vocab, std::vector<int>& cur,
                      const std::function<void(const std::vector<int>&)>& fn) {
    if (cur.size() == len) {
        fn(cur);
        return;
    }
    for (int k = 1; k < static_cast<int>(vocab); ++k) {
        cur.push_back(k);
        enumerate_labels(len, vocab, cur, fn);
        cur.pop_back();
    }
}

}  // namespace

TEST(CollapseAlignment, RepeatAcrossBlankPreserved) {
    std::vector<int> in{1, 1, 0, 1, 2};
    EXPECT_EQ(collapse_alignment(in, 0), (std::vector<int>{1, 1, 2}));
}

TEST(CollapseAlignment, AllBlank) {
    std::vector<int> in{0, 0};
    EXPECT_TRUE(collapse_alignment(in, 0).empty());
}

TEST(CollapseAlignment, TrailingBlankAndRepeat) {
    std::vector<int> in{1, 2, 2, 0};
    EXPECT_EQ(collapse_alignment(in, 0), (std::vector<int>{1, 2}));
}

TEST(CtcLoss, SinglePathSingleFrame) {
    // vocab {blank, a}; p(a) = 0.7 in the only frame
    Tensor lp = log_probs_from({1, 2}, {0.3, 0.7});
    auto res = ctc_loss(lp, {1}, 0);
    EXPECT_NEAR(res.loss, -std::log(0.7), 1e-12);
}

TEST(CtcLoss, MatchesBruteForceOnUniform) {
    Tensor lp = log_probs_from({3, 3},
                               {1.0 / 3, 1.0 / 3, 1.0 / 3,
                                1.0 / 3, 1.0 / 3, 1.0 / 3,
                                1.0 / 3, 1.0 / 3, 1.0 / 3});
    const std::vector<int> label{1, 2};
    const double fast = ctc_loss(lp, label, 0).loss;
    const double brute = brute_force_ctc_loss(lp, label, 0);
    EXPECT_NEAR(fast, brute, 1e-12);
}

TEST(CtcLoss, RepeatedLabelNeedsSeparatingBlank) {
    Tensor lp = log_probs_from({2, 2}, {0.5, 0.5, 0.5, 0.5});
    EXPECT_THROW(ctc_loss(lp, {1, 1}, 0), InfeasibleAlignmentError);
    // Three frames make it feasible: a blank must separate the repeat.
    Tensor lp3 = log_probs_from({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    EXPECT_NO_THROW(ctc_loss(lp3, {1, 1}, 0));
}

TEST(CtcLoss, AgreesWithBruteForceOnRandomInstances) {
    Rng rng(101);
    int done = 0;
    while (done < 200) {
        const std::size_t T = 2 + rng.below(5);   // 2..6
        const std::size_t V = 2 + rng.below(4);   // 2..5
        const std::size_t L = 1 + rng.below(std::min<std::size_t>(T, 3));
        std::vector<int> label;
        for (std::size_t i = 0; i < L; ++i)
            label.push_back(1 + static_cast<int>(rng.below(V - 1)));
        if (ctc_min_frames(label) > T) continue;
        Tensor lp = random_log_probs(rng, T, V);
        const double fast = ctc_loss(lp, label, 0).loss;
        const double brute = brute_force_ctc_loss(lp, label, 0);
        ASSERT_NEAR(fast, brute, 1e-9) << "T=" << T << " V=" << V;
        ++done;
    }
}

TEST(CtcLoss, GradientMatchesFiniteDifferences) {
    Rng rng(103);
    Tensor lp = random_log_probs(rng, 6, 4);
    lp.set_requires_grad(true);
    const std::vector<int> label{1, 2, 1};
    auto res = ctc_loss(lp, label, 0);
    auto forward = [&] { return ctc_loss(lp, label, 0).loss; };
    std::vector<Tensor*> params{&lp};
    auto rep = finite_difference_check(forward, params, {res.grad_log_probs});
    EXPECT_LT(rep.max_rel_err, 1e-4);
}

TEST(CtcLoss, TapeOpRoutesGradient) {
    Rng rng(104);
    Tensor lp = random_log_probs(rng, 5, 3);
    lp.set_requires_grad(true);
    const std::vector<int> label{1, 2};
    Tape tape;
    Tensor loss = scale(&tape, ctc_loss_op(&tape, lp, label, 0), 2.0);
    backward(loss, tape);
    auto direct = ctc_loss(lp, label, 0);
    ASSERT_EQ(lp.grad_vec().size(), direct.grad_log_probs.size());
    for (std::size_t i = 0; i < direct.grad_log_probs.size(); ++i)
        EXPECT_NEAR(lp.grad_vec()[i], 2.0 * direct.grad_log_probs[i], 1e-12);
}

TEST(BruteForce, LabelLongerThanFramesIsInfeasible) {
    Tensor lp = log_probs_from({2, 3}, {0.4, 0.3, 0.3, 0.4, 0.3, 0.3});
    EXPECT_THROW(brute_force_ctc_loss(lp, {1, 2, 1}, 0), InfeasibleAlignmentError);
}

TEST(BruteForce, SingleFrameSingleLabelReducesToLogP) {
    Tensor lp = log_probs_from({1, 3}, {0.2, 0.5, 0.3});
    EXPECT_NEAR(brute_force_ctc_loss(lp, {2}, 0), -std::log(0.3), 1e-12);
}

TEST(BruteForce, RejectsOversizedInputs) {
    Tensor lp({9, 2});
    EXPECT_THROW(brute_force_ctc_loss(lp, {1}, 0), SizeError);
}

// Completeness of the event space: exp(-loss) over all labels of length <= T
// plus the all-blank case must total 1.
TEST(CtcLoss, EventSpaceSumsToOne) {
    Rng rng(107);
    const std::size_t T = 4, V = 3;
    Tensor lp = random_log_probs(rng, T, V);
    double empty = 0.0;
    for (std::size_t t = 0; t < T; ++t) empty += lp.at(t, 0);
    double total = std::exp(empty);
    for (std::size_t len = 1; len <= T; ++len) {
        std::vector<int> cur;
        enumerate_labels(len, V, cur, [&](const std::vector<int>& label) {
            if (ctc_min_frames(label) > T) return;
            total += std::exp(-ctc_loss(lp, label, 0).loss);
        });
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(GreedyDecode, CollapsesArgmaxPath) {
    // argmax path: 3 0 1 1 2 -> collapse -> 3 1 2
    Tensor lattice = Tensor::from_data(
        {5, 4}, {0.1, 0.2, 0.1, 0.6,
                 0.7, 0.1, 0.1, 0.1,
                 0.1, 0.6, 0.2, 0.1,
                 0.2, 0.5, 0.2, 0.1,
                 0.1, 0.2, 0.6, 0.1});
    auto res = ctc_greedy_decode(lattice, 0);
    EXPECT_EQ(res.alignment, (std::vector<int>{3, 0, 1, 1, 2}));
    EXPECT_EQ(res.label, (std::vector<int>{3, 1, 2}));
}

TEST(GreedyDecode, AllBlankGivesEmptyLabel) {
    Tensor lattice = Tensor::from_data({2, 2}, {0.9, 0.1, 0.8, 0.2});
    auto res = ctc_greedy_decode(lattice, 0);
    EXPECT_TRUE(res.label.empty());
}

TEST(GreedyDecode, TiesBreakTowardLowestId) {
    Tensor lattice = Tensor::from_data({1, 3}, {0.4, 0.4, 0.2});
    auto res = ctc_greedy_decode(lattice, 0);
    EXPECT_EQ(res.alignment, (std::vector<int>{0}));
}

TEST(GreedyDecode, InvariantUnderArgmaxPreservingRenormalization) {
    Rng rng(109);
    Tensor lattice({6, 4});
    for (std::size_t i = 0; i < lattice.numel(); ++i) lattice.data()[i] = rng.uniform();
    auto base = ctc_greedy_decode(lattice, 0);
    Tensor scaled(lattice.shape());
    for (std::size_t t = 0; t < 6; ++t) {
        const double f = 0.5 + rng.uniform();  // per-frame positive factor
        for (std::size_t k = 0; k < 4; ++k) scaled.at(t, k) = lattice.at(t, k) * f;
    }
    auto again = ctc_greedy_decode(scaled, 0);
    EXPECT_EQ(base.label, again.label);
}

TEST(PrefixScore, SingleTokenPrefixesPartitionUnity) {
    Rng rng(113);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t T = 2 + rng.below(4);
        const std::size_t V = 2 + rng.below(3);
        Tensor lp = random_log_probs(rng, T, V);
        CtcPrefixScorer scorer(lp, 0);
        double total = std::exp(scorer.log_empty());
        auto init = scorer.initial_state();
        for (int c = 1; c < static_cast<int>(V); ++c) {
            CtcPrefixScorer::State next;
            total += std::exp(scorer.extend(init, c, &next));
        }
        EXPECT_NEAR(total, 1.0, 1e-8);
    }
}

TEST(PrefixScore, PrefixDominatesCompletion) {
    Rng rng(127);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t T = 3 + rng.below(3);
        Tensor lp = random_log_probs(rng, T, 4);
        std::vector<int> label{1 + static_cast<int>(rng.below(3)),
                               1 + static_cast<int>(rng.below(3))};
        if (ctc_min_frames(label) > T) continue;
        const double prefix = ctc_prefix_score(lp, label, 0);
        const double complete = -ctc_loss(lp, label, 0).loss;
        EXPECT_GE(prefix, complete - 1e-12);
    }
}

// Brute-force prefix probability: enumerate every path and count those whose
// collapse starts with the prefix.
TEST(PrefixScore, MatchesExhaustiveEnumeration) {
    Rng rng(131);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t T = 2 + rng.below(5);  // 2..6
        const std::size_t V = 2 + rng.below(3);  // 2..4
        Tensor lp = random_log_probs(rng, T, V);
        const std::size_t L = 1 + rng.below(2);
        std::vector<int> prefix;
        for (std::size_t i = 0; i < L; ++i)
            prefix.push_back(1 + static_cast<int>(rng.below(V - 1)));

        double brute = kLogZero;
        std::vector<int> path(T, 0);
        while (true) {
            auto collapsed = collapse_alignment(path, 0);
            const bool is_prefix = collapsed.size() >= prefix.size() &&
                                   std::equal(prefix.begin(), prefix.end(), collapsed.begin());
            if (is_prefix) {
                double lpath = 0.0;
                for (std::size_t t = 0; t < T; ++t)
                    lpath += lp.at(t, static_cast<std::size_t>(path[t]));
                brute = log_add(brute, lpath);
            }
            std::size_t pos = 0;
            while (pos < T && path[pos] == static_cast<int>(V) - 1) path[pos++] = 0;
            if (pos == T) break;
            ++path[pos];
        }
        const double incremental = ctc_prefix_score(lp, prefix, 0);
        if (brute == kLogZero) {
            EXPECT_EQ(incremental, kLogZero);
        } else {
            EXPECT_NEAR(incremental, brute, 1e-9);
        }
    }
}

TEST(PrefixScore, CompleteMatchesCtcLoss) {
    Rng rng(137);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t T = 3 + rng.below(3);
        Tensor lp = random_log_probs(rng, T, 4);
        std::vector<int> label{1, 3};
        CtcPrefixScorer scorer(lp, 0);
        auto state = scorer.initial_state();
        for (int token : label) {
            CtcPrefixScorer::State next;
            scorer.extend(state, token, &next);
            state = std::move(next);
        }
        EXPECT_NEAR(scorer.complete(state), -ctc_loss(lp, label, 0).loss, 1e-9);
    }
}

#include "scprompt/metrics.hpp"

#include <gtest/gtest.h>

#include "scprompt/rng.hpp"
#include "scprompt/train.hpp"

using namespace scprompt;

namespace {

VocabSpec vocab() {
    VocabSpec v;
    v.tokens = {"<blank>", "<sos>", "<eos>", "<l0>", "<l1>", "a", "b", "c", "x"};
    v.blank_id = 0;
    v.sos_id = 1;
    v.eos_id = 2;
    v.lid_ids = {3, 4};
    return v;
}

}  // namespace

TEST(Cer, IdenticalSequencesHaveZeroEdits) {
    auto v = vocab();
    auto ec = compute_cer({5, 6, 7}, {5, 6, 7}, v);
    EXPECT_EQ(ec.edits, 0u);
    EXPECT_EQ(ec.ref_len, 3u);
}

TEST(Cer, SingleSubstitution) {
    auto v = vocab();
    // "abc" vs "axc": one edit over three.
    auto ec = compute_cer({5, 8, 7}, {5, 6, 7}, v);
    EXPECT_EQ(ec.edits, 1u);
    EXPECT_EQ(ec.ref_len, 3u);
    CerAccumulator acc;
    acc.add(ec);
    EXPECT_NEAR(acc.percent(), 100.0 / 3.0, 1e-9);
}

TEST(Cer, EmptyHypothesisCountsDeletions) {
    auto v = vocab();
    auto ec = compute_cer({}, {5, 6, 7}, v);
    EXPECT_EQ(ec.edits, 3u);
    EXPECT_EQ(ec.ref_len, 3u);
}

TEST(Cer, EmptyReferenceAggregatesSafely) {
    auto v = vocab();
    auto ec = compute_cer({5, 6}, {}, v);
    EXPECT_EQ(ec.edits, 2u);
    EXPECT_EQ(ec.ref_len, 0u);
    CerAccumulator acc;
    acc.add(ec);
    acc.add(compute_cer({5}, {5}, v));
    EXPECT_NEAR(acc.percent(), 200.0, 1e-9);  // 2 edits / 1 ref token
}

TEST(Cer, StripsLidAndSpecialTokensBeforeScoring) {
    auto v = vocab();
    // Hypothesis with sos/eos and a wrong LID still scores 0 on the text.
    auto ec = compute_cer({1, 4, 5, 6, 2}, {3, 5, 6}, v);
    EXPECT_EQ(ec.edits, 0u);
    EXPECT_EQ(ec.ref_len, 2u);
}

TEST(Cer, MetricProperties) {
    auto v = vocab();
    Rng rng(71);
    for (int rep = 0; rep < 200; ++rep) {
        auto draw = [&] {
            std::vector<int> s;
            const auto n = rng.below(6);
            for (std::size_t i = 0; i < n; ++i)
                s.push_back(5 + static_cast<int>(rng.below(4)));
            return s;
        };
        auto a = draw(), b = draw(), c = draw();
        const auto ab = levenshtein(a, b), ba = levenshtein(b, a);
        EXPECT_EQ(ab, ba);
        EXPECT_EQ(ab == 0, a == b);
        EXPECT_LE(levenshtein(a, c), ab + levenshtein(b, c));
    }
}

TEST(LidAccuracy, AllCorrectIsHundred) {
    auto acc = compute_lid_accuracy({3, 4, 3}, {3, 4, 3},
                                    {Tier::high, Tier::high, Tier::low});
    EXPECT_DOUBLE_EQ(acc[Tier::high], 100.0);
    EXPECT_DOUBLE_EQ(acc[Tier::low], 100.0);
}

TEST(LidAccuracy, MissingPredictionsCountAsWrong) {
    auto acc = compute_lid_accuracy({-1, 4}, {3, 4}, {Tier::high, Tier::high});
    EXPECT_DOUBLE_EQ(acc[Tier::high], 50.0);
}

TEST(MultitaskLoss, AlphaZeroIsPureAttention) {
    EXPECT_DOUBLE_EQ(multitask_loss(1.7, 2.0, 3.0, 0.0, 0.3, EncoderVariant::scctc), 1.7);
}

TEST(MultitaskLoss, AlphaOneBetaOneIsPureInterctc) {
    EXPECT_DOUBLE_EQ(multitask_loss(1.0, 2.0, 3.0, 1.0, 1.0, EncoderVariant::scctc), 3.0);
}

TEST(MultitaskLoss, ReferenceArithmetic) {
    // 0.7*1 + 0.3*(0.7*2 + 0.3*3) = 1.39
    EXPECT_NEAR(multitask_loss(1.0, 2.0, 3.0, 0.3, 0.3, EncoderVariant::scctc), 1.39, 1e-12);
}

TEST(MultitaskLoss, PlainVariantIgnoresInterTerm) {
    const double j = multitask_loss(1.0, 2.0, 999.0, 0.3, 0.3, EncoderVariant::plain);
    EXPECT_NEAR(j, 0.7 + 0.3 * 2.0, 1e-12);
    // The inter term may even be non-finite for the plain variant.
    EXPECT_NO_THROW(multitask_loss(1.0, 2.0, kLogZero, 0.3, 0.3, EncoderVariant::plain));
}

TEST(MultitaskLoss, NonFiniteComponentsRejected) {
    EXPECT_THROW(multitask_loss(std::nan(""), 2.0, 3.0, 0.3, 0.3, EncoderVariant::scctc),
                 NumericalError);
    EXPECT_THROW(multitask_loss(1.0, 2.0, kLogZero, 0.3, 0.3, EncoderVariant::scctc),
                 NumericalError);
}

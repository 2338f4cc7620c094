#include "scprompt/decoding.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "scprompt/rng.hpp"
#include "test_util.hpp"

using namespace scprompt;
using scprompt::testing::random_tensor;

namespace {

VocabSpec tiny_vocab() {
    VocabSpec v;
    v.tokens = {"<blank>", "<sos>", "<eos>", "<l0>", "a", "b"};
    v.blank_id = 0;
    v.sos_id = 1;
    v.eos_id = 2;
    v.lid_ids = {3};
    return v;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.encoder.num_layers = 2;
    c.encoder.model_dim = 8;
    c.encoder.num_heads = 2;
    c.encoder.ff_dim = 16;
    c.encoder.intermediate_layer_index = 1;
    c.decoder_layers = 1;
    c.feature_dim = 4;
    c.variant = EncoderVariant::scctc;
    return c;
}

Tensor features_for(std::uint64_t seed, std::size_t t = 5) {
    Rng rng(seed);
    return random_tensor(rng, {t, 4}, -1.0, 1.0);
}

// Reference greedy attention decoding: argmax next token until eos/max_len.
std::vector<int> greedy_attention(const EncodeResult& enc, const ModelWeights& w, int max_len) {
    std::vector<int> tokens{w.vocab.sos_id};
    for (int step = 0; step < max_len; ++step) {
        auto logp = decoder_step(tokens, enc.final_hidden, w);
        int best = -1;
        double best_v = -1e300;
        for (int c = 0; c < w.vocab.size(); ++c) {
            if (c == w.vocab.blank_id || c == w.vocab.sos_id) continue;
            if (logp[static_cast<std::size_t>(c)] > best_v) {
                best_v = logp[static_cast<std::size_t>(c)];
                best = c;
            }
        }
        tokens.push_back(best);
        if (best == w.vocab.eos_id) break;
    }
    return tokens;
}

// Exhaustive joint-score search over all terminated sequences.
std::vector<int> exhaustive_best(const EncodeResult& enc, const ModelWeights& w, double lambda,
                                 int max_len) {
    CtcPrefixScorer scorer(enc.final_ctc_log_probs, w.vocab.blank_id);
    std::vector<int> ext;
    for (int c = 0; c < w.vocab.size(); ++c)
        if (c != w.vocab.blank_id && c != w.vocab.sos_id && c != w.vocab.eos_id)
            ext.push_back(c);

    std::vector<int> best_tokens;
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<int> seq;
    auto score_terminated = [&](const std::vector<int>& s) {
        std::vector<int> tokens{w.vocab.sos_id};
        double attn = 0.0;
        auto state = scorer.initial_state();
        double ctc = 0.0;
        for (int c : s) {
            auto logp = decoder_step(tokens, enc.final_hidden, w);
            attn += logp[static_cast<std::size_t>(c)];
            CtcPrefixScorer::State next;
            ctc = scorer.extend(state, c, &next);
            state = std::move(next);
            tokens.push_back(c);
        }
        auto logp = decoder_step(tokens, enc.final_hidden, w);
        attn += logp[static_cast<std::size_t>(w.vocab.eos_id)];
        ctc = scorer.complete(state);
        tokens.push_back(w.vocab.eos_id);
        const double combined = (1.0 - lambda) * attn + lambda * ctc;
        if (combined > best_score || (combined == best_score && tokens < best_tokens)) {
            best_score = combined;
            best_tokens = tokens;
        }
    };
    std::function<void(int)> rec = [&](int remaining) {
        score_terminated(seq);
        if (remaining == 0) return;
        for (int c : ext) {
            seq.push_back(c);
            rec(remaining - 1);
            seq.pop_back();
        }
    };
    rec(max_len - 1);  // eos consumes the final step
    return best_tokens;
}

}  // namespace

TEST(BeamSearch, BeamOneLambdaZeroEqualsGreedyAttention) {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto w = ModelWeights::init(tiny_config(), tiny_vocab(), seed);
        auto feats = features_for(seed);
        DecodeConfig cfg;
        cfg.beam_size = 1;
        cfg.ctc_weight = 0.0;
        auto res = joint_beam_search(feats, w, cfg);
        auto enc = encode(nullptr, feats, w);
        auto greedy = greedy_attention(enc, w, static_cast<int>(feats.dim(0)));
        EXPECT_EQ(res.best.tokens, greedy) << "seed " << seed;
    }
}

TEST(BeamSearch, DecoderPromptForcesFirstToken) {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        auto w = ModelWeights::init(tiny_config(), tiny_vocab(), seed);
        DecodeConfig cfg;
        cfg.decoder_prompt = 3;
        auto res = joint_beam_search(features_for(seed), w, cfg);
        ASSERT_GE(res.best.tokens.size(), 2u);
        EXPECT_EQ(res.best.tokens[1], 3);
        EXPECT_EQ(res.lid_predicted, 3);
    }
}

TEST(BeamSearch, AgreesWithExhaustiveSearch) {
    int agree = 0;
    const int cases = 100;
    for (int i = 0; i < cases; ++i) {
        auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 100 + static_cast<unsigned>(i));
        auto feats = features_for(200 + static_cast<unsigned>(i), 5);
        DecodeConfig cfg;
        cfg.beam_size = 8;
        cfg.ctc_weight = 0.3;
        cfg.max_len = 4;
        auto res = joint_beam_search(feats, w, cfg);
        auto enc = encode(nullptr, feats, w);
        auto oracle = exhaustive_best(enc, w, 0.3, 4);
        if (res.best.tokens == oracle) ++agree;
    }
    EXPECT_GE(agree, 95) << agree << "/" << cases;
}

TEST(BeamSearch, CombinedScoreNonIncreasingAlongExtensions) {
    auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 31);
    auto feats = features_for(31, 6);
    auto enc = encode(nullptr, feats, w);
    CtcPrefixScorer scorer(enc.final_ctc_log_probs, w.vocab.blank_id);
    const double lambda = 0.3;
    Rng rng(32);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<int> tokens{w.vocab.sos_id};
        auto state = scorer.initial_state();
        double attn = 0.0, ctc = 0.0, prev = 0.0;
        for (int step = 0; step < 4; ++step) {
            const int c = 3 + static_cast<int>(rng.below(3));
            auto logp = decoder_step(tokens, enc.final_hidden, w);
            attn += logp[static_cast<std::size_t>(c)];
            CtcPrefixScorer::State next;
            ctc = scorer.extend(state, c, &next);
            state = std::move(next);
            tokens.push_back(c);
            const double combined = (1.0 - lambda) * attn + lambda * ctc;
            EXPECT_LE(combined, prev + 1e-12);
            prev = combined;
        }
    }
}

TEST(BeamSearch, LambdaZeroIgnoresCtcHead) {
    auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 41);
    auto feats = features_for(41);
    DecodeConfig cfg;
    cfg.ctc_weight = 0.0;
    auto before = joint_beam_search(feats, w, cfg);
    // Perturb the CTC head; a pure-attention decode must not move.
    for (std::size_t i = 0; i < w.w_ctc.numel(); ++i) w.w_ctc.data()[i] += 0.5;
    auto after = joint_beam_search(feats, w, cfg);
    EXPECT_EQ(before.best.tokens, after.best.tokens);
    EXPECT_EQ(before.best.combined, after.best.combined);
}

TEST(BeamSearch, LambdaOneIgnoresDecoderWeights) {
    auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 43);
    auto feats = features_for(43);
    DecodeConfig cfg;
    cfg.ctc_weight = 1.0;
    auto before = joint_beam_search(feats, w, cfg);
    for (std::size_t i = 0; i < w.dec_embedding.numel(); ++i) w.dec_embedding.data()[i] += 0.5;
    for (std::size_t i = 0; i < w.w_out.numel(); ++i) w.w_out.data()[i] -= 0.25;
    auto after = joint_beam_search(feats, w, cfg);
    EXPECT_EQ(before.best.tokens, after.best.tokens);
    EXPECT_EQ(before.best.combined, after.best.combined);
}

TEST(BeamSearch, DeterministicAcrossRuns) {
    auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 47);
    auto feats = features_for(47);
    DecodeConfig cfg;
    auto a = joint_beam_search(feats, w, cfg);
    auto b = joint_beam_search(feats, w, cfg);
    EXPECT_EQ(a.best.tokens, b.best.tokens);
    EXPECT_EQ(a.best.combined, b.best.combined);
    EXPECT_EQ(a.lid_predicted, b.lid_predicted);
}

TEST(BeamSearch, HypothesisCombinesScoresByLambda) {
    auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 53);
    DecodeConfig cfg;
    cfg.ctc_weight = 0.3;
    auto res = joint_beam_search(features_for(53), w, cfg);
    EXPECT_NEAR(res.best.combined,
                0.7 * res.best.attn_log_score + 0.3 * res.best.ctc_log_score, 1e-12);
}

TEST(BeamSearch, EmptyBeamRaisesDecodeError) {
    auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 59);
    EncodeResult enc;
    enc.final_hidden = Tensor({4, 8});
    enc.final_ctc_log_probs = Tensor({4, 6}, kLogZero);  // impossible everywhere
    DecodeConfig cfg;
    cfg.ctc_weight = 1.0;
    EXPECT_THROW(beam_search_encoded(enc, w, cfg), DecodeError);
}

TEST(BeamSearch, RejectsInvalidConfigs) {
    auto w = ModelWeights::init(tiny_config(), tiny_vocab(), 61);
    DecodeConfig cfg;
    cfg.ctc_weight = 1.5;
    EXPECT_THROW(joint_beam_search(features_for(61), w, cfg), ConfigError);
    cfg = {};
    cfg.decoder_prompt = 4;  // not an LID
    EXPECT_THROW(joint_beam_search(features_for(61), w, cfg), ConfigError);
}

TEST(LidFromCtc, FindsFirstEmittedLid) {
    VocabSpec v = tiny_vocab();
    // Greedy path over 3 frames: <l0>, blank, a  -> first LID is <l0>.
    Tensor lp({3, 6}, std::log(0.01));
    lp.at(0, 3) = std::log(0.9);
    lp.at(1, 0) = std::log(0.9);
    lp.at(2, 4) = std::log(0.9);
    EXPECT_EQ(lid_from_ctc(lp, v), 3);
}

TEST(LidFromCtc, NoLidGivesNone) {
    VocabSpec v = tiny_vocab();
    Tensor lp({2, 6}, std::log(0.01));
    lp.at(0, 4) = std::log(0.9);
    lp.at(1, 5) = std::log(0.9);
    EXPECT_EQ(lid_from_ctc(lp, v), -1);
}

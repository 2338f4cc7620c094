#pragma once

// Joint CTC-attention beam search. Hypotheses carry both an attention score
// and an incremental CTC prefix score; the combination weight selects pure
// attention (0), pure CTC (1), or anything between. Decoder prompting forces
// the first generated token; encoder prompting threads through encode().

#include <algorithm>
#include <optional>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/ctc.hpp"
#include "scprompt/model.hpp"
#include "scprompt/prompting.hpp"

namespace scprompt {

struct DecodeConfig {
    int beam_size = 8;
    double ctc_weight = 0.3;  // 0 = attention only, 1 = CTC only
    int max_len = 0;          // 0 means "number of frames"
    std::optional<int> decoder_prompt;  // forced first token (a language ID)
    PromptSpec encoder_prompt;

    void validate(const VocabSpec& vocab) const {
        if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
        if (ctc_weight < 0.0 || ctc_weight > 1.0)
            throw ConfigError("ctc_weight must lie in [0,1]");
        if (max_len < 0) throw ConfigError("max_len must be nonnegative");
        if (decoder_prompt && !vocab.is_lid(*decoder_prompt))
            throw ConfigError("decoder prompt must be a language ID");
        encoder_prompt.validate(vocab);
    }
};

struct Hypothesis {
    std::vector<int> tokens;  // starts with sos; eos terminates when finished
    double attn_log_score = 0.0;
    double ctc_log_score = 0.0;
    double combined = 0.0;
    bool finished = false;
    bool truncated = false;  // hit max_len without eos
    CtcPrefixScorer::State ctc_state;
};

struct DecodeResult {
    Hypothesis best;
    int lid_predicted = -1;  // first post-sos token, -1 when absent
    EncodeResult encoded;
};

// Greedy-decode the final CTC posteriors and return the first emitted
// language-ID token, if any.
inline int lid_from_ctc(const Tensor& final_ctc_log_probs, const VocabSpec& vocab) {
    auto greedy = ctc_greedy_decode(final_ctc_log_probs, vocab.blank_id);
    for (int id : greedy.label)
        if (vocab.is_lid(id)) return id;
    return -1;
}

namespace detail {

inline bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
    if (a.combined != b.combined) return a.combined > b.combined;
    return a.tokens < b.tokens;  // deterministic tie-break
}

}  // namespace detail

// Beam search over an already-encoded utterance. Exposed separately so
// evaluation loops can reuse one encoder pass across decode configurations.
inline DecodeResult beam_search_encoded(const EncodeResult& enc, const ModelWeights& weights,
                                        const DecodeConfig& cfg) {
    cfg.validate(weights.vocab);
    const auto& vocab = weights.vocab;
    const double lambda = cfg.ctc_weight;
    const bool use_attn = lambda < 1.0;
    const bool use_ctc = lambda > 0.0;
    const std::size_t T = enc.final_ctc_log_probs.dim(0);
    const int max_len = cfg.max_len > 0 ? cfg.max_len : static_cast<int>(T);
    const int V = vocab.size();

    CtcPrefixScorer scorer(enc.final_ctc_log_probs, vocab.blank_id);

    std::vector<int> extension_tokens;
    for (int c = 0; c < V; ++c)
        if (c != vocab.blank_id && c != vocab.sos_id && c != vocab.eos_id)
            extension_tokens.push_back(c);

    Hypothesis root;
    root.tokens = {vocab.sos_id};
    if (use_ctc) root.ctc_state = scorer.initial_state();
    std::vector<Hypothesis> live{root};
    std::vector<Hypothesis> finished;

    auto combine = [&](double attn, double ctc) {
        return (1.0 - lambda) * attn + lambda * ctc;
    };

    for (int step = 0; step < max_len && !live.empty(); ++step) {
        // eos competes with ordinary extensions for beam slots, so a beam of
        // one reproduces greedy decoding exactly.
        std::vector<Hypothesis> candidates;
        for (const auto& hyp : live) {
            std::vector<double> logp;
            if (use_attn) logp = decoder_step(hyp.tokens, enc.final_hidden, weights);

            auto push_candidate = [&](int c) {
                Hypothesis ext = hyp;
                ext.tokens.push_back(c);
                if (use_attn) ext.attn_log_score += logp[static_cast<std::size_t>(c)];
                if (c == vocab.eos_id) {
                    // Closing switches CTC from prefix to exact-sequence score.
                    if (use_ctc) ext.ctc_log_score = scorer.complete(hyp.ctc_state);
                    ext.finished = true;
                } else if (use_ctc) {
                    CtcPrefixScorer::State next;
                    ext.ctc_log_score = scorer.extend(hyp.ctc_state, c, &next);
                    ext.ctc_state = std::move(next);
                }
                ext.combined = combine(ext.attn_log_score, ext.ctc_log_score);
                if (std::isfinite(ext.combined)) candidates.push_back(std::move(ext));
            };

            if (step == 0 && cfg.decoder_prompt) {
                // Forced first token; its attention log-prob still accumulates.
                push_candidate(*cfg.decoder_prompt);
                continue;
            }
            push_candidate(vocab.eos_id);
            for (int c : extension_tokens) push_candidate(c);
        }

        std::sort(candidates.begin(), candidates.end(), detail::hyp_better);
        if (candidates.size() > static_cast<std::size_t>(cfg.beam_size))
            candidates.resize(static_cast<std::size_t>(cfg.beam_size));
        live.clear();
        for (auto& cand : candidates) {
            if (cand.finished) finished.push_back(std::move(cand));
            else live.push_back(std::move(cand));
        }

        std::sort(finished.begin(), finished.end(), detail::hyp_better);
        if (finished.size() > static_cast<std::size_t>(cfg.beam_size))
            finished.resize(static_cast<std::size_t>(cfg.beam_size));

        // Scores only decrease along extensions, so once the best finished
        // hypothesis dominates every live one nothing better can appear.
        if (!finished.empty() && !live.empty() &&
            finished.front().combined >= live.front().combined)
            break;
    }

    DecodeResult result;
    if (!finished.empty()) {
        result.best = finished.front();
    } else if (!live.empty()) {
        std::sort(live.begin(), live.end(), detail::hyp_better);
        result.best = live.front();
        result.best.truncated = true;
    } else {
        throw DecodeError("beam emptied: every hypothesis scored -inf");
    }
    if (result.best.tokens.size() >= 2 && result.best.tokens[1] != vocab.eos_id)
        result.lid_predicted = result.best.tokens[1];
    return result;
}

inline DecodeResult joint_beam_search(const Tensor& features, const ModelWeights& weights,
                                      const DecodeConfig& cfg) {
    cfg.validate(weights.vocab);
    const PromptSpec* prompt =
        cfg.encoder_prompt.mode != PromptMode::none ? &cfg.encoder_prompt : nullptr;
    EncodeResult enc = encode_model(nullptr, features, weights, prompt);
    DecodeResult res = beam_search_encoded(enc, weights, cfg);
    res.encoded = std::move(enc);
    return res;
}

}  // namespace scprompt

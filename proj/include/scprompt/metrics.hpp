#pragma once

// Evaluation metrics: token-level edit distance for CER and per-tier
// language-ID accuracy. LID tokens are stripped before CER so that decoder
// prompting cannot trivially fix one token of every hypothesis.

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/corpus.hpp"
#include "scprompt/vocab.hpp"

namespace scprompt {

inline std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// Drops LID tokens and the specials; what remains is the text being scored.
inline std::vector<int> strip_for_cer(const std::vector<int>& tokens, const VocabSpec& vocab) {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (int id : tokens) {
        if (id == vocab.blank_id || id == vocab.sos_id || id == vocab.eos_id) continue;
        if (vocab.is_lid(id)) continue;
        out.push_back(id);
    }
    return out;
}

struct EditCount {
    std::size_t edits = 0;
    std::size_t ref_len = 0;
};

inline EditCount compute_cer(const std::vector<int>& hyp, const std::vector<int>& ref,
                             const VocabSpec& vocab) {
    const auto h = strip_for_cer(hyp, vocab);
    const auto r = strip_for_cer(ref, vocab);
    if (r.empty()) return {h.size(), 0};  // aggregates safely
    return {levenshtein(h, r), r.size()};
}

// Pooled CER: sum of edits over sum of reference lengths, as a percentage.
struct CerAccumulator {
    std::uint64_t edits = 0;
    std::uint64_t ref_len = 0;

    void add(const EditCount& c) {
        edits += c.edits;
        ref_len += c.ref_len;
    }
    void merge(const CerAccumulator& o) {
        edits += o.edits;
        ref_len += o.ref_len;
    }
    double percent() const {
        if (ref_len == 0) return edits == 0 ? 0.0 : 100.0;
        return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_len);
    }
};

struct LidTally {
    std::uint64_t correct = 0;
    std::uint64_t total = 0;

    // A missing prediction (id < 0) counts as wrong.
    void add(int predicted, int reference) {
        ++total;
        if (predicted >= 0 && predicted == reference) ++correct;
    }
    void merge(const LidTally& o) {
        correct += o.correct;
        total += o.total;
    }
    double percent() const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) /
                                      static_cast<double>(total);
    }
};

// Exact-match LID accuracy per tier; `none` predictions count as wrong.
inline std::map<Tier, double> compute_lid_accuracy(
    const std::vector<int>& predictions, const std::vector<int>& references,
    const std::vector<Tier>& tiers) {
    if (predictions.size() != references.size() || predictions.size() != tiers.size())
        throw ContractError("lid accuracy inputs must be parallel");
    std::map<Tier, LidTally> tally;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        tally[tiers[i]].add(predictions[i], references[i]);
    std::map<Tier, double> out;
    for (const auto& [tier, t] : tally) out[tier] = t.percent();
    return out;
}

}  // namespace scprompt

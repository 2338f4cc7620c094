#pragma once

// Inference-time surgery on intermediate posterior lattices. Four operators
// redistribute language-ID probability mass toward a known target language;
// none of them touches non-LID entries except Replacement, which overwrites
// whole frames that argmax to a language ID.

#include <algorithm>
#include <string>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/lattice.hpp"
#include "scprompt/vocab.hpp"

namespace scprompt {

enum class PromptMode { none, replacement, aggregation, prefix, soft };

inline const char* prompt_mode_name(PromptMode m) {
    switch (m) {
        case PromptMode::none: return "none";
        case PromptMode::replacement: return "replacement";
        case PromptMode::aggregation: return "aggregation";
        case PromptMode::prefix: return "prefix";
        case PromptMode::soft: return "soft";
    }
    return "?";
}

inline PromptMode prompt_mode_from_name(const std::string& name) {
    for (PromptMode m : {PromptMode::none, PromptMode::replacement, PromptMode::aggregation,
                         PromptMode::prefix, PromptMode::soft})
        if (name == prompt_mode_name(m)) return m;
    throw ConfigError("unknown prompt mode '" + name + "'");
}

struct PromptSpec {
    PromptMode mode = PromptMode::none;
    int target = -1;              // replacement / aggregation / prefix
    std::vector<int> targets;     // soft (candidate set, sorted)

    void validate(const VocabSpec& vocab) const {
        switch (mode) {
            case PromptMode::none:
                return;
            case PromptMode::replacement:
            case PromptMode::aggregation:
            case PromptMode::prefix:
                if (!vocab.is_lid(target))
                    throw PromptError("target token is not a language ID");
                return;
            case PromptMode::soft:
                if (targets.empty()) throw PromptError("soft prompting needs candidates");
                for (int id : targets)
                    if (!vocab.is_lid(id))
                        throw PromptError("soft candidate is not a language ID");
                return;
        }
    }
};

namespace detail {

inline void check_target(int k_target, const std::vector<int>& lid_ids) {
    if (!std::binary_search(lid_ids.begin(), lid_ids.end(), k_target))
        throw PromptError("target " + std::to_string(k_target) + " not in LID set");
}

}  // namespace detail

// Frames whose argmax is a language ID are overwritten with a one-hot row at
// the target; everything else passes through. Argmax ties break toward the
// lowest token id before the membership test.
inline PosteriorLattice apply_replacement(const PosteriorLattice& lattice, int k_target,
                                          const std::vector<int>& lid_ids) {
    detail::check_target(k_target, lid_ids);
    PosteriorLattice out = lattice;
    for (std::size_t t = 0; t < out.num_frames; ++t) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < out.vocab_size; ++k)
            if (out.at(t, k) > out.at(t, best)) best = k;
        if (std::binary_search(lid_ids.begin(), lid_ids.end(), static_cast<int>(best))) {
            double* row = out.row(t);
            std::fill(row, row + out.vocab_size, 0.0);
            row[static_cast<std::size_t>(k_target)] = 1.0;
        }
    }
    return out;
}

// All language-ID mass in every frame moves onto the target; non-LID entries
// are untouched. The LID sum is taken once per row in token-id order so the
// result is identical across platforms.
inline PosteriorLattice apply_aggregation(const PosteriorLattice& lattice, int k_target,
                                          const std::vector<int>& lid_ids) {
    detail::check_target(k_target, lid_ids);
    PosteriorLattice out = lattice;
    for (std::size_t t = 0; t < out.num_frames; ++t) {
        double lid_sum = 0.0;
        for (int id : lid_ids) lid_sum += out.at(t, static_cast<std::size_t>(id));
        for (int id : lid_ids) out.at(t, static_cast<std::size_t>(id)) = 0.0;
        out.at(t, static_cast<std::size_t>(k_target)) = lid_sum;
    }
    return out;
}

// Overwrites the minimum number of frames able to carry the prompt: a
// language ID needs one frame, so only row 0 becomes one-hot.
inline PosteriorLattice apply_prefix(const PosteriorLattice& lattice, int k_target) {
    if (lattice.num_frames == 0) throw DimensionError("prefix prompt needs at least one frame");
    PosteriorLattice out = lattice;
    double* row = out.row(0);
    std::fill(row, row + out.vocab_size, 0.0);
    row[static_cast<std::size_t>(k_target)] = 1.0;
    return out;
}

// Restricts LID mass to a candidate set, rescaling candidates so the total
// LID mass per frame is preserved. When the candidate mass is zero but LID
// mass exists, that mass spreads uniformly over the candidates.
inline PosteriorLattice apply_soft(const PosteriorLattice& lattice,
                                   const std::vector<int>& targets,
                                   const std::vector<int>& lid_ids) {
    if (targets.empty()) throw PromptError("soft prompting needs a nonempty candidate set");
    std::vector<int> k_targets = targets;
    std::sort(k_targets.begin(), k_targets.end());
    k_targets.erase(std::unique(k_targets.begin(), k_targets.end()), k_targets.end());
    for (int id : k_targets) detail::check_target(id, lid_ids);
    PosteriorLattice out = lattice;
    for (std::size_t t = 0; t < out.num_frames; ++t) {
        double lid_sum = 0.0;
        for (int id : lid_ids) lid_sum += out.at(t, static_cast<std::size_t>(id));
        double target_sum = 0.0;
        for (int id : k_targets) target_sum += out.at(t, static_cast<std::size_t>(id));
        if (target_sum > 0.0) {
            const double ratio = lid_sum / target_sum;
            for (int id : lid_ids) {
                const bool in_targets = std::binary_search(k_targets.begin(), k_targets.end(), id);
                auto& p = out.at(t, static_cast<std::size_t>(id));
                p = in_targets ? p * ratio : 0.0;
            }
        } else {
            const double share = lid_sum / static_cast<double>(k_targets.size());
            for (int id : lid_ids) out.at(t, static_cast<std::size_t>(id)) = 0.0;
            for (int id : k_targets) out.at(t, static_cast<std::size_t>(id)) = share;
        }
    }
    return out;
}

inline PosteriorLattice apply_prompt(const PosteriorLattice& lattice, const PromptSpec& spec,
                                     const VocabSpec& vocab) {
    spec.validate(vocab);
    switch (spec.mode) {
        case PromptMode::none: return lattice;
        case PromptMode::replacement: return apply_replacement(lattice, spec.target, vocab.lid_ids);
        case PromptMode::aggregation: return apply_aggregation(lattice, spec.target, vocab.lid_ids);
        case PromptMode::prefix: return apply_prefix(lattice, spec.target);
        case PromptMode::soft: return apply_soft(lattice, spec.targets, vocab.lid_ids);
    }
    throw ConfigError("unreachable prompt mode");
}

}  // namespace scprompt

#pragma once

// Experiment grid: evaluates decode configurations (encoder variant × joint
// decoding × decoder prompting × encoder prompting) over a corpus test split
// and renders per-tier CER, per-tier LID accuracy, and per-language CER as an
// aligned table plus machine-readable key-value text. Output is byte-stable
// given identical inputs.

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/corpus.hpp"
#include "scprompt/decoding.hpp"
#include "scprompt/metrics.hpp"
#include "scprompt/model.hpp"

namespace scprompt {

struct GridRow {
    std::string id;
    EncoderVariant variant = EncoderVariant::plain;
    bool joint = false;              // CTC weight > 0 during decoding
    bool decoder_prompting = false;  // force the true LID as first token
    PromptMode encoder_mode = PromptMode::none;  // target = true LID
    bool soft_pair_targets = false;  // soft mode over the configured set
};

struct GridConfig {
    std::vector<GridRow> rows;
    double ctc_weight = 0.3;
    int beam_size = 8;
    std::vector<std::string> soft_target_tokens;  // lid tokens for soft rows
    int max_test_utterances = 0;                  // 0 = whole split
    std::string split = "test";
};

// The Table-1-shaped default: baselines (a)-(d), decoder prompting (e)-(h),
// encoder prompting (i)-(k), soft prompting without decoder prompting (l).
inline std::vector<GridRow> default_grid_rows() {
    using V = EncoderVariant;
    return {
        {"a", V::plain, false, false, PromptMode::none, false},
        {"b", V::plain, true, false, PromptMode::none, false},
        {"c", V::interctc, true, false, PromptMode::none, false},
        {"d", V::scctc, true, false, PromptMode::none, false},
        {"e", V::plain, false, true, PromptMode::none, false},
        {"f", V::plain, true, true, PromptMode::none, false},
        {"g", V::interctc, true, true, PromptMode::none, false},
        {"h", V::scctc, true, true, PromptMode::none, false},
        {"i", V::scctc, true, true, PromptMode::replacement, false},
        {"j", V::scctc, true, true, PromptMode::aggregation, false},
        {"k", V::scctc, true, true, PromptMode::prefix, false},
        {"l", V::scctc, true, false, PromptMode::soft, true},
    };
}

struct CellResult {
    bool present = false;
    std::map<Tier, CerAccumulator> cer_tier;
    std::map<Tier, LidTally> lid_tier;
    std::map<std::string, CerAccumulator> cer_language;
    std::map<std::string, LidTally> lid_language;
    CerAccumulator cer_all;

    double cer(Tier t) const {
        auto it = cer_tier.find(t);
        return it == cer_tier.end() ? 0.0 : it->second.percent();
    }
    double lid(Tier t) const {
        auto it = lid_tier.find(t);
        return it == lid_tier.end() ? 0.0 : it->second.percent();
    }
    double cer_of_language(const std::string& name) const {
        auto it = cer_language.find(name);
        return it == cer_language.end() ? 0.0 : it->second.percent();
    }
    double lid_of_language(const std::string& name) const {
        auto it = lid_language.find(name);
        return it == lid_language.end() ? 0.0 : it->second.percent();
    }
};

struct ExperimentReport {
    std::vector<GridRow> rows;
    std::vector<CellResult> cells;         // parallel to rows
    std::vector<std::string> language_names;

    const CellResult* cell(const std::string& id) const {
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].id == id && cells[i].present) return &cells[i];
        return nullptr;
    }

    std::string render_table() const;
    std::string render_kv() const;

    // Seed-averaging: pools raw edit/LID counts cell by cell.
    static ExperimentReport average(const std::vector<ExperimentReport>& reports) {
        if (reports.empty()) throw ContractError("no reports to average");
        ExperimentReport out = reports.front();
        for (std::size_t r = 1; r < reports.size(); ++r) {
            const auto& rep = reports[r];
            if (rep.rows.size() != out.rows.size())
                throw ContractError("report shapes differ across seeds");
            for (std::size_t i = 0; i < out.cells.size(); ++i) {
                if (!rep.cells[i].present) {
                    out.cells[i].present = false;
                    continue;
                }
                for (const auto& [t, acc] : rep.cells[i].cer_tier)
                    out.cells[i].cer_tier[t].merge(acc);
                for (const auto& [t, acc] : rep.cells[i].lid_tier)
                    out.cells[i].lid_tier[t].merge(acc);
                for (const auto& [l, acc] : rep.cells[i].cer_language)
                    out.cells[i].cer_language[l].merge(acc);
                for (const auto& [l, acc] : rep.cells[i].lid_language)
                    out.cells[i].lid_language[l].merge(acc);
                out.cells[i].cer_all.merge(rep.cells[i].cer_all);
            }
        }
        return out;
    }
};

namespace detail {

inline std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

inline std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

inline std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace detail

inline std::string ExperimentReport::render_table() const {
    std::ostringstream os;
    os << "row variant   joint dp ep            |   high  middle     low   exlow |    avg\n";
    os << "------------------------------------+---------------------------------+-------\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const auto& cell = cells[i];
        char line[128];
        std::snprintf(line, sizeof(line), "(%s) %-9s %-5s %-2s %-13s |", row.id.c_str(),
                      encoder_variant_name(row.variant), row.joint ? "yes" : "no",
                      row.decoder_prompting ? "dp" : "-", prompt_mode_name(row.encoder_mode));
        os << line;
        if (!cell.present) {
            os << "                          absent |      -\n";
            continue;
        }
        for (Tier t : kAllTiers) os << detail::pad(detail::fmt1(cell.cer(t)), 8);
        os << " |" << detail::pad(detail::fmt1(cell.cer_all.percent()), 7) << "\n";
    }
    os << "\nlanguage-ID accuracy (%)\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!cells[i].present) continue;
        os << "(" << rows[i].id << ")";
        for (Tier t : kAllTiers) os << detail::pad(detail::fmt1(cells[i].lid(t)), 8);
        os << "\n";
    }
    os << "\nper-language CER (%) | LID accuracy (%)\n";
    os << "row ";
    for (const auto& name : language_names) os << detail::pad(name, 8);
    os << " |";
    for (const auto& name : language_names) os << detail::pad(name, 8);
    os << "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!cells[i].present) continue;
        os << "(" << rows[i].id << ")";
        for (const auto& name : language_names)
            os << detail::pad(detail::fmt1(cells[i].cer_of_language(name)), 8);
        os << " |";
        for (const auto& name : language_names)
            os << detail::pad(detail::fmt1(cells[i].lid_of_language(name)), 8);
        os << "\n";
    }
    return os.str();
}

inline std::string ExperimentReport::render_kv() const {
    std::ostringstream os;
    os << "scprompt-report v1\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        os << "cell " << row.id << " variant " << encoder_variant_name(row.variant) << " joint "
           << (row.joint ? 1 : 0) << " dp " << (row.decoder_prompting ? 1 : 0) << " ep "
           << prompt_mode_name(row.encoder_mode);
        if (!cells[i].present) {
            os << " absent 1\n";
            continue;
        }
        const auto& cell = cells[i];
        for (Tier t : kAllTiers)
            os << " cer_" << tier_name(t) << " " << detail::fmt4(cell.cer(t));
        os << " cer_avg " << detail::fmt4(cell.cer_all.percent());
        for (Tier t : kAllTiers)
            os << " lid_" << tier_name(t) << " " << detail::fmt4(cell.lid(t));
        for (const auto& name : language_names)
            os << " cer_lang_" << name << " " << detail::fmt4(cell.cer_of_language(name));
        for (const auto& name : language_names)
            os << " lid_lang_" << name << " " << detail::fmt4(cell.lid_of_language(name));
        os << "\n";
    }
    return os.str();
}

// Runs every configured cell against the checkpoints supplied per variant.
// Missing checkpoints mark their cells absent; the run continues. Encoder
// passes are shared across rows with the same (variant, prompt) signature.
inline ExperimentReport run_experiment_grid(
    const Corpus& corpus, const std::map<EncoderVariant, const ModelWeights*>& checkpoints,
    const GridConfig& grid) {
    ExperimentReport report;
    report.rows = grid.rows;
    report.cells.assign(grid.rows.size(), {});
    for (const auto& lang : corpus.manifest.languages)
        report.language_names.push_back(lang.name);

    std::vector<int> soft_targets;
    for (const auto& tok : grid.soft_target_tokens)
        soft_targets.push_back(corpus.vocab.id_of(tok));

    for (const auto& row : grid.rows) {
        if (row.encoder_mode != PromptMode::none && row.variant != EncoderVariant::scctc)
            throw ConfigError("encoder prompting requires encoder_variant=scctc (row " +
                              row.id + ")");
        if (row.soft_pair_targets && soft_targets.empty())
            throw ConfigError("soft row " + row.id + " needs soft_target_tokens");
    }

    const auto& utts = corpus.split(grid.split);
    const std::size_t limit = grid.max_test_utterances > 0
                                  ? std::min<std::size_t>(utts.size(),
                                                          static_cast<std::size_t>(
                                                              grid.max_test_utterances))
                                  : utts.size();

    for (std::size_t ui = 0; ui < limit; ++ui) {
        const auto& utt = utts[ui];
        const int true_lid = corpus.lid_id_of_language(utt.language);
        const auto features = corpus.features_of(utt);
        const auto label = corpus.label_of(utt);
        const std::string& lang_name =
            corpus.manifest.languages[static_cast<std::size_t>(utt.language)].name;

        // One encoder pass per (variant, prompt signature).
        std::map<std::string, EncodeResult> encodes;
        for (std::size_t ri = 0; ri < grid.rows.size(); ++ri) {
            const auto& row = grid.rows[ri];
            auto ck = checkpoints.find(row.variant);
            if (ck == checkpoints.end() || ck->second == nullptr) continue;
            const ModelWeights& weights = *ck->second;
            report.cells[ri].present = true;

            PromptSpec prompt;
            prompt.mode = row.encoder_mode;
            if (row.encoder_mode == PromptMode::soft) {
                prompt.targets = soft_targets;
            } else if (row.encoder_mode != PromptMode::none) {
                prompt.target = true_lid;
            }
            std::string key = std::string(encoder_variant_name(row.variant)) + "/" +
                              prompt_mode_name(prompt.mode);
            if (prompt.mode == PromptMode::soft)
                for (int t : prompt.targets) key += "," + std::to_string(t);
            else if (prompt.mode != PromptMode::none)
                key += "," + std::to_string(prompt.target);
            auto it = encodes.find(key);
            if (it == encodes.end()) {
                const PromptSpec* p = prompt.mode != PromptMode::none ? &prompt : nullptr;
                it = encodes.emplace(key, encode_model(nullptr, features, weights, p)).first;
            }

            DecodeConfig dc;
            dc.beam_size = grid.beam_size;
            dc.ctc_weight = row.joint ? grid.ctc_weight : 0.0;
            if (row.decoder_prompting) dc.decoder_prompt = true_lid;
            DecodeResult res = beam_search_encoded(it->second, weights, dc);

            auto& cell = report.cells[ri];
            const EditCount ec = compute_cer(res.best.tokens, label, corpus.vocab);
            cell.cer_tier[utt.tier].add(ec);
            cell.cer_language[lang_name].add(ec);
            cell.cer_all.add(ec);
            cell.lid_tier[utt.tier].add(res.lid_predicted, true_lid);
            cell.lid_language[lang_name].add(res.lid_predicted, true_lid);
        }
    }
    return report;
}

}  // namespace scprompt

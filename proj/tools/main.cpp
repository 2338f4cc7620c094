// Command-line front end: corpus generation, training, evaluation, the
// experiment grid, and the lattice filter. Every flag can also come from an
// INI config file via --config.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "scprompt/corpus.hpp"
#include "scprompt/decoding.hpp"
#include "scprompt/experiment.hpp"
#include "scprompt/lattice.hpp"
#include "scprompt/metrics.hpp"
#include "scprompt/model.hpp"
#include "scprompt/prompting.hpp"
#include "scprompt/train.hpp"

namespace fs = std::filesystem;
using namespace scprompt;

namespace {

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

struct GenDataArgs {
    std::string out_dir;
    std::uint64_t seed = 0;
    CorpusConfig cfg;
};

void add_gen_data(CLI::App& app, GenDataArgs& args) {
    auto* cmd = app.add_subcommand("gen-data", "generate a synthetic multilingual corpus");
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed, "generation seed")->required();
    cmd->add_option("--languages", args.cfg.num_languages, "number of languages");
    cmd->add_option("--train-high", args.cfg.tier_train_counts[Tier::high],
                    "train utterances per high-tier language");
    cmd->add_option("--train-middle", args.cfg.tier_train_counts[Tier::middle],
                    "train utterances per middle-tier language");
    cmd->add_option("--train-low", args.cfg.tier_train_counts[Tier::low],
                    "train utterances per low-tier language");
    cmd->add_option("--train-exlow", args.cfg.tier_train_counts[Tier::exlow],
                    "train utterances per exlow-tier language");
    cmd->add_option("--dev-per-language", args.cfg.dev_per_language, "dev utterances");
    cmd->add_option("--test-per-language", args.cfg.test_per_language, "test utterances");
    cmd->add_option("--inventory", args.cfg.inventory_size, "shared character inventory size");
    cmd->add_option("--chars-per-language", args.cfg.chars_per_language, "subset size");
    cmd->add_option("--stride", args.cfg.language_stride, "inventory stride between languages");
    cmd->add_option("--min-text", args.cfg.min_text_len, "minimum text length");
    cmd->add_option("--max-text", args.cfg.max_text_len, "maximum text length");
    cmd->add_option("--min-frames", args.cfg.min_frames_per_token, "min frames per token");
    cmd->add_option("--max-frames", args.cfg.max_frames_per_token, "max frames per token");
    cmd->add_option("--feature-dim", args.cfg.feature_dim, "feature dimension");
    cmd->add_option("--noise-sigma", args.cfg.noise_sigma, "noise scale vs prototype norm");
    cmd->add_option("--mu", args.cfg.mu, "confusable-pair blend coefficient");
    cmd->callback([&args] {
        auto corpus = generate_corpus(args.cfg, args.seed);
        save_corpus(corpus, args.out_dir);
        std::size_t total = 0;
        for (const auto& name : corpus.manifest.split_names)
            total += corpus.split(name).size();
        std::printf("wrote %zu utterances across %zu splits to %s\n", total,
                    corpus.manifest.split_names.size(), args.out_dir.c_str());
    });
}

struct TrainArgs {
    std::string corpus_dir;
    std::string out_path;
    std::string log_path;
    std::string variant = "scctc";
    TrainConfig cfg;
    ModelConfig model;
};

void add_train(CLI::App& app, TrainArgs& args) {
    auto* cmd = app.add_subcommand("train", "train a model on a corpus");
    cmd->add_option("--corpus", args.corpus_dir, "corpus directory")->required();
    cmd->add_option("--out", args.out_path, "checkpoint output path")->required();
    cmd->add_option("--seed", args.cfg.seed, "training seed")->required();
    cmd->add_option("--variant", args.variant, "plain|interctc|scctc");
    cmd->add_option("--epochs", args.cfg.epochs, "training epochs");
    cmd->add_option("--batch-size", args.cfg.batch_size, "batch size");
    cmd->add_option("--lr", args.cfg.learning_rate, "learning rate");
    cmd->add_option("--alpha", args.cfg.ctc_weight, "CTC weight in the multitask loss");
    cmd->add_option("--beta", args.cfg.interctc_weight, "intermediate share of the CTC mass");
    cmd->add_option("--warmup", args.cfg.warmup_fraction, "warmup fraction of total steps");
    cmd->add_option("--dropout", args.cfg.dropout, "dropout rate");
    cmd->add_flag("--freeze-feedback", args.cfg.freeze_feedback, "pin w_fb at zero");
    cmd->add_option("--layers", args.model.encoder.num_layers, "encoder layers");
    cmd->add_option("--dim", args.model.encoder.model_dim, "model dimension");
    cmd->add_option("--heads", args.model.encoder.num_heads, "attention heads");
    cmd->add_option("--ff", args.model.encoder.ff_dim, "feed-forward dimension");
    cmd->add_option("--inter-layer", args.model.encoder.intermediate_layer_index,
                    "intermediate head placement (1-based)");
    cmd->add_option("--decoder-layers", args.model.decoder_layers, "decoder layers");
    cmd->add_option("--log", args.log_path, "write the per-epoch loss log here");
    cmd->callback([&args] {
        args.cfg.variant = encoder_variant_from_name(args.variant);
        auto corpus = load_corpus(args.corpus_dir);
        auto result = train(corpus, args.model, args.cfg);
        save_checkpoint(result.weights, args.out_path);
        std::string log = "epoch avg_loss\n";
        for (std::size_t e = 0; e < result.log.epoch_avg_loss.size(); ++e) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%zu %.6f\n", e + 1,
                          result.log.epoch_avg_loss[e]);
            log += buf;
        }
        if (result.log.aborted) log += "aborted " + result.log.abort_reason + "\n";
        if (!args.log_path.empty()) write_file(args.log_path, log);
        std::fputs(log.c_str(), stdout);
        if (result.log.aborted) {
            std::fprintf(stderr, "training aborted: %s\n", result.log.abort_reason.c_str());
            std::exit(2);
        }
    });
}

struct EvalArgs {
    std::string corpus_dir;
    std::string checkpoint;
    std::string split = "test";
    std::string encoder_mode = "none";
    std::string soft_targets;
    std::string out_path;
    double ctc_weight = 0.3;
    int beam = 8;
    int max_utterances = 0;
    bool decoder_prompting = false;
};

void add_eval(CLI::App& app, EvalArgs& args) {
    auto* cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
    cmd->add_option("--corpus", args.corpus_dir, "corpus directory")->required();
    cmd->add_option("--checkpoint", args.checkpoint, "model checkpoint")->required();
    cmd->add_option("--split", args.split, "corpus split to score");
    cmd->add_option("--ctc-weight", args.ctc_weight, "joint decoding weight (0 disables CTC)");
    cmd->add_option("--beam", args.beam, "beam size");
    cmd->add_flag("--decoder-prompting", args.decoder_prompting,
                  "force the reference language ID as first token");
    cmd->add_option("--encoder-prompting", args.encoder_mode,
                    "none|replacement|aggregation|prefix|soft");
    cmd->add_option("--soft-targets", args.soft_targets, "comma-joined LID tokens for soft");
    cmd->add_option("--max-utterances", args.max_utterances, "cap utterances (0 = all)");
    cmd->add_option("--out", args.out_path, "write the key-value report here");
    cmd->callback([&args] {
        auto corpus = load_corpus(args.corpus_dir);
        auto weights = load_checkpoint(args.checkpoint);
        GridConfig grid;
        GridRow row;
        row.id = "eval";
        row.variant = weights.config.variant;
        row.joint = args.ctc_weight > 0.0;
        row.decoder_prompting = args.decoder_prompting;
        row.encoder_mode = prompt_mode_from_name(args.encoder_mode);
        row.soft_pair_targets = row.encoder_mode == PromptMode::soft;
        grid.rows = {row};
        grid.ctc_weight = args.ctc_weight;
        grid.beam_size = args.beam;
        grid.split = args.split;
        grid.max_test_utterances = args.max_utterances;
        grid.soft_target_tokens = split_csv(args.soft_targets);
        std::map<EncoderVariant, const ModelWeights*> ckpts{{row.variant, &weights}};
        auto report = run_experiment_grid(corpus, ckpts, grid);
        std::fputs(report.render_table().c_str(), stdout);
        if (!args.out_path.empty()) write_file(args.out_path, report.render_kv());
    });
}

struct GridArgs {
    std::string corpus_dir;
    std::string plain_ckpt, interctc_ckpt, scctc_ckpt;
    std::string rows = "a,b,c,d,e,f,g,h,i,j,k,l";
    std::string soft_targets;
    std::string split = "test";
    std::string out_table, out_kv;
    double ctc_weight = 0.3;
    int beam = 8;
    int max_utterances = 0;
};

void add_grid(CLI::App& app, GridArgs& args) {
    auto* cmd = app.add_subcommand("grid", "run the experiment grid");
    cmd->add_option("--corpus", args.corpus_dir, "corpus directory")->required();
    cmd->add_option("--plain", args.plain_ckpt, "plain transformer checkpoint");
    cmd->add_option("--interctc", args.interctc_ckpt, "interctc checkpoint");
    cmd->add_option("--scctc", args.scctc_ckpt, "scctc checkpoint");
    cmd->add_option("--rows", args.rows, "comma-joined row ids (subset of a..l)");
    cmd->add_option("--soft-targets", args.soft_targets, "comma-joined LID tokens for row l");
    cmd->add_option("--split", args.split, "corpus split");
    cmd->add_option("--ctc-weight", args.ctc_weight, "joint decoding weight");
    cmd->add_option("--beam", args.beam, "beam size");
    cmd->add_option("--max-utterances", args.max_utterances, "cap utterances (0 = all)");
    cmd->add_option("--out-table", args.out_table, "write the aligned table here");
    cmd->add_option("--out-kv", args.out_kv, "write the key-value report here");
    cmd->callback([&args] {
        auto corpus = load_corpus(args.corpus_dir);
        std::optional<ModelWeights> plain, interctc, scctc;
        std::map<EncoderVariant, const ModelWeights*> ckpts;
        if (!args.plain_ckpt.empty()) {
            plain = load_checkpoint(args.plain_ckpt);
            ckpts[EncoderVariant::plain] = &*plain;
        }
        if (!args.interctc_ckpt.empty()) {
            interctc = load_checkpoint(args.interctc_ckpt);
            ckpts[EncoderVariant::interctc] = &*interctc;
        }
        if (!args.scctc_ckpt.empty()) {
            scctc = load_checkpoint(args.scctc_ckpt);
            ckpts[EncoderVariant::scctc] = &*scctc;
        }
        GridConfig grid;
        grid.ctc_weight = args.ctc_weight;
        grid.beam_size = args.beam;
        grid.split = args.split;
        grid.max_test_utterances = args.max_utterances;
        grid.soft_target_tokens = split_csv(args.soft_targets);
        auto wanted = split_csv(args.rows);
        for (const auto& row : default_grid_rows())
            for (const auto& id : wanted)
                if (row.id == id) grid.rows.push_back(row);
        if (grid.rows.empty()) throw ConfigError("no grid rows selected");
        // Soft rows need targets; default to the confusable pair when known.
        if (grid.soft_target_tokens.empty()) {
            for (const auto& lang : corpus.manifest.languages)
                if (lang.confusable_partner >= 0) {
                    grid.soft_target_tokens.push_back(
                        corpus.manifest
                            .languages[static_cast<std::size_t>(lang.confusable_partner)]
                            .lid_token);
                    grid.soft_target_tokens.push_back(lang.lid_token);
                }
            if (grid.soft_target_tokens.empty())
                for (auto it = grid.rows.begin(); it != grid.rows.end();)
                    it = it->soft_pair_targets ? grid.rows.erase(it) : it + 1;
        }
        auto report = run_experiment_grid(corpus, ckpts, grid);
        std::fputs(report.render_table().c_str(), stdout);
        if (!args.out_table.empty()) write_file(args.out_table, report.render_table());
        if (!args.out_kv.empty()) write_file(args.out_kv, report.render_kv());
    });
}

struct LatticeOpArgs {
    std::string in_path, out_path, vocab_path;
    std::string mode;
    std::string target;
    std::string targets;
};

void add_lattice_op(CLI::App& app, LatticeOpArgs& args) {
    auto* cmd = app.add_subcommand("lattice-op", "apply a prompting operator to a lattice dump");
    cmd->add_option("--in", args.in_path, "input lattice dump")->required();
    cmd->add_option("--out", args.out_path, "output lattice dump")->required();
    cmd->add_option("--mode", args.mode, "replacement|aggregation|prefix|soft")->required();
    cmd->add_option("--vocab", args.vocab_path, "vocab file naming the tokens")->required();
    cmd->add_option("--target", args.target, "target LID token");
    cmd->add_option("--targets", args.targets, "comma-joined LID tokens (soft mode)");
    cmd->callback([&args] {
        auto vocab = VocabSpec::load(args.vocab_path);
        auto lattice = load_lattice_dump(fs::path(args.in_path));
        if (lattice.vocab_size != static_cast<std::size_t>(vocab.size()))
            throw ConfigError("lattice width does not match vocab size");
        PromptSpec spec;
        spec.mode = prompt_mode_from_name(args.mode);
        if (spec.mode == PromptMode::soft) {
            for (const auto& tok : split_csv(args.targets))
                spec.targets.push_back(vocab.id_of(tok));
        } else if (spec.mode != PromptMode::none) {
            if (args.target.empty()) throw ConfigError("--target is required for this mode");
            spec.target = vocab.id_of(args.target);
        }
        auto out = apply_prompt(lattice, spec, vocab);
        save_lattice_dump(out, fs::path(args.out_path));
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-conditioned CTC transduction toolkit"};
    app.require_subcommand(1);
    // One config file serves every subcommand; keys live in [subcommand]
    // sections (or dotted form, e.g. train.epochs=4).
    app.set_config("--config");

    GenDataArgs gen_args;
    TrainArgs train_args;
    EvalArgs eval_args;
    GridArgs grid_args;
    LatticeOpArgs lattice_args;
    add_gen_data(app, gen_args);
    add_train(app, train_args);
    add_eval(app, eval_args);
    add_grid(app, grid_args);
    add_lattice_op(app, lattice_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

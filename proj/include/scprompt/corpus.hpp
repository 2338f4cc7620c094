#pragma once

// Deterministic synthetic multilingual corpus. Each language owns a subset of
// a shared character inventory; every character has a language-specific
// prototype vector, and utterance features repeat per-token prototypes with
// frame-count jitter plus Gaussian noise. A confusable language pair shares
// blended prototypes under an index pairing, so the same sound reads as a
// different character depending on the language. Everything derives from
// per-utterance RNG streams keyed by (seed, utterance id).

#include <algorithm>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/rng.hpp"
#include "scprompt/tensor.hpp"
#include "scprompt/vocab.hpp"

namespace scprompt {

enum class Tier { high, middle, low, exlow };

inline const char* tier_name(Tier t) {
    switch (t) {
        case Tier::high: return "high";
        case Tier::middle: return "middle";
        case Tier::low: return "low";
        case Tier::exlow: return "exlow";
    }
    return "?";
}

inline Tier tier_from_name(const std::string& name) {
    for (Tier t : {Tier::high, Tier::middle, Tier::low, Tier::exlow})
        if (name == tier_name(t)) return t;
    throw ConfigError("unknown tier '" + name + "'");
}

constexpr Tier kAllTiers[] = {Tier::high, Tier::middle, Tier::low, Tier::exlow};

struct LanguageProfile {
    std::string name;       // "l0"
    std::string lid_token;  // "<l0>"
    Tier tier = Tier::high;
    std::vector<int> char_ids;                     // vocab ids, ascending
    std::vector<double> unigram;                   // over char_ids
    std::vector<std::vector<double>> prototypes;   // per char, feature_dim wide
    int confusable_partner = -1;                   // language index or -1
    double mu = 0.0;                               // blend coefficient
};

struct Utterance {
    std::string id;
    int language = 0;          // language index
    Tier tier = Tier::high;
    std::vector<int> text;     // char token ids, no LID
    std::size_t feature_offset = 0;  // in float32 units
    std::size_t num_frames = 0;

    // Training target: LID token first, then the text.
    std::vector<int> label(const std::vector<int>& lang_lid_ids) const {
        std::vector<int> out;
        out.reserve(text.size() + 1);
        out.push_back(lang_lid_ids[static_cast<std::size_t>(language)]);
        out.insert(out.end(), text.begin(), text.end());
        return out;
    }
};

struct CorpusManifest {
    int version = 1;
    std::uint64_t seed = 0;
    int feature_dim = 16;
    std::string feature_file = "features.bin";
    std::uint64_t feature_checksum = 0;
    std::vector<LanguageProfile> languages;
    std::vector<std::string> split_names;  // canonical order
    std::map<std::string, std::vector<Utterance>> splits;
};

struct CorpusConfig {
    int num_languages = 5;
    std::map<Tier, int> tier_train_counts{
        {Tier::high, 2000}, {Tier::middle, 500}, {Tier::low, 100}, {Tier::exlow, 20}};
    int dev_per_language = 8;
    int test_per_language = 40;
    int inventory_size = 20;
    int chars_per_language = 8;
    int language_stride = 4;
    int min_text_len = 3;
    int max_text_len = 10;
    int min_frames_per_token = 3;
    int max_frames_per_token = 6;
    int feature_dim = 16;
    double noise_sigma = 0.3;  // relative to prototype norm, split across dims
    double mu = 0.5;           // confusable-pair blend; 0 disables

    void validate() const {
        if (num_languages < 2) throw ConfigError("need at least 2 languages");
        if (num_languages < 4)
            throw ConfigError("tier layout needs at least 4 languages, one per tier");
        for (Tier t : kAllTiers) {
            auto it = tier_train_counts.find(t);
            if (it == tier_train_counts.end() || it->second < 1)
                throw ConfigError(std::string("tier ") + tier_name(t) +
                                  " needs a positive train count");
        }
        if (dev_per_language < 1 || test_per_language < 1)
            throw ConfigError("dev/test splits need at least one utterance per language");
        if (chars_per_language < 2 || chars_per_language > inventory_size)
            throw ConfigError("chars_per_language out of range");
        if (language_stride < 1) throw ConfigError("language_stride must be positive");
        if (min_text_len < 3)
            throw ConfigError("min_text_len must be >= 3 to keep CTC alignments feasible");
        if (max_text_len < min_text_len) throw ConfigError("bad text length range");
        if (min_frames_per_token < 3)
            throw ConfigError("min_frames_per_token must be >= 3 to keep CTC feasible");
        if (max_frames_per_token < min_frames_per_token)
            throw ConfigError("bad frames range");
        if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
        if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
        if (mu < 0.0 || mu >= 1.0) throw ConfigError("mu must be in [0,1)");
    }

    // The first four languages cover one tier each; extras land in the low
    // tier, keeping exlow a clean single-language probe.
    Tier tier_of_language(int i) const {
        return i < 4 ? kAllTiers[i] : Tier::low;
    }
};

struct Corpus {
    CorpusManifest manifest;
    std::vector<float> features;
    VocabSpec vocab;

    const std::vector<Utterance>& split(const std::string& name) const {
        auto it = manifest.splits.find(name);
        if (it == manifest.splits.end()) throw ConfigError("no split named '" + name + "'");
        return it->second;
    }

    int lid_id_of_language(int lang) const {
        return vocab.lid_ids[static_cast<std::size_t>(lang)];
    }

    std::vector<int> label_of(const Utterance& u) const { return u.label(vocab.lid_ids); }

    Tensor features_of(const Utterance& u) const {
        const auto F = static_cast<std::size_t>(manifest.feature_dim);
        Tensor t({u.num_frames, F});
        for (std::size_t i = 0; i < u.num_frames * F; ++i)
            t.data()[i] = static_cast<double>(features[u.feature_offset + i]);
        return t;
    }
};

namespace detail {

inline std::string char_token(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "c%02d", index);
    return buf;
}

inline std::string utterance_id(const std::string& lang, const std::string& split, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", index);
    return lang + "_" + split + "_" + buf;
}

inline int sample_from(Rng& rng, const std::vector<double>& weights) {
    double u = rng.uniform();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

inline double norm_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s = std::fma(x, x, s);  // fixed rounding at any -O level
    return std::sqrt(s);
}

}  // namespace detail

inline VocabSpec build_corpus_vocab(const CorpusConfig& cfg) {
    VocabSpec v;
    v.tokens = {"<blank>", "<sos>", "<eos>"};
    v.blank_id = 0;
    v.sos_id = 1;
    v.eos_id = 2;
    for (int i = 0; i < cfg.num_languages; ++i) {
        v.lid_ids.push_back(static_cast<int>(v.tokens.size()));
        v.tokens.push_back("<l" + std::to_string(i) + ">");
    }
    for (int c = 0; c < cfg.inventory_size; ++c) v.tokens.push_back(detail::char_token(c));
    v.validate();
    return v;
}

inline Corpus generate_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Corpus corpus;
    corpus.vocab = build_corpus_vocab(cfg);
    auto& manifest = corpus.manifest;
    manifest.seed = seed;
    manifest.feature_dim = cfg.feature_dim;

    const int char_base = 3 + cfg.num_languages;  // first char token id
    const auto F = static_cast<std::size_t>(cfg.feature_dim);

    // One shared inventory of sound prototypes; languages differ in which
    // character a sound spells. Language i emits its char c_k with the
    // prototype of inventory slot (k + i) mod N, so the same sound reads as a
    // different character depending on the language and transcription is
    // impossible without resolving the language first.
    std::vector<std::vector<double>> slot_protos;
    {
        Rng rng = Rng::keyed(seed, "sound-inventory");
        for (int s = 0; s < cfg.inventory_size; ++s) {
            std::vector<double> proto(F);
            for (auto& x : proto) x = rng.normal();
            const double n = detail::norm_of(proto);
            for (auto& x : proto) x /= n;
            slot_protos.push_back(std::move(proto));
        }
    }
    for (int i = 0; i < cfg.num_languages; ++i) {
        LanguageProfile prof;
        prof.name = "l" + std::to_string(i);
        prof.lid_token = "<l" + std::to_string(i) + ">";
        prof.tier = cfg.tier_of_language(i);
        for (int j = 0; j < cfg.chars_per_language; ++j) {
            const int inv = (i * cfg.language_stride + j) % cfg.inventory_size;
            prof.char_ids.push_back(char_base + inv);
        }
        std::sort(prof.char_ids.begin(), prof.char_ids.end());
        Rng rng = Rng::keyed(seed, "lang-profile-" + prof.name);
        prof.unigram.resize(prof.char_ids.size());
        double sum = 0.0;
        for (auto& w : prof.unigram) {
            w = -std::log(1.0 - rng.uniform());
            sum += w;
        }
        for (auto& w : prof.unigram) w /= sum;
        for (int id : prof.char_ids) {
            const int k = id - char_base;
            const int slot = (k + i) % cfg.inventory_size;
            prof.prototypes.push_back(slot_protos[static_cast<std::size_t>(slot)]);
        }
        manifest.languages.push_back(std::move(prof));
    }

    // Confusable pair: a mu-fraction of the exlow language's characters are
    // emitted with the exact sounds of the low partner's paired characters
    // (j-th char onto j-th char). Those sounds become genuinely ambiguous:
    // only the language decides which character they spell. The remaining
    // characters keep their own slots and anchor language identification.
    if (cfg.mu > 0.0) {
        int low = -1, exlow = -1;
        for (int i = 0; i < cfg.num_languages; ++i) {
            if (low < 0 && manifest.languages[static_cast<std::size_t>(i)].tier == Tier::low)
                low = i;
            if (exlow < 0 && manifest.languages[static_cast<std::size_t>(i)].tier == Tier::exlow)
                exlow = i;
        }
        if (low >= 0 && exlow >= 0) {
            auto& a = manifest.languages[static_cast<std::size_t>(low)];
            auto& b = manifest.languages[static_cast<std::size_t>(exlow)];
            a.confusable_partner = exlow;
            a.mu = cfg.mu;
            b.confusable_partner = low;
            b.mu = cfg.mu;
            const std::size_t n = std::min(a.prototypes.size(), b.prototypes.size());
            const auto shared = static_cast<std::size_t>(
                std::lround(cfg.mu * static_cast<double>(n)));
            for (std::size_t j = 0; j < shared; ++j) b.prototypes[j] = a.prototypes[j];
        }
    }

    // Utterances, in canonical order: split, then language, then index.
    manifest.split_names = {"train", "dev", "test"};
    for (const auto& split : manifest.split_names) {
        auto& list = manifest.splits[split];
        for (int lang = 0; lang < cfg.num_languages; ++lang) {
            const auto& prof = manifest.languages[static_cast<std::size_t>(lang)];
            int count = 0;
            if (split == "train") count = cfg.tier_train_counts.at(prof.tier);
            else if (split == "dev") count = cfg.dev_per_language;
            else count = cfg.test_per_language;
            for (int idx = 0; idx < count; ++idx) {
                Utterance u;
                u.id = detail::utterance_id(prof.name, split, idx);
                u.language = lang;
                u.tier = prof.tier;
                Rng rng = Rng::keyed(seed, u.id);
                const int len =
                    static_cast<int>(rng.range(cfg.min_text_len, cfg.max_text_len));
                u.feature_offset = corpus.features.size();
                for (int p = 0; p < len; ++p) {
                    const int ci = detail::sample_from(rng, prof.unigram);
                    u.text.push_back(prof.char_ids[static_cast<std::size_t>(ci)]);
                    const auto& proto = prof.prototypes[static_cast<std::size_t>(ci)];
                    const double sigma = cfg.noise_sigma * detail::norm_of(proto) /
                                         std::sqrt(static_cast<double>(F));
                    const int frames = static_cast<int>(
                        rng.range(cfg.min_frames_per_token, cfg.max_frames_per_token));
                    for (int f = 0; f < frames; ++f) {
                        for (std::size_t d = 0; d < F; ++d)
                            corpus.features.push_back(static_cast<float>(
                                std::fma(sigma, rng.normal(), proto[d])));
                        ++u.num_frames;
                    }
                }
                // CTC feasibility: frames >= 2*(len+1)+1 including the LID.
                if (u.num_frames < 2 * (u.text.size() + 1) + 1)
                    throw ConfigError("generated utterance violates CTC feasibility");
                list.push_back(std::move(u));
            }
        }
    }
    manifest.feature_checksum =
        fnv1a64(corpus.features.data(), corpus.features.size() * sizeof(float));
    return corpus;
}

// ----------------------------------------------------------------------------
// Serialization. Manifest is line-oriented key-value text; features are raw
// little-endian float32 with offsets tracked in the manifest.

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto& m = corpus.manifest;

    {
        std::ofstream fb(dir / m.feature_file, std::ios::binary);
        if (!fb) throw IoError("cannot write feature store");
        fb.write(reinterpret_cast<const char*>(corpus.features.data()),
                 static_cast<std::streamsize>(corpus.features.size() * sizeof(float)));
        if (!fb) throw IoError("feature store write failed");
    }
    corpus.vocab.save(dir / "vocab.txt");

    std::ofstream out(dir / "manifest.txt", std::ios::binary);
    if (!out) throw IoError("cannot write manifest");
    char buf[64];
    out << "scprompt-corpus v" << m.version << "\n";
    out << "seed " << m.seed << "\n";
    out << "feature-dim " << m.feature_dim << "\n";
    out << "feature-file " << m.feature_file << "\n";
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, m.feature_checksum);
    out << "feature-checksum " << buf << "\n";
    out << "num-languages " << m.languages.size() << "\n";
    for (const auto& lang : m.languages) {
        out << "language " << lang.name << " lid " << lang.lid_token << " tier "
            << tier_name(lang.tier) << " partner "
            << (lang.confusable_partner < 0 ? std::string("-")
                                            : std::to_string(lang.confusable_partner));
        std::snprintf(buf, sizeof(buf), "%.17g", lang.mu);
        out << " mu " << buf << "\n";
        out << "chars " << lang.name;
        for (int id : lang.char_ids) out << " " << corpus.vocab.token(id);
        out << "\n";
        out << "unigram " << lang.name;
        for (double w : lang.unigram) {
            std::snprintf(buf, sizeof(buf), "%.17g", w);
            out << " " << buf;
        }
        out << "\n";
        for (std::size_t c = 0; c < lang.prototypes.size(); ++c) {
            out << "proto " << lang.name << " " << corpus.vocab.token(lang.char_ids[c]);
            for (double v : lang.prototypes[c]) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << " " << buf;
            }
            out << "\n";
        }
    }
    for (const auto& split : m.split_names) {
        const auto& list = m.splits.at(split);
        out << "split " << split << " " << list.size() << "\n";
        for (const auto& u : list) {
            out << "utt " << u.id << " lang " << m.languages[static_cast<std::size_t>(u.language)].name
                << " tier " << tier_name(u.tier) << " offset " << u.feature_offset << " frames "
                << u.num_frames << " text";
            for (int id : u.text) out << " " << corpus.vocab.token(id);
            out << "\n";
        }
    }
    out << "end\n";
    if (!out) throw IoError("manifest write failed");
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    Corpus corpus;
    corpus.vocab = VocabSpec::load(dir / "vocab.txt");

    std::ifstream in(dir / "manifest.txt", std::ios::binary);
    if (!in) throw IoError("cannot read manifest in " + dir.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("scprompt-corpus v", 0) != 0)
        throw IoError("bad manifest header");
    auto& m = corpus.manifest;
    m.version = std::stoi(line.substr(17));
    if (m.version != 1) throw IoError("unsupported manifest version");

    std::map<std::string, int> lang_index;
    std::string current_split;
    bool saw_end = false;
    std::string checksum_hex;
    m.split_names.clear();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "seed") ls >> m.seed;
        else if (key == "feature-dim") ls >> m.feature_dim;
        else if (key == "feature-file") ls >> m.feature_file;
        else if (key == "feature-checksum") ls >> checksum_hex;
        else if (key == "num-languages") { std::size_t n; ls >> n; }
        else if (key == "language") {
            LanguageProfile prof;
            std::string kw, partner;
            ls >> prof.name >> kw >> prof.lid_token;
            if (kw != "lid") throw IoError("bad language line: " + line);
            std::string tier;
            ls >> kw >> tier;
            if (kw != "tier") throw IoError("bad language line: " + line);
            prof.tier = tier_from_name(tier);
            ls >> kw >> partner;
            if (kw != "partner") throw IoError("bad language line: " + line);
            prof.confusable_partner = partner == "-" ? -1 : std::stoi(partner);
            ls >> kw >> prof.mu;
            if (kw != "mu") throw IoError("bad language line: " + line);
            lang_index[prof.name] = static_cast<int>(m.languages.size());
            m.languages.push_back(std::move(prof));
        } else if (key == "chars") {
            std::string name, tok;
            ls >> name;
            auto& prof = m.languages[static_cast<std::size_t>(lang_index.at(name))];
            while (ls >> tok) prof.char_ids.push_back(corpus.vocab.id_of(tok));
        } else if (key == "unigram") {
            std::string name;
            double w;
            ls >> name;
            auto& prof = m.languages[static_cast<std::size_t>(lang_index.at(name))];
            while (ls >> w) prof.unigram.push_back(w);
        } else if (key == "proto") {
            std::string name, tok;
            ls >> name >> tok;
            auto& prof = m.languages[static_cast<std::size_t>(lang_index.at(name))];
            std::vector<double> proto;
            double v;
            while (ls >> v) proto.push_back(v);
            if (proto.size() != static_cast<std::size_t>(m.feature_dim))
                throw IoError("prototype width mismatch in manifest");
            prof.prototypes.push_back(std::move(proto));
        } else if (key == "split") {
            std::size_t count;
            ls >> current_split >> count;
            m.split_names.push_back(current_split);
            m.splits[current_split].reserve(count);
        } else if (key == "utt") {
            if (current_split.empty()) throw IoError("utterance before any split");
            Utterance u;
            std::string kw, lang, tier, tok;
            ls >> u.id >> kw >> lang;
            if (kw != "lang") throw IoError("bad utt line: " + line);
            u.language = lang_index.at(lang);
            ls >> kw >> tier;
            if (kw != "tier") throw IoError("bad utt line: " + line);
            u.tier = tier_from_name(tier);
            ls >> kw >> u.feature_offset;
            if (kw != "offset") throw IoError("bad utt line: " + line);
            ls >> kw >> u.num_frames;
            if (kw != "frames") throw IoError("bad utt line: " + line);
            ls >> kw;
            if (kw != "text") throw IoError("bad utt line: " + line);
            while (ls >> tok) u.text.push_back(corpus.vocab.id_of(tok));
            if (u.text.empty()) throw IoError("utterance with empty text: " + u.id);
            m.splits[current_split].push_back(std::move(u));
        } else if (key == "end") {
            saw_end = true;
        } else {
            throw IoError("unknown manifest key '" + key + "'");
        }
    }
    if (!saw_end) throw IoError("manifest truncated (missing end marker)");
    if (checksum_hex.size() != 16) throw IoError("bad checksum field");
    m.feature_checksum = std::stoull(checksum_hex, nullptr, 16);

    std::ifstream fb(dir / m.feature_file, std::ios::binary | std::ios::ate);
    if (!fb) throw IoError("cannot read feature store");
    const auto bytes = static_cast<std::size_t>(fb.tellg());
    if (bytes % sizeof(float) != 0) throw IoError("feature store size not float-aligned");
    corpus.features.resize(bytes / sizeof(float));
    fb.seekg(0);
    fb.read(reinterpret_cast<char*>(corpus.features.data()),
            static_cast<std::streamsize>(bytes));
    if (!fb) throw IoError("feature store read failed");
    if (fnv1a64(corpus.features.data(), bytes) != m.feature_checksum)
        throw IoError("feature store checksum mismatch");

    const auto F = static_cast<std::size_t>(m.feature_dim);
    for (const auto& split : m.split_names)
        for (const auto& u : m.splits.at(split)) {
            if (u.feature_offset + u.num_frames * F > corpus.features.size())
                throw IoError("utterance " + u.id + " points past the feature store");
            if (u.num_frames < 2 * (u.text.size() + 1) + 1)
                throw IoError("utterance " + u.id + " violates CTC feasibility");
        }
    if (m.languages.size() != corpus.vocab.lid_ids.size())
        throw IoError("language count does not match vocab LID count");
    return corpus;
}

}  // namespace scprompt

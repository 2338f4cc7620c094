#pragma once

// Joint CTC-attention model: a pre-norm transformer encoder carrying an
// intermediate CTC head whose posteriors can be fed back into the next layer
// (self-conditioning), plus an autoregressive attention decoder. Encoder
// prompting hooks into the feedback path at inference only.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/lattice.hpp"
#include "scprompt/prompting.hpp"
#include "scprompt/rng.hpp"
#include "scprompt/tensor.hpp"
#include "scprompt/vocab.hpp"

namespace scprompt {

enum class EncoderVariant { plain, interctc, scctc };

inline const char* encoder_variant_name(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::plain: return "plain";
        case EncoderVariant::interctc: return "interctc";
        case EncoderVariant::scctc: return "scctc";
    }
    return "?";
}

inline EncoderVariant encoder_variant_from_name(const std::string& name) {
    for (EncoderVariant v :
         {EncoderVariant::plain, EncoderVariant::interctc, EncoderVariant::scctc})
        if (name == encoder_variant_name(v)) return v;
    throw ConfigError("unknown encoder variant '" + name + "'");
}

struct EncoderConfig {
    int num_layers = 4;
    int model_dim = 64;
    int num_heads = 4;
    int ff_dim = 128;
    int intermediate_layer_index = 2;  // 1-based; head sits after this layer
    double dropout = 0.0;

    void validate() const {
        if (num_layers < 2) throw ConfigError("encoder needs at least 2 layers");
        if (intermediate_layer_index < 1 || intermediate_layer_index >= num_layers)
            throw ConfigError("intermediate layer index must satisfy 1 <= m < num_layers");
        if (model_dim <= 0 || num_heads <= 0 || model_dim % num_heads != 0)
            throw ConfigError("model_dim must be a positive multiple of num_heads");
        if (ff_dim <= 0) throw ConfigError("ff_dim must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    }
};

struct ModelConfig {
    EncoderConfig encoder;
    int decoder_layers = 2;
    int feature_dim = 16;
    EncoderVariant variant = EncoderVariant::scctc;

    void validate() const {
        encoder.validate();
        if (decoder_layers < 1) throw ConfigError("decoder needs at least 1 layer");
        if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
    }
};

struct AttentionWeights {
    std::vector<Tensor> wq, wk, wv;  // per head, D×dh
    Tensor wo, bo;                   // D×D, D
};

struct EncoderLayerWeights {
    Tensor ln1_g, ln1_b;
    AttentionWeights attn;
    Tensor ln2_g, ln2_b;
    Tensor w_ff1, b_ff1, w_ff2, b_ff2;
};

struct DecoderLayerWeights {
    Tensor ln_self_g, ln_self_b;
    AttentionWeights self_attn;
    Tensor ln_cross_g, ln_cross_b;
    AttentionWeights cross_attn;
    Tensor ln_ff_g, ln_ff_b;
    Tensor w_ff1, b_ff1, w_ff2, b_ff2;
};

struct ModelWeights {
    ModelConfig config;
    VocabSpec vocab;

    Tensor input_proj_w, input_proj_b;
    std::vector<EncoderLayerWeights> encoder_layers;
    Tensor inter_ln_g, inter_ln_b;
    Tensor w_inter, b_inter;  // D×V head after the intermediate layer
    Tensor w_fb;              // V×D feedback projection
    Tensor final_ln_g, final_ln_b;
    Tensor w_ctc, b_ctc;      // D×V final CTC head
    Tensor dec_embedding;     // V×D
    std::vector<DecoderLayerWeights> decoder_layers;
    Tensor dec_final_ln_g, dec_final_ln_b;
    Tensor w_out, b_out;      // D×V decoder output head

    // Declaration order; checkpoints and the optimizer both walk this list.
    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps;
        auto attn = [&](AttentionWeights& a) {
            for (auto& t : a.wq) ps.push_back(&t);
            for (auto& t : a.wk) ps.push_back(&t);
            for (auto& t : a.wv) ps.push_back(&t);
            ps.push_back(&a.wo);
            ps.push_back(&a.bo);
        };
        ps.push_back(&input_proj_w);
        ps.push_back(&input_proj_b);
        for (auto& l : encoder_layers) {
            ps.push_back(&l.ln1_g);
            ps.push_back(&l.ln1_b);
            attn(l.attn);
            ps.push_back(&l.ln2_g);
            ps.push_back(&l.ln2_b);
            ps.push_back(&l.w_ff1);
            ps.push_back(&l.b_ff1);
            ps.push_back(&l.w_ff2);
            ps.push_back(&l.b_ff2);
        }
        ps.push_back(&inter_ln_g);
        ps.push_back(&inter_ln_b);
        ps.push_back(&w_inter);
        ps.push_back(&b_inter);
        ps.push_back(&w_fb);
        ps.push_back(&final_ln_g);
        ps.push_back(&final_ln_b);
        ps.push_back(&w_ctc);
        ps.push_back(&b_ctc);
        ps.push_back(&dec_embedding);
        for (auto& l : decoder_layers) {
            ps.push_back(&l.ln_self_g);
            ps.push_back(&l.ln_self_b);
            attn(l.self_attn);
            ps.push_back(&l.ln_cross_g);
            ps.push_back(&l.ln_cross_b);
            attn(l.cross_attn);
            ps.push_back(&l.ln_ff_g);
            ps.push_back(&l.ln_ff_b);
            ps.push_back(&l.w_ff1);
            ps.push_back(&l.b_ff1);
            ps.push_back(&l.w_ff2);
            ps.push_back(&l.b_ff2);
        }
        ps.push_back(&dec_final_ln_g);
        ps.push_back(&dec_final_ln_b);
        ps.push_back(&w_out);
        ps.push_back(&b_out);
        return ps;
    }

    std::size_t num_parameters() {
        std::size_t n = 0;
        for (auto* p : parameters()) n += p->numel();
        return n;
    }

    // Deep copy: struct copies alias tensor storage, so snapshots need this.
    ModelWeights clone() const {
        ModelWeights c = *this;
        auto src = const_cast<ModelWeights*>(this)->parameters();
        auto dst = c.parameters();
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->clone();
        return c;
    }

    void set_requires_grad(bool v) {
        for (auto* p : parameters()) p->set_requires_grad(v);
    }

    void clear_grads() {
        for (auto* p : parameters()) p->clear_grad();
    }

    static ModelWeights init(const ModelConfig& config, const VocabSpec& vocab,
                             std::uint64_t seed);
};

namespace detail {

inline Tensor xavier(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-a, a);
    return t;
}

inline Tensor ones_vec(std::size_t n) { return Tensor({n}, 1.0); }
inline Tensor zeros_vec(std::size_t n) { return Tensor({n}, 0.0); }

inline AttentionWeights init_attention(Rng& rng, std::size_t dim, int num_heads) {
    AttentionWeights a;
    const std::size_t dh = dim / static_cast<std::size_t>(num_heads);
    for (int h = 0; h < num_heads; ++h) {
        a.wq.push_back(xavier(rng, dim, dh));
        a.wk.push_back(xavier(rng, dim, dh));
        a.wv.push_back(xavier(rng, dim, dh));
    }
    a.wo = xavier(rng, dim, dim);
    a.bo = zeros_vec(dim);
    return a;
}

// Sinusoidal positional encodings as a constant (grad-free) tensor.
inline Tensor positional_encoding(std::size_t len, std::size_t dim) {
    Tensor pe({len, dim});
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t i = 0; i < dim; i += 2) {
            const double angle =
                static_cast<double>(t) /
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            pe.at(t, i) = std::sin(angle);
            if (i + 1 < dim) pe.at(t, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

}  // namespace detail

inline ModelWeights ModelWeights::init(const ModelConfig& config, const VocabSpec& vocab,
                                       std::uint64_t seed) {
    config.validate();
    vocab.validate();
    ModelWeights w;
    w.config = config;
    w.vocab = vocab;
    Rng rng = Rng::keyed(seed, "model-init");
    const auto D = static_cast<std::size_t>(config.encoder.model_dim);
    const auto F = static_cast<std::size_t>(config.feature_dim);
    const auto V = static_cast<std::size_t>(vocab.size());
    const auto FF = static_cast<std::size_t>(config.encoder.ff_dim);

    w.input_proj_w = detail::xavier(rng, F, D);
    w.input_proj_b = detail::zeros_vec(D);
    for (int l = 0; l < config.encoder.num_layers; ++l) {
        EncoderLayerWeights layer;
        layer.ln1_g = detail::ones_vec(D);
        layer.ln1_b = detail::zeros_vec(D);
        layer.attn = detail::init_attention(rng, D, config.encoder.num_heads);
        layer.ln2_g = detail::ones_vec(D);
        layer.ln2_b = detail::zeros_vec(D);
        layer.w_ff1 = detail::xavier(rng, D, FF);
        layer.b_ff1 = detail::zeros_vec(FF);
        layer.w_ff2 = detail::xavier(rng, FF, D);
        layer.b_ff2 = detail::zeros_vec(D);
        w.encoder_layers.push_back(std::move(layer));
    }
    w.inter_ln_g = detail::ones_vec(D);
    w.inter_ln_b = detail::zeros_vec(D);
    w.w_inter = detail::xavier(rng, D, V);
    w.b_inter = detail::zeros_vec(V);
    w.w_fb = detail::xavier(rng, V, D);
    w.final_ln_g = detail::ones_vec(D);
    w.final_ln_b = detail::zeros_vec(D);
    w.w_ctc = detail::xavier(rng, D, V);
    w.b_ctc = detail::zeros_vec(V);
    w.dec_embedding = detail::xavier(rng, V, D);
    for (int l = 0; l < config.decoder_layers; ++l) {
        DecoderLayerWeights layer;
        layer.ln_self_g = detail::ones_vec(D);
        layer.ln_self_b = detail::zeros_vec(D);
        layer.self_attn = detail::init_attention(rng, D, config.encoder.num_heads);
        layer.ln_cross_g = detail::ones_vec(D);
        layer.ln_cross_b = detail::zeros_vec(D);
        layer.cross_attn = detail::init_attention(rng, D, config.encoder.num_heads);
        layer.ln_ff_g = detail::ones_vec(D);
        layer.ln_ff_b = detail::zeros_vec(D);
        layer.w_ff1 = detail::xavier(rng, D, FF);
        layer.b_ff1 = detail::zeros_vec(FF);
        layer.w_ff2 = detail::xavier(rng, FF, D);
        layer.b_ff2 = detail::zeros_vec(D);
        w.decoder_layers.push_back(std::move(layer));
    }
    w.dec_final_ln_g = detail::ones_vec(D);
    w.dec_final_ln_b = detail::zeros_vec(D);
    w.w_out = detail::xavier(rng, D, V);
    w.b_out = detail::zeros_vec(V);
    return w;
}

// Train-time dropout on the residual stream at the self-conditioning
// junction; inference passes nullptr and stays deterministic.
struct DropoutState {
    Rng* rng = nullptr;
    double rate = 0.0;
};

namespace detail {

inline Tensor maybe_dropout(Tape* tape, const Tensor& x, DropoutState* drop) {
    if (!drop || drop->rate <= 0.0) return x;
    std::vector<double> mask(x.numel());
    const double keep = 1.0 - drop->rate;
    for (auto& m : mask) m = drop->rng->uniform() < keep ? 1.0 / keep : 0.0;
    return mul_mask(tape, x, mask);
}

inline Tensor attention_block(Tape* tape, const Tensor& queries, const Tensor& keys_values,
                              const AttentionWeights& w, AttentionMask mask) {
    const std::size_t dh = w.wq[0].dim(1);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> heads;
    heads.reserve(w.wq.size());
    for (std::size_t h = 0; h < w.wq.size(); ++h) {
        Tensor q = matmul(tape, queries, w.wq[h]);
        Tensor k = matmul(tape, keys_values, w.wk[h]);
        Tensor v = matmul(tape, keys_values, w.wv[h]);
        Tensor scores = scale(tape, matmul_nt(tape, q, k), inv_sqrt_dh);
        Tensor attn = softmax_lastdim(tape, scores, mask);
        heads.push_back(matmul(tape, attn, v));
    }
    Tensor ctx = concat_cols(tape, heads);
    return add_row_broadcast(tape, matmul(tape, ctx, w.wo), w.bo);
}

inline Tensor feed_forward(Tape* tape, const Tensor& x, const Tensor& w1, const Tensor& b1,
                           const Tensor& w2, const Tensor& b2) {
    Tensor h = gelu(tape, add_row_broadcast(tape, matmul(tape, x, w1), b1));
    return add_row_broadcast(tape, matmul(tape, h, w2), b2);
}

inline Tensor encoder_layer(Tape* tape, const Tensor& x, const EncoderLayerWeights& w) {
    Tensor h = layer_norm(tape, x, w.ln1_g, w.ln1_b);
    Tensor a = attention_block(tape, h, h, w.attn, AttentionMask::none);
    Tensor x1 = add(tape, x, a);
    Tensor h2 = layer_norm(tape, x1, w.ln2_g, w.ln2_b);
    Tensor f = feed_forward(tape, h2, w.w_ff1, w.b_ff1, w.w_ff2, w.b_ff2);
    return add(tape, x1, f);
}

inline void check_finite(const Tensor& t, const char* where, int layer_index) {
    if (!t.all_finite())
        throw NumericalError(std::string(where) + " produced non-finite values at layer " +
                             std::to_string(layer_index));
}

}  // namespace detail

struct EncodeResult {
    Tensor final_hidden;               // T×D, post final layer norm
    PosteriorLattice intermediate;     // softmax of the intermediate head
    PosteriorLattice prompted;         // after prompt surgery (== intermediate if none)
    Tensor final_ctc_log_probs;        // T×V
    Tensor inter_log_probs;            // T×V, differentiable path for the InterCTC loss
};

namespace detail {

inline EncodeResult encode_impl(Tape* tape, const Tensor& features, const ModelWeights& w,
                                const PromptSpec* prompt, bool feedback, DropoutState* drop) {
    if (features.rank() != 2 ||
        features.dim(1) != static_cast<std::size_t>(w.config.feature_dim))
        throw DimensionError("features must be T×feature_dim");
    if (!features.all_finite()) throw NumericalError("non-finite input features");
    if (prompt) prompt->validate(w.vocab);

    const auto D = static_cast<std::size_t>(w.config.encoder.model_dim);
    const std::size_t T = features.dim(0);
    const double emb_scale = std::sqrt(static_cast<double>(D));

    Tensor x = add_row_broadcast(tape, matmul(tape, features, w.input_proj_w), w.input_proj_b);
    x = add(tape, x, positional_encoding(T, D));

    EncodeResult res;
    const int m = w.config.encoder.intermediate_layer_index;
    for (int l = 0; l < w.config.encoder.num_layers; ++l) {
        x = encoder_layer(tape, x, w.encoder_layers[static_cast<std::size_t>(l)]);
        check_finite(x, "encoder", l + 1);
        if (l + 1 == m) {
            Tensor normed = layer_norm(tape, x, w.inter_ln_g, w.inter_ln_b);
            Tensor logits = add_row_broadcast(tape, matmul(tape, normed, w.w_inter), w.b_inter);
            Tensor probs = softmax_lastdim(tape, logits);
            res.inter_log_probs = log_softmax_lastdim(tape, logits);
            res.intermediate = PosteriorLattice::from_tensor(probs);
            res.prompted = prompt ? apply_prompt(res.intermediate, *prompt, w.vocab)
                                  : res.intermediate;
            if (feedback) {
                // Prompted rows re-enter as constants; the unprompted path
                // keeps the differentiable softmax tensor. Train-time dropout
                // hits the stream at this junction while the fed-back summary
                // stays clean, which is what makes the upper layers learn to
                // read it.
                const bool surgically_modified = prompt && prompt->mode != PromptMode::none;
                Tensor fb_src = surgically_modified ? res.prompted.to_tensor() : probs;
                x = add(tape, maybe_dropout(tape, x, drop), matmul_nt(tape, fb_src, w.w_ctc));
            }
        }
    }
    res.final_hidden = layer_norm(tape, x, w.final_ln_g, w.final_ln_b);
    Tensor ctc_logits =
        add_row_broadcast(tape, matmul(tape, res.final_hidden, w.w_ctc), w.b_ctc);
    res.final_ctc_log_probs = log_softmax_lastdim(tape, ctc_logits);
    return res;
}

}  // namespace detail

// Self-conditioned encoding: the (optionally prompted) intermediate posterior
// re-enters the residual stream through the feedback projection. With no
// prompt this is exactly standard SC-CTC.
inline EncodeResult encode(Tape* tape, const Tensor& features, const ModelWeights& weights,
                           const PromptSpec* prompt = nullptr, DropoutState* drop = nullptr) {
    return detail::encode_impl(tape, features, weights, prompt, /*feedback=*/true, drop);
}

// Intermediate head exists for the loss only; no feedback into layer m+1.
inline EncodeResult encode_interctc_only(Tape* tape, const Tensor& features,
                                         const ModelWeights& weights,
                                         DropoutState* drop = nullptr) {
    return detail::encode_impl(tape, features, weights, nullptr, /*feedback=*/false, drop);
}

// Variant dispatch used by training and evaluation. Prompting requires the
// feedback path, so non-scctc variants reject prompts.
inline EncodeResult encode_model(Tape* tape, const Tensor& features, const ModelWeights& weights,
                                 const PromptSpec* prompt = nullptr,
                                 DropoutState* drop = nullptr) {
    if (weights.config.variant == EncoderVariant::scctc)
        return encode(tape, features, weights, prompt, drop);
    if (prompt && prompt->mode != PromptMode::none)
        throw ConfigError("encoder prompting requires the scctc variant");
    return encode_interctc_only(tape, features, weights, drop);
}

// Full teacher-forcing pass: tokens start with sos; row t of the result is
// the next-token log distribution after tokens[0..t].
inline Tensor decoder_forward(Tape* tape, const std::vector<int>& tokens, const Tensor& enc_out,
                              const ModelWeights& w) {
    if (tokens.empty() || tokens.front() != w.vocab.sos_id)
        throw ContractError("decoder prefix must begin with sos");
    for (int id : tokens)
        if (id < 0 || id >= w.vocab.size())
            throw DimensionError("decoder token id out of range");
    const auto D = static_cast<std::size_t>(w.config.encoder.model_dim);
    Tensor x = scale(tape, gather_rows(tape, w.dec_embedding, tokens),
                     std::sqrt(static_cast<double>(D)));
    x = add(tape, x, detail::positional_encoding(tokens.size(), D));
    int layer_index = 0;
    for (const auto& l : w.decoder_layers) {
        Tensor h = layer_norm(tape, x, l.ln_self_g, l.ln_self_b);
        Tensor a = detail::attention_block(tape, h, h, l.self_attn, AttentionMask::causal);
        x = add(tape, x, a);
        Tensor hc = layer_norm(tape, x, l.ln_cross_g, l.ln_cross_b);
        Tensor c = detail::attention_block(tape, hc, enc_out, l.cross_attn, AttentionMask::none);
        x = add(tape, x, c);
        Tensor hf = layer_norm(tape, x, l.ln_ff_g, l.ln_ff_b);
        Tensor f = detail::feed_forward(tape, hf, l.w_ff1, l.b_ff1, l.w_ff2, l.b_ff2);
        x = add(tape, x, f);
        detail::check_finite(x, "decoder", ++layer_index);
    }
    x = layer_norm(tape, x, w.dec_final_ln_g, w.dec_final_ln_b);
    Tensor logits = add_row_broadcast(tape, matmul(tape, x, w.w_out), w.b_out);
    return log_softmax_lastdim(tape, logits);
}

// Next-token log distribution after the given prefix; pure function.
inline std::vector<double> decoder_step(const std::vector<int>& prefix, const Tensor& enc_out,
                                        const ModelWeights& w) {
    Tensor out = decoder_forward(nullptr, prefix, enc_out, w);
    const std::size_t V = out.dim(1);
    const std::size_t last = out.dim(0) - 1;
    std::vector<double> row(V);
    for (std::size_t k = 0; k < V; ++k) row[k] = out.at(last, k);
    return row;
}

// ----------------------------------------------------------------------------
// Checkpoint format: magic + text header (config, vocab) + raw little-endian
// float64 parameter blocks in declaration order. Round trips are bit-exact.

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'C', 'P', 'K', 'P', 'T', '0', '1'};

inline std::string checkpoint_header(const ModelWeights& w) {
    std::ostringstream os;
    os << "variant " << encoder_variant_name(w.config.variant) << "\n";
    os << "num_layers " << w.config.encoder.num_layers << "\n";
    os << "model_dim " << w.config.encoder.model_dim << "\n";
    os << "num_heads " << w.config.encoder.num_heads << "\n";
    os << "ff_dim " << w.config.encoder.ff_dim << "\n";
    os << "intermediate_layer_index " << w.config.encoder.intermediate_layer_index << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", w.config.encoder.dropout);
    os << "dropout " << buf << "\n";
    os << "decoder_layers " << w.config.decoder_layers << "\n";
    os << "feature_dim " << w.config.feature_dim << "\n";
    os << "blank_id " << w.vocab.blank_id << "\n";
    os << "sos_id " << w.vocab.sos_id << "\n";
    os << "eos_id " << w.vocab.eos_id << "\n";
    os << "lid_ids";
    for (int id : w.vocab.lid_ids) os << " " << id;
    os << "\n";
    os << "tokens";
    for (const auto& t : w.vocab.tokens) os << " " << t;
    os << "\n";
    return os.str();
}

}  // namespace detail

inline void save_checkpoint(const ModelWeights& weights, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    const std::string header = detail::checkpoint_header(weights);
    const std::uint64_t hlen = header.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    auto params = const_cast<ModelWeights&>(weights).parameters();
    for (const Tensor* p : params) {
        const std::uint64_t n = p->numel();
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(p->data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

inline ModelWeights load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError("bad checkpoint magic in " + path.string());
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen > (1u << 20)) throw IoError("bad checkpoint header length");
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("truncated checkpoint header");

    ModelConfig config;
    VocabSpec vocab;
    std::istringstream hs(header);
    std::string line;
    while (std::getline(hs, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "variant") {
            std::string v;
            ls >> v;
            config.variant = encoder_variant_from_name(v);
        } else if (key == "num_layers") ls >> config.encoder.num_layers;
        else if (key == "model_dim") ls >> config.encoder.model_dim;
        else if (key == "num_heads") ls >> config.encoder.num_heads;
        else if (key == "ff_dim") ls >> config.encoder.ff_dim;
        else if (key == "intermediate_layer_index") ls >> config.encoder.intermediate_layer_index;
        else if (key == "dropout") ls >> config.encoder.dropout;
        else if (key == "decoder_layers") ls >> config.decoder_layers;
        else if (key == "feature_dim") ls >> config.feature_dim;
        else if (key == "blank_id") ls >> vocab.blank_id;
        else if (key == "sos_id") ls >> vocab.sos_id;
        else if (key == "eos_id") ls >> vocab.eos_id;
        else if (key == "lid_ids") {
            int id;
            while (ls >> id) vocab.lid_ids.push_back(id);
        } else if (key == "tokens") {
            std::string tok;
            while (ls >> tok) vocab.tokens.push_back(tok);
        } else if (!key.empty()) {
            throw IoError("unknown checkpoint header key '" + key + "'");
        }
    }
    vocab.validate();
    config.validate();

    ModelWeights w = ModelWeights::init(config, vocab, /*seed=*/0);
    for (Tensor* p : w.parameters()) {
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (!in || n != p->numel())
            throw IoError("parameter block size mismatch in " + path.string());
        in.read(reinterpret_cast<char*>(p->data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw IoError("truncated parameter block in " + path.string());
    }
    char extra;
    if (in.read(&extra, 1)) throw IoError("trailing bytes in checkpoint " + path.string());
    for (Tensor* p : w.parameters())
        if (!p->all_finite()) throw IoError("non-finite parameters in checkpoint");
    return w;
}

}  // namespace scprompt

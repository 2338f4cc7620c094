#pragma once

// Training: multitask CTC + attention objective over LID-prefixed labels,
// optimised with a momentum-free adaptive step (Adagrad) under linear warmup.
// Batches are bucketed by length with a seed-fixed order, so runs with equal
// seeds produce identical weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/corpus.hpp"
#include "scprompt/ctc.hpp"
#include "scprompt/model.hpp"
#include "scprompt/rng.hpp"
#include "scprompt/tensor.hpp"

namespace scprompt {

struct TrainConfig {
    double ctc_weight = 0.3;       // alpha: CTC mass vs attention
    double interctc_weight = 0.3;  // beta: split of CTC mass to the middle head
    int epochs = 4;
    int batch_size = 16;
    double learning_rate = 0.01;
    double warmup_fraction = 0.1;
    std::uint64_t seed = 1;
    EncoderVariant variant = EncoderVariant::scctc;
    bool freeze_feedback = false;  // pin w_fb at zero for the whole run
    double dropout = 0.0;

    void validate() const {
        if (ctc_weight < 0.0 || ctc_weight > 1.0) throw ConfigError("ctc_weight in [0,1]");
        if (interctc_weight < 0.0 || interctc_weight > 1.0)
            throw ConfigError("interctc_weight in [0,1]");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
        if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
            throw ConfigError("warmup_fraction in [0,1]");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout in [0,1)");
    }
};

// J = (1-a)*J_attn + a*((1-b)*J_ctc + b*J_inter); the plain encoder has no
// intermediate head, so its beta term vanishes.
inline double multitask_loss(double attn_loss, double ctc_loss_final, double ctc_loss_inter,
                             double alpha, double beta, EncoderVariant variant) {
    if (!std::isfinite(attn_loss) || !std::isfinite(ctc_loss_final) ||
        (variant != EncoderVariant::plain && !std::isfinite(ctc_loss_inter)))
        throw NumericalError("non-finite component loss (attn=" + std::to_string(attn_loss) +
                             " ctc=" + std::to_string(ctc_loss_final) +
                             " inter=" + std::to_string(ctc_loss_inter) + ")");
    if (variant == EncoderVariant::plain)
        return (1.0 - alpha) * attn_loss + alpha * ctc_loss_final;
    return (1.0 - alpha) * attn_loss +
           alpha * ((1.0 - beta) * ctc_loss_final + beta * ctc_loss_inter);
}

struct TrainLog {
    std::vector<double> epoch_avg_loss;
    int total_steps = 0;
    bool aborted = false;
    std::string abort_reason;
};

struct TrainResult {
    ModelWeights weights;
    TrainLog log;
};

namespace detail {

// Momentum-free adaptive step: a leaky per-coordinate second-moment
// estimate scales each update (RMSProp).
class AdaptiveStep {
public:
    AdaptiveStep(std::vector<Tensor*> params, double lr, double decay = 0.98)
        : params_(std::move(params)), lr_(lr), decay_(decay) {
        for (auto* p : params_) accum_.emplace_back(p->numel(), 0.0);
    }

    void step(double lr_scale, const Tensor* frozen) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = *params_[i];
            if (&p == frozen || !p.has_grad()) continue;
            const auto& g = p.grad_vec();
            auto& acc = accum_[i];
            const double lr = lr_ * lr_scale;
            for (std::size_t j = 0; j < g.size(); ++j) {
                acc[j] = decay_ * acc[j] + (1.0 - decay_) * g[j] * g[j];
                p.data()[j] -= lr * g[j] / (std::sqrt(acc[j]) + 1e-8);
            }
        }
    }

private:
    std::vector<Tensor*> params_;
    std::vector<std::vector<double>> accum_;
    double lr_;
    double decay_;
};

// In-graph multitask objective for one utterance.
inline Tensor utterance_loss(Tape* tape, const Corpus& corpus, const Utterance& utt,
                             ModelWeights& weights, const TrainConfig& cfg,
                             DropoutState* drop) {
    const auto features = corpus.features_of(utt);
    const auto label = corpus.label_of(utt);
    EncodeResult enc = encode_model(tape, features, weights, nullptr, drop);

    // Components are normalised per token so the loss scale is independent
    // of utterance length; the adaptive optimizer depends on that.
    const double inv_len = 1.0 / static_cast<double>(label.size());
    Tensor j_ctc = scale(
        tape, ctc_loss_op(tape, enc.final_ctc_log_probs, label, corpus.vocab.blank_id), inv_len);

    std::vector<int> dec_in{corpus.vocab.sos_id};
    dec_in.insert(dec_in.end(), label.begin(), label.end());
    std::vector<int> targets = label;
    targets.push_back(corpus.vocab.eos_id);
    Tensor dec_lp = decoder_forward(tape, dec_in, enc.final_hidden, weights);
    Tensor j_attn = scale(tape, nll_pick(tape, dec_lp, targets),
                          1.0 / static_cast<double>(targets.size()));

    const double alpha = cfg.ctc_weight;
    if (cfg.variant == EncoderVariant::plain)
        return add(tape, scale(tape, j_attn, 1.0 - alpha), scale(tape, j_ctc, alpha));

    const double beta = cfg.interctc_weight;
    Tensor j_inter = scale(
        tape, ctc_loss_op(tape, enc.inter_log_probs, label, corpus.vocab.blank_id), inv_len);
    Tensor ctc_mix = add(tape, scale(tape, j_ctc, 1.0 - beta), scale(tape, j_inter, beta));
    return add(tape, scale(tape, j_attn, 1.0 - alpha), scale(tape, ctc_mix, alpha));
}

}  // namespace detail

inline TrainResult train(const Corpus& corpus, const ModelConfig& model_cfg,
                         const TrainConfig& cfg) {
    cfg.validate();
    ModelConfig mc = model_cfg;
    mc.variant = cfg.variant;
    mc.encoder.dropout = cfg.dropout;
    mc.feature_dim = corpus.manifest.feature_dim;

    TrainResult result{ModelWeights::init(mc, corpus.vocab, cfg.seed), {}};
    ModelWeights& weights = result.weights;
    if (cfg.freeze_feedback)  // pinned at zero: scctc forward degenerates to interctc
        std::fill(weights.w_fb.data(), weights.w_fb.data() + weights.w_fb.numel(), 0.0);
    weights.set_requires_grad(true);

    // Length-bucketed batches in a seed-fixed order.
    const auto& train_utts = corpus.split("train");
    if (train_utts.empty()) throw ConfigError("empty training split");
    std::vector<std::size_t> order(train_utts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (train_utts[a].num_frames != train_utts[b].num_frames)
            return train_utts[a].num_frames < train_utts[b].num_frames;
        return train_utts[a].id < train_utts[b].id;
    });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
        batches.emplace_back(order.begin() + static_cast<long>(i),
                             order.begin() + static_cast<long>(end));
    }

    const int total_steps = static_cast<int>(batches.size()) * cfg.epochs;
    const int warmup_steps =
        std::max(1, static_cast<int>(std::ceil(cfg.warmup_fraction * total_steps)));
    detail::AdaptiveStep opt(weights.parameters(), cfg.learning_rate);
    Rng dropout_rng = Rng::keyed(cfg.seed, "dropout");
    DropoutState drop{&dropout_rng, cfg.dropout};
    DropoutState* drop_ptr = cfg.dropout > 0.0 ? &drop : nullptr;

    ModelWeights last_good = weights.clone();  // epoch-boundary snapshot
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::keyed(cfg.seed, "batch-order-" + std::to_string(epoch));
        std::vector<std::size_t> batch_order(batches.size());
        for (std::size_t i = 0; i < batch_order.size(); ++i) batch_order[i] = i;
        for (std::size_t i = batch_order.size(); i > 1; --i)
            std::swap(batch_order[i - 1], batch_order[shuffle_rng.below(i)]);

        double epoch_loss = 0.0;
        std::size_t epoch_examples = 0;
        for (std::size_t bi : batch_order) {
            const auto& batch = batches[bi];
            Tape tape;
            Tensor total = Tensor::scalar(0.0);
            double loss_value = std::numeric_limits<double>::quiet_NaN();
            Tensor loss;
            try {
                for (std::size_t ui : batch)
                    total = add(&tape, total,
                                detail::utterance_loss(&tape, corpus, train_utts[ui], weights,
                                                       cfg, drop_ptr));
                loss = scale(&tape, total, 1.0 / static_cast<double>(batch.size()));
                loss_value = loss.value();
            } catch (const NumericalError& e) {
                result.weights = std::move(last_good);
                result.log.aborted = true;
                result.log.abort_reason = std::string("diverged at step ") +
                                          std::to_string(step) + ": " + e.what();
                return result;
            }
            if (!std::isfinite(loss_value)) {
                result.weights = std::move(last_good);
                result.log.aborted = true;
                result.log.abort_reason =
                    "non-finite loss at step " + std::to_string(step) + "; restored last epoch";
                return result;
            }
            epoch_loss += loss_value * static_cast<double>(batch.size());
            epoch_examples += batch.size();
            backward(loss, tape);
            const double warm = std::min(1.0, static_cast<double>(step + 1) /
                                                  static_cast<double>(warmup_steps));
            opt.step(warm, cfg.freeze_feedback ? &weights.w_fb : nullptr);
            weights.clear_grads();
            ++step;
        }
        result.log.epoch_avg_loss.push_back(epoch_loss / static_cast<double>(epoch_examples));
        last_good = weights.clone();
    }
    result.log.total_steps = step;
    weights.set_requires_grad(false);
    weights.clear_grads();
    return result;
}

}  // namespace scprompt

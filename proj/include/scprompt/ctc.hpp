#pragma once

// CTC machinery: log-space forward-backward loss with analytic gradients,
// alignment collapsing, greedy decoding, and incremental prefix scoring for
// joint beam search. Loss recursions follow Graves et al. (2006); prefix
// scoring follows the hybrid CTC/attention formulation of Hori et al. (2017).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/tensor.hpp"

namespace scprompt {

// Merge adjacent repeats, then delete blanks.
inline std::vector<int> collapse_alignment(const std::vector<int>& ids, int blank_id) {
    std::vector<int> out;
    int prev = blank_id;
    for (int id : ids) {
        if (id != prev && id != blank_id) out.push_back(id);
        prev = id;
    }
    return out;
}

// Minimum frame count that can realise a label: one frame per token plus a
// separating blank for every adjacent repeat.
inline std::size_t ctc_min_frames(const std::vector<int>& label) {
    std::size_t need = label.size();
    for (std::size_t i = 1; i < label.size(); ++i)
        if (label[i] == label[i - 1]) ++need;
    return need;
}

struct CtcLossResult {
    double loss = 0.0;                 // -log P(label | log_probs)
    std::vector<double> grad_log_probs;  // T×V, d loss / d log_probs
};

namespace detail {

inline void check_label(const std::vector<int>& label, int blank_id, std::size_t vocab) {
    if (label.empty()) throw ContractError("ctc label must be nonempty");
    for (int id : label) {
        if (id == blank_id) throw ContractError("ctc label contains blank");
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw DimensionError("ctc label id out of range");
    }
}

}  // namespace detail

inline CtcLossResult ctc_loss(const Tensor& log_probs, const std::vector<int>& label,
                              int blank_id) {
    if (log_probs.rank() != 2) throw DimensionError("ctc log_probs must be T×V");
    const std::size_t T = log_probs.dim(0);
    const std::size_t V = log_probs.dim(1);
    detail::check_label(label, blank_id, V);
    if (T < ctc_min_frames(label))
        throw InfeasibleAlignmentError("label needs " + std::to_string(ctc_min_frames(label)) +
                                       " frames, got " + std::to_string(T));

    // Extended label with interleaved blanks: blank l1 blank l2 ... blank.
    const std::size_t L = label.size();
    const std::size_t S = 2 * L + 1;
    std::vector<int> ext(S, blank_id);
    for (std::size_t i = 0; i < L; ++i) ext[2 * i + 1] = label[i];
    auto skip_allowed = [&](std::size_t s) {
        return s >= 2 && ext[s] != blank_id && ext[s] != ext[s - 2];
    };

    const double* lp = log_probs.data();
    auto logp = [&](std::size_t t, int k) { return lp[t * V + static_cast<std::size_t>(k)]; };

    std::vector<double> alpha(T * S, kLogZero), beta(T * S, kLogZero);
    alpha[0 * S + 0] = logp(0, ext[0]);
    if (S > 1) alpha[0 * S + 1] = logp(0, ext[1]);
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            double a = alpha[(t - 1) * S + s];
            if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
            if (skip_allowed(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
            alpha[t * S + s] = a == kLogZero ? kLogZero : a + logp(t, ext[s]);
        }
    }

    double log_p = alpha[(T - 1) * S + S - 1];
    if (S > 1) log_p = log_add(log_p, alpha[(T - 1) * S + S - 2]);
    if (log_p == kLogZero)
        throw InfeasibleAlignmentError("label has zero-probability support");

    // beta_t(s) excludes the emission at t, so alpha*beta is a true posterior.
    beta[(T - 1) * S + S - 1] = 0.0;
    if (S > 1) beta[(T - 1) * S + S - 2] = 0.0;
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t s = 0; s < S; ++s) {
            double b = beta[(t + 1) * S + s] + logp(t + 1, ext[s]);
            if (s + 1 < S)
                b = log_add(b, beta[(t + 1) * S + s + 1] + logp(t + 1, ext[s + 1]));
            if (s + 2 < S && skip_allowed(s + 2))
                b = log_add(b, beta[(t + 1) * S + s + 2] + logp(t + 1, ext[s + 2]));
            beta[t * S + s] = b;
        }
    }

    CtcLossResult res;
    res.loss = -log_p;
    res.grad_log_probs.assign(T * V, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            const double g = alpha[t * S + s] + beta[t * S + s];
            if (g == kLogZero) continue;
            res.grad_log_probs[t * V + static_cast<std::size_t>(ext[s])] -= std::exp(g - log_p);
        }
    }
    return res;
}

// Exhaustive path-sum oracle: every |V|^T alignment is enumerated and those
// collapsing to the label contribute. Test-only scale guard on purpose.
inline double brute_force_ctc_loss(const Tensor& log_probs, const std::vector<int>& label,
                                   int blank_id) {
    if (log_probs.rank() != 2) throw DimensionError("ctc log_probs must be T×V");
    const std::size_t T = log_probs.dim(0);
    const std::size_t V = log_probs.dim(1);
    if (T > 8 || V > 6)
        throw SizeError("brute force bounds are T<=8, V<=6");
    detail::check_label(label, blank_id, V);

    double total = kLogZero;
    std::vector<int> path(T, 0);
    while (true) {
        if (collapse_alignment(path, blank_id) == label) {
            double lp = 0.0;
            for (std::size_t t = 0; t < T; ++t)
                lp += log_probs.at(t, static_cast<std::size_t>(path[t]));
            total = log_add(total, lp);
        }
        std::size_t pos = 0;
        while (pos < T && path[pos] == static_cast<int>(V) - 1) path[pos++] = 0;
        if (pos == T) break;
        ++path[pos];
    }
    if (total == kLogZero)
        throw InfeasibleAlignmentError("no alignment collapses to label");
    return -total;
}

struct GreedyDecodeResult {
    std::vector<int> label;
    std::vector<int> alignment;
};

// Per-frame argmax then collapse. Ties break toward the lowest token id so
// golden outputs stay stable.
inline GreedyDecodeResult ctc_greedy_decode(const Tensor& scores, int blank_id) {
    if (scores.rank() != 2) throw DimensionError("greedy decode input must be T×V");
    GreedyDecodeResult res;
    const std::size_t T = scores.dim(0), V = scores.dim(1);
    res.alignment.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < V; ++k)
            if (scores.at(t, k) > scores.at(t, best)) best = k;
        res.alignment.push_back(static_cast<int>(best));
    }
    res.label = collapse_alignment(res.alignment, blank_id);
    return res;
}

// Incremental CTC prefix scorer. A state carries, per frame, the log
// probability that the hypothesis prefix has been emitted exactly, split by
// whether the last frame was a non-blank (ends the prefix's last token) or a
// blank. Extending by one token costs O(T).
class CtcPrefixScorer {
public:
    struct State {
        std::vector<double> log_nb;  // prefix done, frame t emitted its last token
        std::vector<double> log_b;   // prefix done, frame t emitted blank
        int last_token = -1;         // -1 for the empty prefix
    };

    CtcPrefixScorer(const Tensor& log_probs, int blank_id)
        : T_(log_probs.dim(0)), V_(log_probs.dim(1)), blank_(blank_id),
          lp_(log_probs.data_vec()) {
        if (log_probs.rank() != 2) throw DimensionError("prefix scorer input must be T×V");
    }

    State initial_state() const {
        State s;
        s.log_nb.assign(T_, kLogZero);
        s.log_b.assign(T_, 0.0);
        double acc = 0.0;
        for (std::size_t t = 0; t < T_; ++t) {
            acc += logp(t, blank_);
            s.log_b[t] = acc;
        }
        return s;
    }

    // Log probability that the extended prefix is a prefix of the output.
    // Populates *next so the caller can keep extending incrementally.
    double extend(const State& s, int token, State* next) const {
        if (token == blank_) throw ContractError("cannot extend a prefix with blank");
        if (token < 0 || static_cast<std::size_t>(token) >= V_)
            throw DimensionError("prefix token out of range");
        next->log_nb.assign(T_, kLogZero);
        next->log_b.assign(T_, kLogZero);
        next->last_token = token;

        const bool repeat = token == s.last_token;
        const bool empty_prefix = s.last_token == -1;
        double score = kLogZero;
        for (std::size_t t = 0; t < T_; ++t) {
            // phi: prefix s complete at t-1 and able to start this token.
            double phi;
            if (t == 0) {
                phi = empty_prefix ? 0.0 : kLogZero;
            } else {
                phi = s.log_b[t - 1];
                if (!repeat) phi = log_add(phi, s.log_nb[t - 1]);
            }
            const double emit = logp(t, token);
            double nb = phi;
            if (t > 0) nb = log_add(nb, next->log_nb[t - 1]);  // stay on the same token
            next->log_nb[t] = nb == kLogZero ? kLogZero : nb + emit;
            double b = kLogZero;
            if (t > 0) b = log_add(next->log_b[t - 1], next->log_nb[t - 1]);
            next->log_b[t] = b == kLogZero ? kLogZero : b + logp(t, blank_);
            if (phi != kLogZero) score = log_add(score, phi + emit);
        }
        return score;
    }

    // Log probability that the output equals the state's prefix exactly.
    double complete(const State& s) const {
        return log_add(s.log_nb[T_ - 1], s.log_b[T_ - 1]);
    }

    double log_empty() const {
        double acc = 0.0;
        for (std::size_t t = 0; t < T_; ++t) acc += logp(t, blank_);
        return acc;
    }

    std::size_t num_frames() const { return T_; }

private:
    double logp(std::size_t t, int k) const { return lp_[t * V_ + static_cast<std::size_t>(k)]; }

    std::size_t T_, V_;
    int blank_;
    std::vector<double> lp_;
};

// One-shot convenience over the incremental scorer.
inline double ctc_prefix_score(const Tensor& log_probs, const std::vector<int>& prefix,
                               int blank_id) {
    CtcPrefixScorer scorer(log_probs, blank_id);
    auto state = scorer.initial_state();
    double score = 0.0;
    for (int token : prefix) {
        CtcPrefixScorer::State next;
        score = scorer.extend(state, token, &next);
        state = std::move(next);
    }
    return score;
}

// Tape-integrated CTC loss: forward computes loss and caches the analytic
// gradient; backward scatters it into log_probs.
inline Tensor ctc_loss_op(Tape* tape, const Tensor& log_probs, const std::vector<int>& label,
                          int blank_id) {
    CtcLossResult res = ctc_loss(log_probs, label, blank_id);
    Tensor out = Tensor::scalar(res.loss);
    if (tape && log_probs.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([ln = log_probs.node(), on = out.node(), grad = std::move(res.grad_log_probs)] {
            if (detail::out_grad_missing(on)) return;
            const double g = on->grad[0];
            auto& gl = detail::acc_grad(ln);
            for (std::size_t i = 0; i < grad.size(); ++i) gl[i] += g * grad[i];
        });
    }
    return out;
}

}  // namespace scprompt

#pragma once

// Shared helpers for the test suites: finite-difference gradient checking and
// random simplex/lattice generators.

#include <cmath>
#include <functional>
#include <vector>

#include "scprompt/lattice.hpp"
#include "scprompt/rng.hpp"
#include "scprompt/tensor.hpp"

namespace scprompt::testing {

// |a-b| must not exceed tol * max(1, |a|, |b|).
inline bool close_rel(double a, double b, double tol) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) <= tol * scale;
}

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
};

// Central finite differences against reverse-mode gradients. `forward` must
// rebuild the graph from the parameter tensors and return the scalar loss;
// `grads` are read from the parameters after one reverse sweep done by the
// caller.
inline GradCheckReport finite_difference_check(
    const std::function<double()>& forward, const std::vector<Tensor*>& params,
    const std::vector<std::vector<double>>& analytic, double h = 1e-5) {
    GradCheckReport rep;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + h;
            const double up = forward();
            t.data()[i] = saved - h;
            const double down = forward();
            t.data()[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = analytic[p].empty() ? 0.0 : analytic[p][i];
            const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
            const double rel = std::abs(fd - an) / scale;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = false) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// Random simplex row via normalized exponentials.
inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
    std::vector<double> row(n);
    double sum = 0.0;
    for (auto& v : row) {
        v = -std::log(1.0 - rng.uniform());
        sum += v;
    }
    for (auto& v : row) v /= sum;
    return row;
}

inline PosteriorLattice random_lattice(Rng& rng, std::size_t t, std::size_t v) {
    PosteriorLattice l(t, v);
    for (std::size_t i = 0; i < t; ++i) {
        auto row = random_simplex(rng, v);
        std::copy(row.begin(), row.end(), l.row(i));
    }
    return l;
}

// Row-stochastic log-probability tensor (T×V).
inline Tensor random_log_probs(Rng& rng, std::size_t t, std::size_t v) {
    PosteriorLattice l = random_lattice(rng, t, v);
    Tensor out({t, v});
    for (std::size_t i = 0; i < t * v; ++i) out.data()[i] = std::log(l.probs[i]);
    return out;
}

}  // namespace scprompt::testing

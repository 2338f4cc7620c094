#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scprompt/common.hpp"
#include "scprompt/tensor.hpp"

namespace scprompt {

// Per-frame token probability distributions p_t(k); the object all prompting
// operators act on. Rows are probability simplexes.
struct PosteriorLattice {
    std::size_t num_frames = 0;
    std::size_t vocab_size = 0;
    std::vector<double> probs;  // row-major T×V

    PosteriorLattice() = default;
    PosteriorLattice(std::size_t t, std::size_t v)
        : num_frames(t), vocab_size(v), probs(t * v, 0.0) {}

    double& at(std::size_t t, std::size_t k) { return probs[t * vocab_size + k]; }
    double at(std::size_t t, std::size_t k) const { return probs[t * vocab_size + k]; }

    const double* row(std::size_t t) const { return probs.data() + t * vocab_size; }
    double* row(std::size_t t) { return probs.data() + t * vocab_size; }

    void validate(double tol = 1e-8) const {
        for (std::size_t t = 0; t < num_frames; ++t) {
            double sum = 0.0;
            for (std::size_t k = 0; k < vocab_size; ++k) {
                const double p = at(t, k);
                if (p < 0.0 || !std::isfinite(p))
                    throw NumericalError("lattice entry invalid at frame " + std::to_string(t));
                sum += p;
            }
            if (std::abs(sum - 1.0) > tol)
                throw NumericalError("lattice row " + std::to_string(t) +
                                     " sums to " + std::to_string(sum));
        }
    }

    static PosteriorLattice from_tensor(const Tensor& t) {
        if (t.rank() != 2) throw DimensionError("lattice tensor must be rank-2");
        PosteriorLattice l(t.dim(0), t.dim(1));
        l.probs = t.data_vec();
        return l;
    }

    Tensor to_tensor() const {
        return Tensor::from_data({num_frames, vocab_size}, probs);
    }
};

// Dump format shared by the CLI filter and golden tests:
//   line 1: "T V", then T lines of V decimal probabilities.
// %.17g keeps doubles exact through a round trip.
inline void save_lattice_dump(const PosteriorLattice& l, std::ostream& out) {
    out << l.num_frames << " " << l.vocab_size << "\n";
    char buf[64];
    for (std::size_t t = 0; t < l.num_frames; ++t) {
        for (std::size_t k = 0; k < l.vocab_size; ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", l.at(t, k));
            if (k) out << ' ';
            out << buf;
        }
        out << '\n';
    }
}

inline void save_lattice_dump(const PosteriorLattice& l, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    save_lattice_dump(l, out);
    if (!out) throw IoError("write failed for " + path.string());
}

inline PosteriorLattice load_lattice_dump(std::istream& in) {
    std::size_t t = 0, v = 0;
    if (!(in >> t >> v)) throw IoError("bad lattice dump header");
    PosteriorLattice l(t, v);
    for (std::size_t i = 0; i < t * v; ++i)
        if (!(in >> l.probs[i])) throw IoError("truncated lattice dump");
    return l;
}

inline PosteriorLattice load_lattice_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return load_lattice_dump(in);
}

}  // namespace scprompt

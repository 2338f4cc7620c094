#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace scprompt {

// Error hierarchy. Everything user-facing derives from Error so the CLI can
// catch one type; the specific classes matter for tests.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error("dimension error: " + msg) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error("numerical error: " + msg) {}
};

class InfeasibleAlignmentError : public Error {
public:
    explicit InfeasibleAlignmentError(const std::string& msg)
        : Error("infeasible alignment: " + msg) {}
};

class SizeError : public Error {
public:
    explicit SizeError(const std::string& msg) : Error("size error: " + msg) {}
};

class PromptError : public Error {
public:
    explicit PromptError(const std::string& msg) : Error("prompt error: " + msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

class DecodeError : public Error {
public:
    explicit DecodeError(const std::string& msg) : Error("decode error: " + msg) {}
};

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without overflow; handles -inf identities.
inline double log_add(double a, double b) {
    if (a == kLogZero) return b;
    if (b == kLogZero) return a;
    const double hi = a > b ? a : b;
    const double lo = a > b ? b : a;
    return hi + std::log1p(std::exp(lo - hi));
}

// FNV-1a over raw bytes; used for content checksums and id hashing.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace scprompt

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace offgrid {

using prec_t = double;
using numvec = std::vector<prec_t>;

/// Broad failure categories. The CLI maps each one to its own exit code.
enum class ErrorKind { ingestion, validation, solver, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Malformed or inconsistent input data (CSV schema, values, missing hours).
class IngestError : public Error {
public:
    explicit IngestError(const std::string& what) : Error(ErrorKind::ingestion, what) {}
};

/// Invalid model, reward or solver configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

/// A transition graph that violates the single-root cycle structure, or a
/// matrix that is not stochastic.
class StructureError : public Error {
public:
    StructureError(const std::string& what, std::size_t from = npos, std::size_t to = npos)
        : Error(ErrorKind::validation, what), from_(from), to_(to) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    /// Offending arc (state ordinals), npos when not applicable.
    std::size_t from() const noexcept { return from_; }
    std::size_t to() const noexcept { return to_; }

private:
    std::size_t from_;
    std::size_t to_;
};

class SolverError : public Error {
public:
    explicit SolverError(const std::string& what) : Error(ErrorKind::solver, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(prec_t v) noexcept {
        const prec_t t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    prec_t value() const noexcept { return sum_ + comp_; }

private:
    prec_t sum_ = 0.0;
    prec_t comp_ = 0.0;
};

inline prec_t span_seminorm(std::span<const prec_t> v) {
    if (v.empty()) return 0.0;
    prec_t lo = v[0], hi = v[0];
    for (prec_t x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return hi - lo;
}

inline prec_t max_abs_diff(std::span<const prec_t> a, std::span<const prec_t> b) {
    if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
    prec_t m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace offgrid

// core.hpp
//
// Shared vocabulary for the loc library: size vectors, the error hierarchy,
// named RNG substreams and a small deterministic parallel-for.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace loc {

inline constexpr const char* kVersion = "1.0.0";

/// Data amounts, one entry per data source (a length-1 vector when K = 1).
using Sizes = std::vector<double>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A documented precondition or type invariant was violated by the caller.
struct PreconditionError : Error {
    using Error::Error;
};

/// A curve formula is undefined at the requested point.
struct DomainError : Error {
    using Error::Error;
};

/// Every bootstrap resample was censored away.
struct AllCensored : Error {
    using Error::Error;
};

/// Theorem-style analytic solution requires a strictly increasing cdf.
struct AssumptionViolated : Error {
    using Error::Error;
};

struct CalibrationImpossible : Error {
    using Error::Error;
};

struct NonMonotoneGenerator : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

/// File-level parse failure; `line()` is 1-based (0 when not line specific).
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct DuplicateSize : ParseError {
    using ParseError::ParseError;
};

struct IncompleteGrid : ParseError {
    using ParseError::ParseError;
};

struct IoError : Error {
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw PreconditionError(message);
}

inline double dot(const Sizes& a, const Sizes& b) {
    require(a.size() == b.size(), "dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double total(const Sizes& q) { return std::accumulate(q.begin(), q.end(), 0.0); }

/// a >= b in every coordinate.
inline bool dominates(const Sizes& a, const Sizes& b) {
    require(a.size() == b.size(), "dominates: dimension mismatch");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] >= b[i])) return false;
    return true;
}

inline Sizes elementwise_max(const Sizes& a, const Sizes& b) {
    require(a.size() == b.size(), "elementwise_max: dimension mismatch");
    Sizes out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
    return out;
}

// 64-bit FNV-1a, used only to turn stream names into seed material.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent generator for the named substream `(seed, stream, index)`.
/// Different names or indices never share state, so adding a consumer of
/// randomness elsewhere leaves every other stream unchanged.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
    const std::uint64_t name = fnv1a(stream);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(name), static_cast<std::uint32_t>(name >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

/// Derives a child seed from a named substream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
    auto gen = substream(seed, stream, index);
    return gen();
}

/// Runs body(i) for i in [0, n) on up to `workers` threads. Iterations must
/// write only to their own slot; the first exception by index is rethrown.
template <class Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t count = std::min(workers, n);
    pool.reserve(count);
    for (std::size_t w = 0; w < count; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace loc

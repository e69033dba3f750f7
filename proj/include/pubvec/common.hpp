#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace pubvec {

/// PubMed identifier. Zero is never a valid PMID.
struct Pmid {
    std::uint64_t value = 0;

    constexpr Pmid() = default;
    constexpr explicit Pmid(std::uint64_t v) : value(v) {}

    constexpr bool valid() const { return value != 0; }
    auto operator<=>(const Pmid&) const = default;
};

inline std::string to_string(Pmid id) { return std::to_string(id.value); }

// Error hierarchy. Everything thrown by the library derives from Error.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t byte_offset)
        : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), offset_(byte_offset) {}
    explicit ParseError(const std::string& what) : Error(what), offset_(0) {}

    std::uint64_t byte_offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

/// Seeded generator used everywhere reproducibility matters. The bounded
/// draws avoid std::uniform_*_distribution so sequences are identical
/// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t index(std::uint64_t n) {
        // Lemire's multiply-shift with rejection.
        unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(engine_()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Uniform double in [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
    std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a salt.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace pubvec

template <>
struct std::hash<pubvec::Pmid> {
    std::size_t operator()(pubvec::Pmid id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};

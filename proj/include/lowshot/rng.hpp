#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace lowshot {

// splitmix64 finalizer; used for seeding and for hashing seed tuples.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

// Order-sensitive hash of a list of 64-bit words into a seed.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept;

// FNV-1a, for mixing names into seeds.
std::uint64_t hash_string(const char* s, std::size_t n) noexcept;

// xoshiro256** seeded through splitmix64. All distributions are implemented
// here rather than with <random> so that streams are identical on every
// platform and standard library.
class SeededRng {
public:
    using result_type = std::uint64_t;

    explicit SeededRng(std::uint64_t seed) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept { return next(); }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next() noexcept;
    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, bound). bound must be >= 1.
    std::uint64_t below(std::uint64_t bound) noexcept;
    // Standard normal (Marsaglia polar method).
    double normal() noexcept;

    // Fork an independent stream.
    SeededRng split() noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lowshot
